//! Stage one: a flow-field degradation generator that turns clean LR faces
//! into realistic noisy ones, plus its LR discriminator and losses.
//!
//! The generator predicts an RGB image (the *intermediate*) and a bounded
//! pixel flow; the output is the intermediate warped by that flow.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::imageops::{
    self, warp, ConvSpec, ResizeKind, SamplingKernelConfig, DEFAULT_LEAKY_SLOPE,
};
use crate::losses::{self, LossWeights};
use crate::params::{rng_for, Binder, ParamStore, WeightInit, CONV_GAIN, HEAD_GAIN};
use crate::tensor::{Axes, Scalar, Tensor};

pub const G_PREFIX: &str = "g.";
pub const D_PREFIX: &str = "d.";

/// Log floor for the vanilla adversarial loss.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeNetConfig {
    pub base_width: usize,
    /// Bound on each flow component, in pixels.
    pub max_disp: f64,
}

impl Default for DegradeNetConfig {
    fn default() -> Self {
        Self {
            base_width: 32,
            max_disp: 2.0,
        }
    }
}

impl DegradeNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if !(self.max_disp.is_finite() && self.max_disp > 0.0) {
            return Err(Error::Config(format!(
                "max_disp must be positive, got {}",
                self.max_disp
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowField<'t, T: Scalar> {
    /// `(n, 2, h, w)`: channel 0 horizontal, channel 1 vertical.
    pub offsets: Var<'t, T>,
    pub max_disp: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DegradationOutput<'t, T: Scalar> {
    pub intermediate: Var<'t, T>,
    pub flow: FlowField<'t, T>,
    pub degraded: Var<'t, T>,
}

/// Detached copy of a [`DegradationOutput`].
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSnapshot<T> {
    pub intermediate: Tensor<T>,
    pub flow: Tensor<T>,
    pub degraded: Tensor<T>,
    pub max_disp: f64,
}

impl<'t, T: Scalar> DegradationOutput<'t, T> {
    pub fn snapshot(&self) -> DegradationSnapshot<T> {
        DegradationSnapshot {
            intermediate: self.intermediate.to_tensor(),
            flow: self.flow.offsets.to_tensor(),
            degraded: self.degraded.to_tensor(),
            max_disp: self.flow.max_disp,
        }
    }
}

fn specs(w: usize) -> [(&'static str, ConvSpec, f64, WeightInit); 7] {
    [
        (
            "g.enc0",
            ConvSpec::same(3, w, 3),
            CONV_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.enc1",
            ConvSpec::down(w, 2 * w),
            CONV_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.enc2",
            ConvSpec::down(2 * w, 4 * w),
            CONV_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.dec1",
            ConvSpec::same(4 * w, 2 * w, 3),
            CONV_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.dec0",
            ConvSpec::same(2 * w, w, 3),
            CONV_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.img",
            ConvSpec::same(w, 3, 3),
            HEAD_GAIN,
            WeightInit::Normal,
        ),
        (
            "g.flow",
            ConvSpec::same(w, 2, 3),
            HEAD_GAIN,
            WeightInit::Zero,
        ),
    ]
}

fn d_specs(w: usize) -> [(&'static str, ConvSpec, f64); 4] {
    [
        ("d.c0", ConvSpec::same(3, w, 3), CONV_GAIN),
        ("d.c1", ConvSpec::down(w, 2 * w), CONV_GAIN),
        ("d.c2", ConvSpec::down(2 * w, 4 * w), CONV_GAIN),
        ("d.out", ConvSpec::same(4 * w, 1, 1), HEAD_GAIN),
    ]
}

/// Register generator (`g.`) and discriminator (`d.`) parameters.
pub fn init_params<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &DegradeNetConfig,
    seed: u64,
) -> Result<()> {
    cfg.validate()?;
    let mut rng = rng_for(seed, "degrade.g");
    for (name, spec, gain, init) in specs(cfg.base_width) {
        store.add_conv(name, spec, gain, init, &mut rng);
    }
    let mut rng = rng_for(seed, "degrade.d");
    for (name, spec, gain) in d_specs(cfg.base_width) {
        store.add_conv(name, spec, gain, WeightInit::Normal, &mut rng);
    }
    Ok(())
}

fn up2<'t, T: Scalar>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    let (h, w) = x.shape().hw();
    imageops::resize(x, (2 * h, 2 * w), ResizeKind::Nearest)
}

fn act<'t, T: Scalar>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    x.leaky_relu(DEFAULT_LEAKY_SLOPE)
}

pub fn degrade_forward<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &DegradeNetConfig,
    clean_lr: Var<'t, T>,
) -> Result<DegradationOutput<'t, T>> {
    let s = clean_lr.shape();
    if s.c() != 3 {
        return Err(Error::invalid(
            "degrade_forward",
            format!("expected 3 channels, got {}", s.c()),
        ));
    }
    if !s.h().is_multiple_of(4) || !s.w().is_multiple_of(4) {
        return Err(Error::invalid(
            "degrade_forward",
            format!("spatial dims {}x{} must be divisible by 4", s.h(), s.w()),
        ));
    }
    let w = cfg.base_width;
    let e0 = act(b.conv("g.enc0", clean_lr, ConvSpec::same(3, w, 3))?)?;
    let e1 = act(b.conv("g.enc1", e0, ConvSpec::down(w, 2 * w))?)?;
    let e2 = act(b.conv("g.enc2", e1, ConvSpec::down(2 * w, 4 * w))?)?;
    let d1 = act(b.conv("g.dec1", up2(e2)?, ConvSpec::same(4 * w, 2 * w, 3))?)?.add(e1)?;
    let d0 = act(b.conv("g.dec0", up2(d1)?, ConvSpec::same(2 * w, w, 3))?)?.add(e0)?;
    let intermediate = b.conv("g.img", d0, ConvSpec::same(w, 3, 3))?.tanh()?;
    let offsets = b
        .conv("g.flow", d0, ConvSpec::same(w, 2, 3))?
        .tanh()?
        .scale(cfg.max_disp)?;
    let degraded = imageops::grid_sample(intermediate, offsets, SamplingKernelConfig::default())?;
    Ok(DegradationOutput {
        intermediate,
        flow: FlowField {
            offsets,
            max_disp: cfg.max_disp,
        },
        degraded,
    })
}

/// Raw (pre-sigmoid) patch-averaged scores, shape `(n, 1, 1, 1)`.
pub fn discriminate<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &DegradeNetConfig,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let mut h = x;
    for (i, (name, spec, _)) in d_specs(cfg.base_width).into_iter().enumerate() {
        h = b.conv(name, h, spec)?;
        if i < 3 {
            h = act(h)?;
        }
    }
    h.mean(Axes::SPATIAL)
}

/// Discriminator loss from raw scores: `-E log D(real) - E log(1 - D(fake))`.
pub fn vanilla_d_loss<'t, T: Scalar>(
    real_scores: Var<'t, T>,
    fake_scores: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let pr = real_scores.sigmoid()?;
    let pf = fake_scores.sigmoid()?;
    vanilla_d_loss_from_probs(pr, pf)
}

pub fn vanilla_d_loss_from_probs<'t, T: Scalar>(
    p_real: Var<'t, T>,
    p_fake: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let a = p_real.log_clamped(LOG_FLOOR)?.mean_all()?;
    let b = p_fake
        .neg()?
        .add_scalar(1.0)?
        .log_clamped(LOG_FLOOR)?
        .mean_all()?;
    a.add(b)?.neg()
}

/// Non-saturating generator loss `-E log D(fake)`.
pub fn vanilla_g_loss<'t, T: Scalar>(fake_scores: Var<'t, T>) -> Result<Var<'t, T>> {
    vanilla_g_loss_from_probs(fake_scores.sigmoid()?)
}

pub fn vanilla_g_loss_from_probs<'t, T: Scalar>(p_fake: Var<'t, T>) -> Result<Var<'t, T>> {
    p_fake.log_clamped(LOG_FLOOR)?.mean_all()?.neg()
}

/// Both adversarial terms. The real batch is detached for the generator
/// term; the caller decides which side's parameters are trainable.
pub fn loss_adv_lr<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &DegradeNetConfig,
    real_lr: Var<'t, T>,
    fake_lr: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let sr = discriminate(b, cfg, real_lr.detach()?)?;
    let sf = discriminate(b, cfg, fake_lr)?;
    Ok((vanilla_d_loss(sr, sf)?, vanilla_g_loss(sf)?))
}

pub fn loss_identity<'t, T: Scalar>(
    intermediate: Var<'t, T>,
    clean_lr: Var<'t, T>,
) -> Result<Var<'t, T>> {
    losses::l1(intermediate, clean_lr)
}

/// Mean absolute forward difference along width plus the same along
/// height, each averaged over its valid sites and both flow channels.
pub fn loss_smooth<'t, T: Scalar>(flow: &FlowField<'t, T>) -> Result<Var<'t, T>> {
    let f = flow.offsets;
    let dx = f.forward_diff(3)?.abs()?.mean_all()?;
    let dy = f.forward_diff(2)?.abs()?.mean_all()?;
    dx.add(dy)
}

pub fn stage1_total<'t, T: Scalar>(
    adv: Var<'t, T>,
    idt: Var<'t, T>,
    smooth: Var<'t, T>,
    w: &LossWeights,
) -> Result<Var<'t, T>> {
    adv.add(idt.scale(w.idt)?)?.add(smooth.scale(w.smooth)?)
}

/// Re-warp the intermediate image with Gaussian noise added to the flow.
pub fn perturb_flow<T: Scalar>(
    out: &DegradationSnapshot<T>,
    noise_std: f64,
    seed: u64,
) -> Result<Tensor<T>> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(
            "perturb_flow",
            format!("noise_std must be >= 0, got {noise_std}"),
        ));
    }
    let mut flow = out.flow.clone();
    if noise_std > 0.0 {
        let mut rng = rng_for(seed, "perturb");
        let m = out.max_disp;
        for v in flow.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = T::of((v.f64() + noise_std * z).clamp(-m, m));
        }
    }
    warp::grid_sample_forward(&out.intermediate, &flow, &SamplingKernelConfig::default())
}

/// Convenience: run the generator with all weights frozen.
pub fn degrade_tensor<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &DegradeNetConfig,
    clean_lr: &Tensor<T>,
) -> Result<DegradationSnapshot<T>> {
    let tape = Tape::new();
    let b = Binder::frozen(&tape, store);
    let x = tape.constant(clean_lr.clone())?;
    Ok(degrade_forward(&b, cfg, x)?.snapshot())
}
