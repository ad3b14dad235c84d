//! Stage two: a progressive x2-per-level super-resolution generator with
//! self-conditioned blocks, its mirrored HR discriminator, and losses.

pub mod block;
pub mod discriminator;
pub mod losses;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::imageops::{self, ConvSpec, ResizeKind, DEFAULT_LEAKY_SLOPE};
use crate::params::{rng_for, Binder, ParamStore, WeightInit, CONV_GAIN, HEAD_GAIN};
use crate::tensor::{Scalar, Shape, Tensor};

pub use block::{normalize, self_cond_norm};
pub use discriminator::discriminate;
pub use losses::{
    hinge_d_loss, hinge_g_loss, loss_adv_hr, loss_r1, loss_rec, loss_rec_cycle, r1_penalty,
    stage2_total,
};

pub const G_PREFIX: &str = "g.";
pub const D_PREFIX: &str = "d.";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrNetConfig {
    /// Width of the stem and of level 1; each further level halves it.
    pub base_width: usize,
    pub blocks_per_level: usize,
    /// Target upscaling factor: 2, 4 or 8.
    pub final_scale: u32,
    pub eps: f64,
}

impl Default for SrNetConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            blocks_per_level: 2,
            final_scale: 4,
            eps: 1e-5,
        }
    }
}

impl SrNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.blocks_per_level == 0 {
            return Err(Error::Config(
                "base_width and blocks_per_level must be positive".into(),
            ));
        }
        if !matches!(self.final_scale, 2 | 4 | 8) {
            return Err(Error::Config(format!(
                "final_scale must be 2, 4 or 8, got {}",
                self.final_scale
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }

    pub fn final_levels(&self) -> u32 {
        self.final_scale.trailing_zeros()
    }

    /// Channel width of level `level` (1-based); level 0 is the stem.
    pub fn width(&self, level: u32) -> usize {
        (self.base_width >> level.saturating_sub(1)).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressiveState {
    pub active_levels: u32,
    pub final_scale: u32,
    /// Iterations at which one more level is appended.
    pub grow_steps: Vec<u64>,
    /// Length of the linear fade-in of a new level; 0 switches hard.
    pub fade_steps: u64,
    pub last_grow: Option<u64>,
}

impl ProgressiveState {
    pub fn new(final_scale: u32, grow_steps: Vec<u64>, fade_steps: u64) -> Result<Self> {
        let s = Self {
            active_levels: 1,
            final_scale,
            grow_steps,
            fade_steps,
            last_grow: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.final_scale, 2 | 4 | 8) {
            return Err(Error::Config(format!(
                "final_scale must be 2, 4 or 8, got {}",
                self.final_scale
            )));
        }
        if self.grow_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "grow_steps must be strictly increasing".into(),
            ));
        }
        let needed = self.final_levels() - 1;
        if self.grow_steps.len() as u32 != needed {
            return Err(Error::Config(format!(
                "final_scale {} needs {needed} grow steps, got {}",
                self.final_scale,
                self.grow_steps.len()
            )));
        }
        if self.active_levels == 0 || self.active_levels > self.final_levels() {
            return Err(Error::Config(format!(
                "active_levels {} out of range",
                self.active_levels
            )));
        }
        Ok(())
    }

    pub fn final_levels(&self) -> u32 {
        self.final_scale.trailing_zeros()
    }

    pub fn scale(&self) -> u32 {
        1 << self.active_levels
    }

    /// Number of levels that should be active at iteration `iter`.
    pub fn levels_at(&self, iter: u64) -> u32 {
        1 + self.grow_steps.iter().filter(|&&g| g <= iter).count() as u32
    }

    /// Blend weight of the newest level at `iter`, if a fade is running.
    pub fn fade_alpha(&self, iter: u64) -> Option<f64> {
        let g = self.last_grow?;
        if self.fade_steps == 0 || iter < g || iter - g >= self.fade_steps {
            return None;
        }
        Some((iter - g + 1) as f64 / self.fade_steps as f64)
    }
}

fn add_g_level<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &SrNetConfig,
    level: u32,
    seed: u64,
) -> Result<()> {
    let mut rng = rng_for(seed, &format!("sr.g.level{level}"));
    let (w_in, w) = (cfg.width(level - 1), cfg.width(level));
    for k in 0..cfg.blocks_per_level {
        let name = format!("g.l{level}.b{k}");
        let cin = if k == 0 { w_in } else { w };
        store.add_conv(
            &format!("{name}.conv"),
            ConvSpec::same(cin, w, 3),
            CONV_GAIN,
            WeightInit::Normal,
            &mut rng,
        );
        block::init_cond_branch(store, &name, w, &mut rng)?;
    }
    store.add_conv(
        &format!("g.l{level}.rgb"),
        ConvSpec::same(w, 3, 1),
        HEAD_GAIN,
        WeightInit::Normal,
        &mut rng,
    );
    Ok(())
}

/// Register the stem, level 1 and the discriminator for level 1.
pub fn init_params<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &SrNetConfig,
    seed: u64,
) -> Result<()> {
    cfg.validate()?;
    let mut rng = rng_for(seed, "sr.g.stem");
    store.add_conv(
        "g.stem",
        ConvSpec::same(3, cfg.base_width, 3),
        CONV_GAIN,
        WeightInit::Normal,
        &mut rng,
    );
    add_g_level(store, cfg, 1, seed)?;
    discriminator::init_base(store, cfg, seed);
    discriminator::add_level(store, cfg, 1, seed);
    Ok(())
}

/// Append one level to both networks. Existing tensors are not touched.
pub fn grow<T: Scalar>(
    state: &mut ProgressiveState,
    store: &mut ParamStore<T>,
    cfg: &SrNetConfig,
    seed: u64,
    iter: u64,
) -> Result<()> {
    if state.active_levels >= state.final_levels() {
        return Err(Error::GrowPastFinal(state.final_scale));
    }
    let level = state.active_levels + 1;
    add_g_level(store, cfg, level, seed)?;
    discriminator::add_level(store, cfg, level, seed);
    state.active_levels = level;
    state.last_grow = Some(iter);
    Ok(())
}

fn up2<'t, T: Scalar>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    let (h, w) = x.shape().hw();
    imageops::resize(x, (2 * h, 2 * w), ResizeKind::Nearest)
}

fn level_dims(lr: Shape, level: u32) -> (usize, usize) {
    (lr.h() << level, lr.w() << level)
}

fn run_level<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    level: u32,
    h: Var<'t, T>,
    lr: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let w = cfg.width(level);
    let mut h = up2(h)?;
    let cond = imageops::resize(lr, level_dims(lr.shape(), level), ResizeKind::Bicubic)?;
    for k in 0..cfg.blocks_per_level {
        let name = format!("g.l{level}.b{k}");
        let cin = h.shape().c();
        let f = b.conv(&format!("{name}.conv"), h, ConvSpec::same(cin, w, 3))?;
        h = self_cond_norm(b, &name, f, cond, cfg.eps)?.leaky_relu(DEFAULT_LEAKY_SLOPE)?;
    }
    Ok(h)
}

fn to_rgb<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    level: u32,
    h: Var<'t, T>,
) -> Result<Var<'t, T>> {
    b.conv(
        &format!("g.l{level}.rgb"),
        h,
        ConvSpec::same(cfg.width(level), 3, 1),
    )?
    .tanh()
}

/// Upscale `lr_img` by `2^active_levels`. With `fade = Some(alpha)` the
/// newest level's RGB output is blended with the upsampled RGB output of the
/// previous level.
pub fn sr_forward<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    state: &ProgressiveState,
    lr_img: Var<'t, T>,
    fade: Option<f64>,
) -> Result<Var<'t, T>> {
    let s = lr_img.shape();
    if s.c() != 3 {
        return Err(Error::invalid(
            "sr_forward",
            format!("expected 3 channels, got {}", s.c()),
        ));
    }
    if state.active_levels == 0 {
        return Err(Error::invalid("sr_forward", "no active levels"));
    }
    let top = state.active_levels;
    let mut h = b
        .conv("g.stem", lr_img, ConvSpec::same(3, cfg.base_width, 3))?
        .leaky_relu(DEFAULT_LEAKY_SLOPE)?;
    let mut prev_rgb = None;
    for level in 1..=top {
        if level == top && top > 1 {
            if let Some(a) = fade {
                prev_rgb = Some((to_rgb(b, cfg, level - 1, h)?, a));
            }
        }
        h = run_level(b, cfg, level, h, lr_img)?;
    }
    let out = to_rgb(b, cfg, top, h)?;
    match prev_rgb {
        Some((prev, a)) => up2(prev)?.scale(1.0 - a)?.add(out.scale(a)?),
        None => Ok(out),
    }
}

/// Inference with frozen weights.
pub fn superresolve<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &SrNetConfig,
    state: &ProgressiveState,
    lr_img: &Tensor<T>,
) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let b = Binder::frozen(&tape, store);
    let x = tape.constant(lr_img.clone())?;
    Ok(sr_forward(&b, cfg, state, x, None)?.to_tensor())
}

/// Modulation maps of block `block` at `level` for the first sample of
/// `lr_img`, each min-max scaled to `[0, 1]` and shaped `(1, 1, h, w)`.
/// Constant channels map to zero.
pub fn dump_condition_features<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &SrNetConfig,
    state: &ProgressiveState,
    lr_img: &Tensor<T>,
    level: u32,
    block: usize,
) -> Result<Vec<Tensor<T>>> {
    if level == 0 || level > state.active_levels {
        return Err(Error::InactiveLevel {
            level,
            active: state.active_levels,
        });
    }
    if block >= cfg.blocks_per_level {
        return Err(Error::invalid(
            "dump_condition_features",
            format!(
                "block {block} out of range (blocks per level {})",
                cfg.blocks_per_level
            ),
        ));
    }
    let tape = Tape::new();
    let b = Binder::frozen(&tape, store);
    let x = tape.constant(lr_img.batch_slice(0, 1)?)?;
    let cond = imageops::resize(x, level_dims(x.shape(), level), ResizeKind::Bicubic)?;
    let gamma =
        block::cond_gamma(&b, &format!("g.l{level}.b{block}"), cond, cfg.width(level))?.to_tensor();
    let s = gamma.shape();
    let plane = s.h() * s.w();
    Ok(gamma
        .data()
        .chunks(plane)
        .map(|ch| {
            let lo = ch.iter().copied().fold(T::infinity(), T::min);
            let hi = ch.iter().copied().fold(T::neg_infinity(), T::max);
            let span = hi - lo;
            let data = ch
                .iter()
                .map(|&v| {
                    if span > T::zero() {
                        (v - lo) / span
                    } else {
                        T::zero()
                    }
                })
                .collect();
            Tensor::new(Shape::new(1, 1, s.h(), s.w()), data).expect("plane size")
        })
        .collect())
}
