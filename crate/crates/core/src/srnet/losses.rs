//! Adversarial, reconstruction and gradient-penalty terms of the SR stage.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::imageops::{self, ResizeKind};
use crate::losses::{self, LossWeights};
use crate::params::Binder;
use crate::tensor::{Scalar, Tensor};

use super::{discriminate, SrNetConfig};

/// `E relu(1 - D(real)) + E relu(1 + D(fake))` on raw scores.
pub fn hinge_d_loss<'t, T: Scalar>(real: Var<'t, T>, fake: Var<'t, T>) -> Result<Var<'t, T>> {
    let r = real.neg()?.add_scalar(1.0)?.relu()?.mean_all()?;
    let f = fake.add_scalar(1.0)?.relu()?.mean_all()?;
    r.add(f)
}

pub fn hinge_g_loss<'t, T: Scalar>(fake: Var<'t, T>) -> Result<Var<'t, T>> {
    fake.mean_all()?.neg()
}

/// Both hinge terms for images at the resolution of `levels`.
pub fn loss_adv_hr<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    levels: u32,
    real_hr: Var<'t, T>,
    fake_hr: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let sr = discriminate(b, cfg, levels, real_hr)?;
    let sf = discriminate(b, cfg, levels, fake_hr)?;
    Ok((hinge_d_loss(sr, sf)?, hinge_g_loss(sf)?))
}

pub fn loss_rec<'t, T: Scalar>(real_hr: Var<'t, T>, gen_hr: Var<'t, T>) -> Result<Var<'t, T>> {
    losses::l1(real_hr, gen_hr)
}

/// L1 between the bicubic downsample of `sr_out` and `clean_lr`; the
/// downsample is part of the graph.
pub fn loss_rec_cycle<'t, T: Scalar>(
    sr_out: Var<'t, T>,
    clean_lr: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let (hs, ls) = (sr_out.shape(), clean_lr.shape());
    let ratio_ok =
        |big: usize, small: usize| small > 0 && big >= small && big.is_multiple_of(small);
    if !ratio_ok(hs.h(), ls.h()) || !ratio_ok(hs.w(), ls.w()) || hs.h() / ls.h() != hs.w() / ls.w()
    {
        return Err(Error::invalid(
            "loss_rec_cycle",
            format!(
                "{}x{} is not an integer multiple of {}x{}",
                hs.h(),
                hs.w(),
                ls.h(),
                ls.w()
            ),
        ));
    }
    let down = imageops::resize(sr_out, ls.hw(), ResizeKind::Bicubic)?;
    losses::l1(down, clean_lr)
}

/// `(gamma / 2) * E ||grad_x D(x)||^2` at `x = real`, built with a
/// differentiable gradient so that parameter gradients flow through it.
/// Also returns the scores `D(real)` so callers can reuse them.
pub fn r1_penalty<'t, T: Scalar>(
    tape: &'t Tape<T>,
    real: &Tensor<T>,
    gamma: f64,
    d: impl FnOnce(Var<'t, T>) -> Result<Var<'t, T>>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let n = real.shape().n().max(1);
    let x = tape.param(real.clone())?;
    let scores = d(x)?;
    let gx = tape.grad_graph(scores.sum_all()?, &[x])?.remove(0);
    let pen = gx.square()?.sum_all()?.scale(gamma / 2.0 / n as f64)?;
    Ok((pen, scores))
}

/// R1 for the HR discriminator at the resolution of `levels`.
pub fn loss_r1<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    levels: u32,
    real_hr: &Tensor<T>,
    gamma: f64,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    r1_penalty(b.tape(), real_hr, gamma, |x| {
        discriminate(b, cfg, levels, x)
    })
}

/// `adv + rec_w * rec + r1_w * r1`; absent terms contribute nothing.
pub fn stage2_total<'t, T: Scalar>(
    adv: Var<'t, T>,
    rec: Option<Var<'t, T>>,
    r1: Option<Var<'t, T>>,
    w: &LossWeights,
) -> Result<Var<'t, T>> {
    let mut total = adv;
    if let Some(rec) = rec {
        total = total.add(rec.scale(w.rec)?)?;
    }
    if let Some(r1) = r1 {
        total = total.add(r1.scale(w.r1)?)?;
    }
    Ok(total)
}
