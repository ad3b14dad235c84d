//! Differentiable image operators: convolution, resampling, flow warping,
//! and color conversion.

pub mod color;
pub mod conv;
pub mod resample;
pub mod warp;

use std::rc::Rc;

pub use color::{from_unit_range, rgb_to_y, to_unit_range};
pub use conv::ConvSpec;
pub use resample::{resize_tensor, ResizeKind, ResizePlan};
pub use warp::{Border, SamplingKernel, SamplingKernelConfig};

use crate::autodiff::{Op, Var};
use crate::error::Result;
use crate::tensor::Scalar;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Cross-correlation plus optional per-channel bias `(1, out, 1, 1)`.
pub fn conv2d<'t, T: Scalar>(
    x: Var<'t, T>,
    w: Var<'t, T>,
    b: Option<Var<'t, T>>,
    spec: ConvSpec,
) -> Result<Var<'t, T>> {
    let v = {
        let (xv, wv) = (x.value(), w.value());
        let bv = b.map(|b| b.value());
        conv::conv2d_forward(&xv, &wv, bv.as_deref(), &spec)?
    };
    x.record(
        v,
        Op::Conv {
            x: x.id(),
            w: w.id(),
            b: b.map(|b| b.id()),
            spec,
        },
    )
}

pub(crate) fn conv2d_input_grad<'t, T: Scalar>(
    g: Var<'t, T>,
    w: Var<'t, T>,
    spec: ConvSpec,
    in_hw: (usize, usize),
) -> Result<Var<'t, T>> {
    let v = conv::conv2d_input_grad(&g.value(), &w.value(), &spec, in_hw)?;
    g.record(
        v,
        Op::ConvInputGrad {
            g: g.id(),
            w: w.id(),
            spec,
        },
    )
}

pub(crate) fn conv2d_weight_grad<'t, T: Scalar>(
    x: Var<'t, T>,
    g: Var<'t, T>,
    spec: ConvSpec,
) -> Result<Var<'t, T>> {
    let v = conv::conv2d_weight_grad(&x.value(), &g.value(), &spec)?;
    x.record(
        v,
        Op::ConvWeightGrad {
            x: x.id(),
            g: g.id(),
            spec,
        },
    )
}

pub fn leaky_relu<'t, T: Scalar>(x: Var<'t, T>, slope: f64) -> Result<Var<'t, T>> {
    x.leaky_relu(slope)
}

/// Resample to `out_hw`. First-order differentiable only.
pub fn resize<'t, T: Scalar>(
    x: Var<'t, T>,
    out_hw: (usize, usize),
    kind: ResizeKind,
) -> Result<Var<'t, T>> {
    let plan = Rc::new(ResizePlan::new(x.shape(), out_hw, kind)?);
    let v = plan.apply(&x.value())?;
    x.record(v, Op::Resize { x: x.id(), plan })
}

/// Warp `img` by a pixel-unit flow `(n, 2, h, w)`; channel 0 is the
/// horizontal offset, channel 1 the vertical one. First-order only.
pub fn grid_sample<'t, T: Scalar>(
    img: Var<'t, T>,
    flow: Var<'t, T>,
    cfg: SamplingKernelConfig,
) -> Result<Var<'t, T>> {
    let v = warp::grid_sample_forward(&img.value(), &flow.value(), &cfg)?;
    img.record(
        v,
        Op::GridSample {
            img: img.id(),
            flow: flow.id(),
        },
    )
}
