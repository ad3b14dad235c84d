//! Flow-field warping with a bilinear sampling kernel.
//!
//! Output pixel `(x, y)` reads the source image at `(x - dx, y - dy)` where
//! `(dx, dy)` are the two flow channels in pixel units. Sample positions
//! are clamped to the image rectangle before interpolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKernel {
    #[default]
    Bilinear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Border {
    #[default]
    ClampToEdge,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingKernelConfig {
    pub kind: SamplingKernel,
    pub border: Border,
}

pub(crate) fn check_shapes(img: Shape, flow: Shape) -> Result<()> {
    if flow != Shape::new(img.n(), 2, img.h(), img.w()) {
        return Err(Error::ShapeMismatch {
            op: "grid_sample",
            lhs: img,
            rhs: flow,
        });
    }
    Ok(())
}

/// Clamped sample position along one axis: `(i0, i1, frac, inside)`.
/// `inside` is false when the clamp was active, which zeroes the flow
/// gradient there.
#[inline]
fn locate<T: Scalar>(pos: usize, delta: T, len: usize) -> (usize, usize, T, bool) {
    let lim = T::of((len - 1) as f64);
    let s = T::of(pos as f64) - delta;
    let (s, inside) = if s < T::zero() {
        (T::zero(), false)
    } else if s > lim {
        (lim, false)
    } else {
        (s, true)
    };
    let i0 = s.floor().to_usize().unwrap_or(0).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - T::of(i0 as f64), inside)
}

pub fn grid_sample_forward<T: Scalar>(
    img: &Tensor<T>,
    flow: &Tensor<T>,
    _cfg: &SamplingKernelConfig,
) -> Result<Tensor<T>> {
    check_shapes(img.shape(), flow.shape())?;
    let [_, c, h, w] = img.shape().0;
    let mut out = Tensor::zeros(img.shape());
    let per = c * h * w;
    out.data_mut()
        .par_chunks_mut(per.max(1))
        .enumerate()
        .for_each(|(i, dst)| {
            let src = &img.data()[i * per..(i + 1) * per];
            let fl = &flow.data()[i * 2 * h * w..(i + 1) * 2 * h * w];
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let (x0, x1, fx, _) = locate(x, fl[p], w);
                    let (y0, y1, fy, _) = locate(y, fl[h * w + p], h);
                    let one = T::one();
                    let w00 = (one - fx) * (one - fy);
                    let w01 = fx * (one - fy);
                    let w10 = (one - fx) * fy;
                    let w11 = fx * fy;
                    for ch in 0..c {
                        let pl = &src[ch * h * w..(ch + 1) * h * w];
                        let v = pl[y0 * w + x0] * w00
                            + pl[y0 * w + x1] * w01
                            + pl[y1 * w + x0] * w10
                            + pl[y1 * w + x1] * w11;
                        dst[ch * h * w + p] = v;
                    }
                }
            }
        });
    Ok(out)
}

/// Vector-Jacobian product: returns `(d img, d flow)`.
pub fn grid_sample_backward<T: Scalar>(
    img: &Tensor<T>,
    flow: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_shapes(img.shape(), flow.shape())?;
    if g.shape() != img.shape() {
        return Err(Error::ShapeMismatch {
            op: "grid_sample_backward",
            lhs: g.shape(),
            rhs: img.shape(),
        });
    }
    let [_, c, h, w] = img.shape().0;
    let per = c * h * w;
    let mut dimg = Tensor::zeros(img.shape());
    let mut dflow = Tensor::zeros(flow.shape());
    dimg.data_mut()
        .par_chunks_mut(per.max(1))
        .zip(dflow.data_mut().par_chunks_mut((2 * h * w).max(1)))
        .enumerate()
        .for_each(|(i, (di, df))| {
            let src = &img.data()[i * per..(i + 1) * per];
            let gi = &g.data()[i * per..(i + 1) * per];
            let fl = &flow.data()[i * 2 * h * w..(i + 1) * 2 * h * w];
            let one = T::one();
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let (x0, x1, fx, in_x) = locate(x, fl[p], w);
                    let (y0, y1, fy, in_y) = locate(y, fl[h * w + p], h);
                    let mut ds_x = T::zero();
                    let mut ds_y = T::zero();
                    for ch in 0..c {
                        let o = ch * h * w;
                        let gv = gi[o + p];
                        let v00 = src[o + y0 * w + x0];
                        let v01 = src[o + y0 * w + x1];
                        let v10 = src[o + y1 * w + x0];
                        let v11 = src[o + y1 * w + x1];
                        di[o + y0 * w + x0] = di[o + y0 * w + x0] + gv * (one - fx) * (one - fy);
                        di[o + y0 * w + x1] = di[o + y0 * w + x1] + gv * fx * (one - fy);
                        di[o + y1 * w + x0] = di[o + y1 * w + x0] + gv * (one - fx) * fy;
                        di[o + y1 * w + x1] = di[o + y1 * w + x1] + gv * fx * fy;
                        ds_x = ds_x + gv * ((one - fy) * (v01 - v00) + fy * (v11 - v10));
                        ds_y = ds_y + gv * ((one - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                    // sample position = pixel - delta
                    if in_x {
                        df[p] = -ds_x;
                    }
                    if in_y {
                        df[h * w + p] = -ds_y;
                    }
                }
            }
        });
    Ok((dimg, dflow))
}
