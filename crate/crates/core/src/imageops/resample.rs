//! Separable resampling (nearest, bilinear, bicubic) with half-pixel centre
//! alignment and clamp-to-edge borders.
//!
//! Each axis is reduced to a sparse weight table mapping an output index to
//! a handful of `(input index, weight)` taps. The forward pass applies the
//! tables along width then height; the backward pass applies their
//! transposes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeKind {
    Nearest,
    Bilinear,
    Bicubic,
}

/// Keys cubic convolution constant.
pub const KEYS_A: f64 = -0.5;

/// Keys cubic kernel with `a = -0.5`.
pub fn keys_cubic(t: f64) -> f64 {
    let a = KEYS_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Continuous source coordinate of output sample `dst` under half-pixel
/// alignment.
pub fn source_coord(dst: usize, in_len: usize, out_len: usize) -> f64 {
    (dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5
}

#[derive(Clone, Debug)]
pub struct AxisPlan<T> {
    pub in_len: usize,
    pub out_len: usize,
    /// `taps[o]` lists `(input index, weight)` pairs.
    pub taps: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> AxisPlan<T> {
    pub fn new(in_len: usize, out_len: usize, kind: ResizeKind) -> Self {
        let clamp = |i: isize| i.clamp(0, in_len as isize - 1) as usize;
        let taps = (0..out_len)
            .map(|o| {
                let src = source_coord(o, in_len, out_len);
                let mut taps: Vec<(usize, f64)> = match kind {
                    ResizeKind::Nearest => {
                        let i = ((o as f64 + 0.5) * in_len as f64 / out_len as f64).floor();
                        vec![(clamp(i as isize), 1.0)]
                    }
                    ResizeKind::Bilinear => {
                        let i0 = src.floor();
                        let f = src - i0;
                        let i0 = i0 as isize;
                        vec![(clamp(i0), 1.0 - f), (clamp(i0 + 1), f)]
                    }
                    ResizeKind::Bicubic => {
                        let i0 = src.floor() as isize;
                        (i0 - 1..=i0 + 2)
                            .map(|i| (clamp(i), keys_cubic(src - i as f64)))
                            .collect()
                    }
                };
                // Merge taps that clamped onto the same index.
                taps.sort_by_key(|t| t.0);
                let mut merged: Vec<(usize, T)> = Vec::with_capacity(taps.len());
                for (i, w) in taps {
                    match merged.last_mut() {
                        Some(last) if last.0 == i => last.1 = last.1 + T::of(w),
                        _ => merged.push((i, T::of(w))),
                    }
                }
                merged
            })
            .collect();
        Self {
            in_len,
            out_len,
            taps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResizePlan<T> {
    pub kind: ResizeKind,
    pub in_shape: Shape,
    pub out_shape: Shape,
    rows: AxisPlan<T>,
    cols: AxisPlan<T>,
}

impl<T: Scalar> ResizePlan<T> {
    pub fn new(in_shape: Shape, out_hw: (usize, usize), kind: ResizeKind) -> Result<Self> {
        let (oh, ow) = out_hw;
        if oh == 0 || ow == 0 || in_shape.h() == 0 || in_shape.w() == 0 {
            return Err(Error::invalid("resize", "dimensions must be positive"));
        }
        Ok(Self {
            kind,
            in_shape,
            out_shape: in_shape.with(2, oh).with(3, ow),
            rows: AxisPlan::new(in_shape.h(), oh, kind),
            cols: AxisPlan::new(in_shape.w(), ow, kind),
        })
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape() != self.in_shape {
            return Err(Error::ShapeMismatch {
                op: "resize",
                lhs: x.shape(),
                rhs: self.in_shape,
            });
        }
        let [n, c, h, w] = self.in_shape.0;
        let (oh, ow) = self.out_shape.hw();
        let planes = n * c;
        let mut tmp = vec![T::zero(); planes * h * ow];
        for p in 0..planes {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                let dst = &mut tmp[(p * h + y) * ow..(p * h + y + 1) * ow];
                for (d, taps) in dst.iter_mut().zip(&self.cols.taps) {
                    *d = taps
                        .iter()
                        .fold(T::zero(), |acc, &(i, wt)| acc + row[i] * wt);
                }
            }
        }
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            for (oy, taps) in self.rows.taps.iter().enumerate() {
                let dst = &mut out[(p * oh + oy) * ow..(p * oh + oy + 1) * ow];
                for &(iy, wt) in taps {
                    let src = &tmp[(p * h + iy) * ow..(p * h + iy + 1) * ow];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + s * wt;
                    }
                }
            }
        }
        Tensor::new(self.out_shape, out)
    }

    /// Transpose of [`apply`](Self::apply).
    pub fn backward(&self, g: &Tensor<T>) -> Result<Tensor<T>> {
        if g.shape() != self.out_shape {
            return Err(Error::ShapeMismatch {
                op: "resize_backward",
                lhs: g.shape(),
                rhs: self.out_shape,
            });
        }
        let [n, c, h, w] = self.in_shape.0;
        let (oh, ow) = self.out_shape.hw();
        let planes = n * c;
        let mut tmp = vec![T::zero(); planes * h * ow];
        for p in 0..planes {
            for (oy, taps) in self.rows.taps.iter().enumerate() {
                let src = &g.data()[(p * oh + oy) * ow..(p * oh + oy + 1) * ow];
                for &(iy, wt) in taps {
                    let dst = &mut tmp[(p * h + iy) * ow..(p * h + iy + 1) * ow];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + s * wt;
                    }
                }
            }
        }
        let mut out = vec![T::zero(); planes * h * w];
        for p in 0..planes {
            for y in 0..h {
                let src = &tmp[(p * h + y) * ow..(p * h + y + 1) * ow];
                let dst = &mut out[(p * h + y) * w..(p * h + y + 1) * w];
                for (&s, taps) in src.iter().zip(&self.cols.taps) {
                    for &(i, wt) in taps {
                        dst[i] = dst[i] + s * wt;
                    }
                }
            }
        }
        Tensor::new(self.in_shape, out)
    }
}

/// Non-differentiable convenience wrapper.
pub fn resize_tensor<T: Scalar>(
    x: &Tensor<T>,
    out_hw: (usize, usize),
    kind: ResizeKind,
) -> Result<Tensor<T>> {
    if x.shape().hw() == out_hw && kind != ResizeKind::Bicubic {
        return Ok(x.clone());
    }
    ResizePlan::new(x.shape(), out_hw, kind)?.apply(x)
}
