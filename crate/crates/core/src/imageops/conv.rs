//! 2-D cross-correlation via im2col + GEMM, plus the two adjoint kernels
//! needed by reverse mode (input gradient and weight gradient).
//!
//! The three kernels are the partial derivatives of the bilinear form
//! `S(x, w, g) = <g, conv(x, w)>`, which is what lets the autodiff layer
//! differentiate them a second time without any new math.

use std::borrow::Cow;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::invalid("conv2d", "channel counts must be positive"));
        }
        if kernel.is_multiple_of(2) {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {kernel} is not odd"),
            ));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::invalid(
                "conv2d",
                format!("stride {stride} not in {{1,2}}"),
            ));
        }
        Ok(Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
        })
    }

    /// Stride-1, size-preserving.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self::new(in_ch, out_ch, kernel, 1).expect("valid conv spec")
    }

    /// Stride-2 3x3, halves spatial dims.
    pub fn down(in_ch: usize, out_ch: usize) -> Self {
        Self::new(in_ch, out_ch, 3, 2).expect("valid conv spec")
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_ch, self.in_ch, self.kernel, self.kernel)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_ch, 1, 1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = |len: usize| -> Option<usize> {
            let padded = len + 2 * self.pad;
            (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
        };
        match (span(h), span(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::invalid(
                "conv2d",
                format!("input {h}x{w} too small for kernel {}", self.kernel),
            )),
        }
    }

    pub(crate) fn check(&self, x: Shape, w: Shape) -> Result<(usize, usize)> {
        if x.c() != self.in_ch || w != self.weight_shape() {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: x,
                rhs: w,
            });
        }
        self.out_hw(x.h(), x.w())
    }
}

/// Unfold one sample `(C, H, W)` into `(C*k*k, Ho*Wo)` columns.
fn im2col<'a, T: Scalar>(
    x: &'a [T],
    spec: &ConvSpec,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Cow<'a, [T]> {
    let k = spec.kernel;
    if k == 1 && spec.stride == 1 {
        return Cow::Borrowed(x);
    }
    let mut cols = vec![T::zero(); spec.in_ch * k * k * oh * ow];
    let (s, p) = (spec.stride as isize, spec.pad as isize);
    for c in 0..spec.in_ch {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = oy as isize * s + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    Cow::Owned(cols)
}

/// Fold columns back onto a `(C, H, W)` buffer, accumulating overlaps.
fn col2im<T: Scalar>(
    cols: &[T],
    spec: &ConvSpec,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
) {
    let k = spec.kernel;
    if k == 1 && spec.stride == 1 {
        out.copy_from_slice(cols);
        return;
    }
    let (s, p) = (spec.stride as isize, spec.pad as isize);
    for c in 0..spec.in_ch {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = oy as isize * s + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = ox as isize * s + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

fn view<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("gemm view")
}

/// `y = conv(x, w) + b`, with `b` shaped `(1, out, 1, 1)`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (oh, ow) = spec.check(x.shape(), w.shape())?;
    if let Some(b) = b {
        if b.shape() != spec.bias_shape() {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: b.shape(),
                rhs: spec.bias_shape(),
            });
        }
    }
    let [n, _, h, wd] = x.shape().0;
    let ck = spec.fan_in();
    let out_shape = Shape::new(n, spec.out_ch, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let in_per = x.shape().numel() / n.max(1);
    let out_per = spec.out_ch * oh * ow;
    let wv = view(w.data(), spec.out_ch, ck);
    out.data_mut()
        .par_chunks_mut(out_per.max(1))
        .zip(x.data().par_chunks(in_per.max(1)))
        .for_each(|(yo, xi)| {
            let cols = im2col(xi, spec, h, wd, oh, ow);
            let cv = view(&cols, ck, oh * ow);
            let mut yv = ArrayViewMut2::from_shape((spec.out_ch, oh * ow), yo).expect("gemm out");
            general_mat_mul(T::one(), &wv, &cv, T::zero(), &mut yv);
            if let Some(b) = b {
                for (o, row) in yo.chunks_mut(oh * ow).enumerate() {
                    let bo = b.data()[o];
                    row.iter_mut().for_each(|v| *v = *v + bo);
                }
            }
        });
    Ok(out)
}

/// Gradient of `<g, conv(x, w)>` with respect to `x`.
pub fn conv2d_input_grad<T: Scalar>(
    g: &Tensor<T>,
    w: &Tensor<T>,
    spec: &ConvSpec,
    in_hw: (usize, usize),
) -> Result<Tensor<T>> {
    let (h, wd) = in_hw;
    let (oh, ow) = spec.out_hw(h, wd)?;
    let n = g.shape().n();
    if g.shape() != Shape::new(n, spec.out_ch, oh, ow) || w.shape() != spec.weight_shape() {
        return Err(Error::ShapeMismatch {
            op: "conv2d_input_grad",
            lhs: g.shape(),
            rhs: w.shape(),
        });
    }
    let ck = spec.fan_in();
    let mut out = Tensor::zeros(Shape::new(n, spec.in_ch, h, wd));
    let in_per = spec.in_ch * h * wd;
    let out_per = spec.out_ch * oh * ow;
    let wt = view(w.data(), spec.out_ch, ck).reversed_axes();
    out.data_mut()
        .par_chunks_mut(in_per.max(1))
        .zip(g.data().par_chunks(out_per.max(1)))
        .for_each(|(dx, gi)| {
            let gv = view(gi, spec.out_ch, oh * ow);
            let mut cols = vec![T::zero(); ck * oh * ow];
            {
                let mut cv = ArrayViewMut2::from_shape((ck, oh * ow), &mut cols[..]).expect("gemm");
                general_mat_mul(T::one(), &wt, &gv, T::zero(), &mut cv);
            }
            col2im(&cols, spec, h, wd, oh, ow, dx);
        });
    Ok(out)
}

/// Gradient of `<g, conv(x, w)>` with respect to `w`.
pub fn conv2d_weight_grad<T: Scalar>(
    x: &Tensor<T>,
    g: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (oh, ow) = spec.check(x.shape(), spec.weight_shape())?;
    let [n, _, h, wd] = x.shape().0;
    if g.shape() != Shape::new(n, spec.out_ch, oh, ow) {
        return Err(Error::ShapeMismatch {
            op: "conv2d_weight_grad",
            lhs: g.shape(),
            rhs: Shape::new(n, spec.out_ch, oh, ow),
        });
    }
    let ck = spec.fan_in();
    let in_per = spec.in_ch * h * wd;
    let out_per = spec.out_ch * oh * ow;
    let partials: Vec<Vec<T>> = x
        .data()
        .par_chunks(in_per.max(1))
        .zip(g.data().par_chunks(out_per.max(1)))
        .map(|(xi, gi)| {
            let cols = im2col(xi, spec, h, wd, oh, ow);
            let ct = view(&cols, ck, oh * ow).reversed_axes();
            let gv = view(gi, spec.out_ch, oh * ow);
            let mut dw = vec![T::zero(); spec.out_ch * ck];
            {
                let mut dv =
                    ArrayViewMut2::from_shape((spec.out_ch, ck), &mut dw[..]).expect("gemm");
                general_mat_mul(T::one(), &gv, &ct, T::zero(), &mut dv);
            }
            dw
        })
        .collect();
    // Fixed-order reduction keeps results bitwise reproducible.
    let mut acc = vec![T::zero(); spec.out_ch * ck];
    for p in &partials {
        for (a, &v) in acc.iter_mut().zip(p) {
            *a = *a + v;
        }
    }
    Tensor::new(spec.weight_shape(), acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-loop correlation used as an oracle for the GEMM path.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, spec: &ConvSpec) -> Tensor<f64> {
        let [n, _, h, wd] = x.shape().0;
        let (oh, ow) = spec.out_hw(h, wd).unwrap();
        Tensor::from_fn(Shape::new(n, spec.out_ch, oh, ow), |[i, o, oy, ox]| {
            let mut acc = 0.0;
            for c in 0..spec.in_ch {
                for ky in 0..spec.kernel {
                    for kx in 0..spec.kernel {
                        let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += x.at([i, c, iy as usize, ix as usize]) * w.at([o, c, ky, kx]);
                        }
                    }
                }
            }
            acc
        })
    }

    fn pseudo(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        })
    }

    #[test]
    fn gemm_path_matches_naive_loops() {
        for (stride, k) in [(1, 3), (2, 3), (1, 1), (1, 5)] {
            let spec = ConvSpec::new(3, 4, k, stride).unwrap();
            let x = pseudo(Shape::new(2, 3, 7, 6), 1);
            let w = pseudo(spec.weight_shape(), 2);
            let fast = conv2d_forward(&x, &w, None, &spec).unwrap();
            let slow = naive(&x, &w, &spec);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_one_by_one() {
        let spec = ConvSpec::same(2, 2, 1);
        let w = Tensor::from_fn(spec.weight_shape(), |[o, c, _, _]| (o == c) as u8 as f64);
        let x = pseudo(Shape::new(1, 2, 4, 4), 3);
        let b = Tensor::zeros(spec.bias_shape());
        assert_eq!(conv2d_forward(&x, &w, Some(&b), &spec).unwrap(), x);
    }

    #[test]
    fn box_sum_interior() {
        let spec = ConvSpec::same(1, 1, 3);
        let x = Tensor::<f64>::ones(Shape::new(1, 1, 5, 5));
        let w = Tensor::ones(spec.weight_shape());
        let y = conv2d_forward(&x, &w, None, &spec).unwrap();
        assert_eq!(y.at([0, 0, 2, 2]), 9.0);
        assert_eq!(y.at([0, 0, 0, 0]), 4.0);
    }

    #[test]
    fn adjoint_identities() {
        // <g, conv(x,w)> == <conv_input_grad(g,w), x> == <conv_weight_grad(x,g), w>
        let spec = ConvSpec::new(3, 2, 3, 2).unwrap();
        let x = pseudo(Shape::new(2, 3, 9, 8), 4);
        let w = pseudo(spec.weight_shape(), 5);
        let y = conv2d_forward(&x, &w, None, &spec).unwrap();
        let g = pseudo(y.shape(), 6);
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum()
        };
        let s = dot(&g, &y);
        let dx = conv2d_input_grad(&g, &w, &spec, (9, 8)).unwrap();
        let dw = conv2d_weight_grad(&x, &g, &spec).unwrap();
        assert!((dot(&dx, &x) - s).abs() < 1e-10);
        assert!((dot(&dw, &w) - s).abs() < 1e-10);
    }

    #[test]
    fn rejects_even_kernel_and_bad_channels() {
        assert!(ConvSpec::new(1, 1, 2, 1).is_err());
        let spec = ConvSpec::same(2, 1, 3);
        let x = Tensor::<f64>::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(spec.weight_shape());
        assert!(conv2d_forward(&x, &w, None, &spec).is_err());
    }
}
