//! Dense rank-4 tensors in `(n, c, h, w)` order.
//!
//! All storage is a contiguous row-major buffer. The element type is generic
//! over [`Scalar`] so the same kernels serve 32-bit training and 64-bit
//! gradient verification.

use std::fmt;
use std::iter::Sum;

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// On-disk element tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + Default
    + fmt::Debug
    + fmt::Display
    + Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn of(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn of(v: f64) -> Self {
        v
    }
}

/// Axis indices into `(n, c, h, w)`.
pub const N: usize = 0;
pub const C: usize = 1;
pub const H: usize = 2;
pub const W: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const SCALAR: Shape = Shape([1, 1, 1, 1]);

    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn n(&self) -> usize {
        self.0[N]
    }
    pub fn c(&self) -> usize {
        self.0[C]
    }
    pub fn h(&self) -> usize {
        self.0[H]
    }
    pub fn w(&self) -> usize {
        self.0[W]
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.0[H], self.0[W])
    }

    pub fn strides(&self) -> [usize; 4] {
        let [_, c, h, w] = self.0;
        [c * h * w, h * w, w, 1]
    }

    pub fn with(mut self, axis: usize, len: usize) -> Self {
        self.0[axis] = len;
        self
    }

    /// Shape after reducing the flagged axes to length one.
    pub fn reduced(&self, axes: Axes) -> Shape {
        let mut s = *self;
        for a in 0..4 {
            if axes.0[a] {
                s.0[a] = 1;
            }
        }
        s
    }

    /// Numpy-style broadcast of two rank-4 shapes (singleton dims stretch).
    pub fn broadcast(&self, other: &Shape) -> Option<Shape> {
        let mut out = [0; 4];
        for a in 0..4 {
            let (x, y) = (self.0[a], other.0[a]);
            out[a] = if x == y {
                x
            } else if x == 1 {
                y
            } else if y == 1 {
                x
            } else {
                return None;
            };
        }
        Some(Shape(out))
    }

    /// Axes along which `self` must be summed to collapse onto `target`.
    pub fn broadcast_axes(&self, target: &Shape) -> Axes {
        let mut axes = [false; 4];
        for a in 0..4 {
            axes[a] = target.0[a] == 1 && self.0[a] != 1;
        }
        Axes(axes)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "({n}, {c}, {h}, {w})")
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Subset of the four axes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Axes(pub [bool; 4]);

impl Axes {
    pub const ALL: Axes = Axes([true; 4]);
    pub const SPATIAL: Axes = Axes([false, false, true, true]);
    pub const NONE: Axes = Axes([false; 4]);

    pub fn of(list: &[usize]) -> Result<Axes> {
        let mut axes = [false; 4];
        for &a in list {
            if a >= 4 {
                return Err(Error::invalid("reduce", format!("axis {a} out of range")));
            }
            axes[a] = true;
        }
        Ok(Axes(axes))
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data[..8]", &preview)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "tensor",
                format!("buffer of {} elements for shape {shape}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: Shape, v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.numel()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self::full(Shape::SCALAR, v)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        let [n, c, h, w] = shape.0;
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([i, j, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        let s = self.shape.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2] * s[2] + idx[3]
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Value of a `(1,1,1,1)` tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "zip",
                lhs: self.shape,
                rhs: other.shape,
            });
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Elementwise op with numpy-style broadcasting over singleton dims.
    pub fn broadcast_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Self> {
        if self.shape == other.shape {
            return self.zip_map(other, f);
        }
        let out = self
            .shape
            .broadcast(&other.shape)
            .ok_or(Error::ShapeMismatch {
                op,
                lhs: self.shape,
                rhs: other.shape,
            })?;
        let sa = broadcast_strides(self.shape);
        let sb = broadcast_strides(other.shape);
        let mut data = Vec::with_capacity(out.numel());
        let [n, c, h, w] = out.0;
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    let ba = i * sa[0] + j * sa[1] + y * sa[2];
                    let bb = i * sb[0] + j * sb[1] + y * sb[2];
                    for x in 0..w {
                        data.push(f(self.data[ba + x * sa[3]], other.data[bb + x * sb[3]]));
                    }
                }
            }
        }
        Ok(Self { shape: out, data })
    }

    /// Sum over the flagged axes, keeping them as length-one dims.
    pub fn sum_axes(&self, axes: Axes) -> Self {
        if axes.is_empty() {
            return self.clone();
        }
        let out_shape = self.shape.reduced(axes);
        let mut out = Self::zeros(out_shape);
        let os = broadcast_strides(out_shape);
        let [n, c, h, w] = self.shape.0;
        let mut k = 0;
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    let base = i * os[0] + j * os[1] + y * os[2];
                    for x in 0..w {
                        let o = base + x * os[3];
                        out.data[o] = out.data[o] + self.data[k];
                        k += 1;
                    }
                }
            }
        }
        out
    }

    /// Broadcast a tensor with singleton dims up to `shape`.
    pub fn expand_to(&self, shape: Shape) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        match self.shape.broadcast(&shape) {
            Some(s) if s == shape => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "expand",
                    lhs: self.shape,
                    rhs: shape,
                })
            }
        }
        let st = broadcast_strides(self.shape);
        Ok(Self::from_fn(shape, |[i, j, y, x]| {
            self.data[i * st[0] + j * st[1] + y * st[2] + x * st[3]]
        }))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.data.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// First index holding NaN or infinity.
    pub fn first_non_finite(&self) -> Option<[usize; 4]> {
        let pos = self.data.iter().position(|v| !v.is_finite())?;
        let [_, c, h, w] = self.shape.0;
        Some([
            pos / (c * h * w),
            (pos / (h * w)) % c,
            (pos / w) % h,
            pos % w,
        ])
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Samples `[start, start+len)` along the batch axis.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.shape.n() {
            return Err(Error::invalid("batch_slice", "range past batch end"));
        }
        let per = self.shape.numel() / self.shape.n().max(1);
        Ok(Self {
            shape: self.shape.with(N, len),
            data: self.data[start * per..(start + len) * per].to_vec(),
        })
    }

    /// Concatenate along the batch axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors"))?;
        let inner = first.shape.with(N, 1);
        let mut data = Vec::with_capacity(inner.numel() * items.len());
        let mut n = 0;
        for t in items {
            if t.shape.with(N, 1) != inner {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    lhs: first.shape,
                    rhs: t.shape,
                });
            }
            n += t.shape.n();
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            shape: inner.with(N, n),
            data,
        })
    }

    /// Mirror along the width axis.
    pub fn flip_w(&self) -> Self {
        let w = self.shape.w();
        let mut out = self.clone();
        for (dst, src) in out.data.chunks_mut(w).zip(self.data.chunks(w)) {
            for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                *d = *s;
            }
        }
        out
    }
}

/// Strides that are zero along singleton dims, so indexing broadcasts.
pub(crate) fn broadcast_strides(shape: Shape) -> [usize; 4] {
    let s = shape.strides();
    let mut out = [0; 4];
    for a in 0..4 {
        out[a] = if shape.0[a] == 1 { 0 } else { s[a] };
    }
    out
}
