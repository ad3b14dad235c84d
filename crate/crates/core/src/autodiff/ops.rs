use std::rc::Rc;

use super::{Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Axes, Scalar, Shape, Tensor};

impl<'t, T: Scalar> Var<'t, T> {
    fn binary(
        self,
        other: Var<'t, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var<'t, T>> {
        let v = {
            let (a, b) = (self.value(), other.value());
            a.broadcast_with(&b, name, f)?
        };
        self.record(v, op)
    }

    fn unary(self, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var<'t, T>> {
        let v = self.value().map(f);
        self.record(v, op)
    }

    /// Elementwise sum; either side may broadcast over singleton dims.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn square(self) -> Result<Var<'t, T>> {
        self.unary(|a| a * a, Op::Square(self.id))
    }

    /// Multiply by a fixed scalar.
    pub fn scale(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::of(c);
        self.unary(move |a| a * c, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::of(c);
        self.unary(move |a| a + c, Op::AddScalar(self.id))
    }

    /// Sum over `axes`, keeping reduced dims with length one.
    pub fn sum(self, axes: Axes) -> Result<Var<'t, T>> {
        let v = self.value().sum_axes(axes);
        self.record(v, Op::Sum(self.id))
    }

    pub fn mean(self, axes: Axes) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let count: usize = (0..4).filter(|&a| axes.0[a]).map(|a| shape.0[a]).product();
        if count == 0 {
            return Err(Error::invalid("reduce_mean", "empty reduction"));
        }
        let inv = T::of(1.0 / count as f64);
        let v = self.value().sum_axes(axes).map(|s| s * inv);
        self.record(v, Op::Mean(self.id, inv))
    }

    pub fn sum_all(self) -> Result<Var<'t, T>> {
        self.sum(Axes::ALL)
    }

    pub fn mean_all(self) -> Result<Var<'t, T>> {
        self.mean(Axes::ALL)
    }

    /// Broadcast singleton dims up to `shape`.
    pub fn expand(self, shape: Shape) -> Result<Var<'t, T>> {
        let v = self.value().expand_to(shape)?;
        self.record(v, Op::Expand(self.id))
    }

    /// Multiply by a fixed tensor of identical shape.
    pub fn mul_const(self, m: Rc<Tensor<T>>) -> Result<Var<'t, T>> {
        let v = self.value().zip_map(&m, |a, b| a * b)?;
        self.record(v, Op::MulConst(self.id, m))
    }

    /// `max(x, slope * x)` for `slope < 1`.
    pub fn leaky_relu(self, slope: f64) -> Result<Var<'t, T>> {
        let s = T::of(slope);
        self.unary(
            move |a| if a > T::zero() { a } else { a * s },
            Op::LeakyRelu(self.id, s),
        )
    }

    pub fn relu(self) -> Result<Var<'t, T>> {
        self.leaky_relu(0.0)
    }

    pub fn tanh(self) -> Result<Var<'t, T>> {
        self.unary(|a| a.tanh(), Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Result<Var<'t, T>> {
        self.unary(
            |a| {
                // Split by sign to avoid exp overflow.
                if a >= T::zero() {
                    T::one() / (T::one() + (-a).exp())
                } else {
                    let e = a.exp();
                    e / (T::one() + e)
                }
            },
            Op::Sigmoid(self.id),
        )
    }

    pub fn abs(self) -> Result<Var<'t, T>> {
        self.unary(|a| a.abs(), Op::Abs(self.id))
    }

    pub fn rsqrt(self) -> Result<Var<'t, T>> {
        self.unary(|a| a.sqrt().recip(), Op::Rsqrt(self.id))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(self, floor: f64) -> Result<Var<'t, T>> {
        let f = T::of(floor);
        self.unary(move |a| a.max(f).ln(), Op::LogClamped(self.id, f))
    }

    /// `x[i+1] - x[i]` along `axis` (2 = height, 3 = width).
    pub fn forward_diff(self, axis: usize) -> Result<Var<'t, T>> {
        if axis != 2 && axis != 3 {
            return Err(Error::invalid(
                "forward_diff",
                format!("axis {axis} is not spatial"),
            ));
        }
        let v = {
            let x = self.value();
            let s = x.shape();
            if s.0[axis] < 2 {
                return Err(Error::invalid(
                    "forward_diff",
                    format!("axis {axis} shorter than 2"),
                ));
            }
            let out = s.with(axis, s.0[axis] - 1);
            Tensor::from_fn(out, |mut idx| {
                let a = x.at(idx);
                idx[axis] += 1;
                x.at(idx) - a
            })
        };
        self.record(v, Op::ForwardDiff(self.id, axis))
    }
}
