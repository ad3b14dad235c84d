use std::rc::Rc;

use super::{Node, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::imageops::{self, conv, warp};
use crate::tensor::{Axes, Scalar, Shape, Tensor};

const BIAS_AXES: Axes = Axes([true, false, true, true]);

fn reduce_to<T: Scalar>(g: Tensor<T>, shape: Shape) -> Tensor<T> {
    if g.shape() == shape {
        g
    } else {
        g.sum_axes(g.shape().broadcast_axes(&shape))
    }
}

fn leaky_mask<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { T::one() } else { slope })
}

/// Tensor-valued vector-Jacobian product for one node.
pub(super) fn vjp<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
    out: &mut Vec<(usize, Tensor<T>)>,
) -> Result<()> {
    let val = |i: usize| &nodes[i].value;
    let need = |i: usize| nodes[i].requires_grad;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        &Op::Add(a, b) => {
            if need(a) {
                out.push((a, reduce_to(g.clone(), val(a).shape())));
            }
            if need(b) {
                out.push((b, reduce_to(g.clone(), val(b).shape())));
            }
        }
        &Op::Sub(a, b) => {
            if need(a) {
                out.push((a, reduce_to(g.clone(), val(a).shape())));
            }
            if need(b) {
                out.push((b, reduce_to(g.map(|v| -v), val(b).shape())));
            }
        }
        &Op::Mul(a, b) => {
            if need(a) {
                let ga = g.broadcast_with(val(b), "mul", |p, q| p * q)?;
                out.push((a, reduce_to(ga, val(a).shape())));
            }
            if need(b) {
                let gb = g.broadcast_with(val(a), "mul", |p, q| p * q)?;
                out.push((b, reduce_to(gb, val(b).shape())));
            }
        }
        &Op::Square(x) => {
            let two = T::of(2.0);
            out.push((x, g.zip_map(val(x), |p, q| p * two * q)?));
        }
        &Op::Scale(x, c) => out.push((x, g.map(|v| v * c))),
        &Op::AddScalar(x) => out.push((x, g.clone())),
        &Op::Sum(x) => out.push((x, g.expand_to(val(x).shape())?)),
        &Op::Mean(x, inv) => out.push((x, g.expand_to(val(x).shape())?.map(|v| v * inv))),
        &Op::Expand(x) => out.push((x, reduce_to(g.clone(), val(x).shape()))),
        Op::MulConst(x, m) => out.push((*x, g.zip_map(m, |p, q| p * q)?)),
        &Op::LeakyRelu(x, s) => {
            let mask = leaky_mask(val(x), s);
            out.push((x, g.zip_map(&mask, |p, q| p * q)?));
        }
        &Op::Tanh(x) => out.push((x, g.zip_map(y, |p, t| p * (T::one() - t * t))?)),
        &Op::Sigmoid(x) => out.push((x, g.zip_map(y, |p, s| p * s * (T::one() - s))?)),
        &Op::Abs(x) => out.push((
            x,
            g.zip_map(val(x), |p, v| {
                if v > T::zero() {
                    p
                } else if v < T::zero() {
                    -p
                } else {
                    T::zero()
                }
            })?,
        )),
        &Op::Rsqrt(x) => {
            let half = T::of(-0.5);
            out.push((x, g.zip_map(y, |p, r| p * half * r * r * r)?));
        }
        &Op::LogClamped(x, floor) => out.push((
            x,
            g.zip_map(val(x), |p, v| if v > floor { p / v } else { T::zero() })?,
        )),
        &Op::ForwardDiff(x, axis) => {
            let mut dx = Tensor::zeros(val(x).shape());
            let [n, c, h, w] = g.shape().0;
            for i in 0..n {
                for j in 0..c {
                    for yy in 0..h {
                        for xx in 0..w {
                            let gv = g.at([i, j, yy, xx]);
                            let lo = [i, j, yy, xx];
                            let mut hi = lo;
                            hi[axis] += 1;
                            dx.set(hi, dx.at(hi) + gv);
                            dx.set(lo, dx.at(lo) - gv);
                        }
                    }
                }
            }
            out.push((x, dx));
        }
        &Op::Conv { x, w, b, spec } => {
            if need(x) {
                let xs = val(x).shape();
                out.push((x, conv::conv2d_input_grad(g, val(w), &spec, xs.hw())?));
            }
            if need(w) {
                out.push((w, conv::conv2d_weight_grad(val(x), g, &spec)?));
            }
            if let Some(b) = b {
                if need(b) {
                    out.push((b, g.sum_axes(BIAS_AXES)));
                }
            }
        }
        &Op::ConvInputGrad { g: gi, w, spec } => {
            if need(gi) {
                out.push((gi, conv::conv2d_forward(g, val(w), None, &spec)?));
            }
            if need(w) {
                out.push((w, conv::conv2d_weight_grad(g, val(gi), &spec)?));
            }
        }
        &Op::ConvWeightGrad { x, g: gi, spec } => {
            if need(x) {
                let xs = val(x).shape();
                out.push((x, conv::conv2d_input_grad(val(gi), g, &spec, xs.hw())?));
            }
            if need(gi) {
                out.push((gi, conv::conv2d_forward(val(x), g, None, &spec)?));
            }
        }
        Op::Resize { x, plan } => out.push((*x, plan.backward(g)?)),
        &Op::GridSample { img, flow } => {
            let (di, df) = warp::grid_sample_backward(val(img), val(flow), g)?;
            if need(img) {
                out.push((img, di));
            }
            if need(flow) {
                out.push((flow, df));
            }
        }
    }
    Ok(())
}

fn reduce_var<'t, T: Scalar>(g: Var<'t, T>, shape: Shape) -> Result<Var<'t, T>> {
    let gs = g.shape();
    if gs == shape {
        Ok(g)
    } else {
        g.sum(gs.broadcast_axes(&shape))
    }
}

/// Var-valued vector-Jacobian product: the gradient computation is itself
/// recorded on the tape.
pub(super) fn vjp_graph<'t, T: Scalar>(
    tape: &'t Tape<T>,
    op: &Op<T>,
    g: Var<'t, T>,
) -> Result<Vec<(usize, Var<'t, T>)>> {
    let var = |i: usize| Var { tape, id: i };
    let need = |i: usize| tape.nodes()[i].requires_grad;
    let mut out = Vec::with_capacity(3);
    match op {
        &Op::Add(a, b) => {
            if need(a) {
                out.push((a, reduce_var(g, var(a).shape())?));
            }
            if need(b) {
                out.push((b, reduce_var(g, var(b).shape())?));
            }
        }
        &Op::Sub(a, b) => {
            if need(a) {
                out.push((a, reduce_var(g, var(a).shape())?));
            }
            if need(b) {
                out.push((b, reduce_var(g.neg()?, var(b).shape())?));
            }
        }
        &Op::Mul(a, b) => {
            if need(a) {
                out.push((a, reduce_var(g.mul(var(b))?, var(a).shape())?));
            }
            if need(b) {
                out.push((b, reduce_var(g.mul(var(a))?, var(b).shape())?));
            }
        }
        &Op::Square(x) => out.push((x, g.mul(var(x).scale(2.0)?)?)),
        &Op::Scale(x, c) => out.push((x, g.scale(c.f64())?)),
        &Op::AddScalar(x) => out.push((x, g)),
        &Op::Sum(x) => out.push((x, g.expand(var(x).shape())?)),
        &Op::Mean(x, inv) => out.push((x, g.expand(var(x).shape())?.scale(inv.f64())?)),
        &Op::Expand(x) => out.push((x, reduce_var(g, var(x).shape())?)),
        Op::MulConst(x, m) => out.push((*x, g.mul_const(Rc::clone(m))?)),
        &Op::LeakyRelu(x, s) => {
            // Piecewise linear: the mask is a constant, so the second
            // derivative through it is zero.
            let mask = Rc::new(leaky_mask(&var(x).value(), s));
            out.push((x, g.mul_const(mask)?));
        }
        &Op::Conv { x, w, b, spec } => {
            if need(x) {
                let hw = var(x).shape().hw();
                out.push((x, imageops::conv2d_input_grad(g, var(w), spec, hw)?));
            }
            if need(w) {
                out.push((w, imageops::conv2d_weight_grad(var(x), g, spec)?));
            }
            if let Some(b) = b {
                if need(b) {
                    out.push((b, g.sum(BIAS_AXES)?));
                }
            }
        }
        &Op::ConvInputGrad { g: gi, w, spec } => {
            if need(gi) {
                out.push((gi, imageops::conv2d(g, var(w), None, spec)?));
            }
            if need(w) {
                out.push((w, imageops::conv2d_weight_grad(g, var(gi), spec)?));
            }
        }
        &Op::ConvWeightGrad { x, g: gi, spec } => {
            if need(x) {
                let hw = var(x).shape().hw();
                out.push((x, imageops::conv2d_input_grad(var(gi), g, spec, hw)?));
            }
            if need(gi) {
                out.push((gi, imageops::conv2d(var(x), g, None, spec)?));
            }
        }
        other => return Err(Error::SecondOrderUnsupported(other.name())),
    }
    Ok(out)
}
