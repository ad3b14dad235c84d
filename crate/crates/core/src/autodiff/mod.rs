//! Reverse-mode differentiation over rank-4 tensors.
//!
//! A [`Tape`] records every operation as a node in construction order; a
//! [`Var`] is a cheap `Copy` handle to one node. Backward traversal walks the
//! nodes in strict reverse order.
//!
//! Two backward flavours exist:
//!
//! * [`Tape::grad`] returns plain tensors and works through every op.
//! * [`Tape::grad_graph`] records the gradient computation itself onto the
//!   tape, so the returned gradients are `Var`s that can be differentiated
//!   again. Only the op subset a discriminator uses (convolution, leaky
//!   ReLU, add/sub/mul, scaling, square, sum, mean, broadcast) supports this;
//!   anything else is rejected with [`Error::SecondOrderUnsupported`].
//!
//! ```
//! use flowsr_core::autodiff::Tape;
//! use flowsr_core::tensor::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::scalar(2.0)).unwrap();
//! let y = x.square().unwrap().mul(x).unwrap(); // x^3
//! let dy = tape.grad_graph(y, &[x]).unwrap()[0];
//! assert_eq!(dy.item(), 12.0);
//! let d2y = tape.grad(dy, &[x]).unwrap();
//! assert_eq!(d2y[0].item(), 12.0);
//! ```

mod backward;
mod ops;

use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::imageops::{ConvSpec, ResizePlan};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone)]
pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Square(usize),
    Scale(usize, T),
    AddScalar(usize),
    Sum(usize),
    Mean(usize, T),
    Expand(usize),
    MulConst(usize, Rc<Tensor<T>>),
    LeakyRelu(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    Abs(usize),
    Rsqrt(usize),
    LogClamped(usize, T),
    ForwardDiff(usize, usize),
    Conv {
        x: usize,
        w: usize,
        b: Option<usize>,
        spec: ConvSpec,
    },
    ConvInputGrad {
        g: usize,
        w: usize,
        spec: ConvSpec,
    },
    ConvWeightGrad {
        x: usize,
        g: usize,
        spec: ConvSpec,
    },
    Resize {
        x: usize,
        plan: Rc<ResizePlan<T>>,
    },
    GridSample {
        img: usize,
        flow: usize,
    },
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Square(..) => "square",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sum(..) => "reduce_sum",
            Op::Mean(..) => "reduce_mean",
            Op::Expand(..) => "expand",
            Op::MulConst(..) => "mul_const",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Abs(..) => "abs",
            Op::Rsqrt(..) => "rsqrt",
            Op::LogClamped(..) => "log",
            Op::ForwardDiff(..) => "forward_diff",
            Op::Conv { .. } => "conv2d",
            Op::ConvInputGrad { .. } => "conv2d_input_grad",
            Op::ConvWeightGrad { .. } => "conv2d_weight_grad",
            Op::Resize { .. } => "resize",
            Op::GridSample { .. } => "grid_sample",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Square(x)
            | Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Sum(x)
            | Op::Mean(x, _)
            | Op::Expand(x)
            | Op::MulConst(x, _)
            | Op::LeakyRelu(x, _)
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Abs(x)
            | Op::Rsqrt(x)
            | Op::LogClamped(x, _)
            | Op::ForwardDiff(x, _)
            | Op::Resize { x, .. } => vec![x],
            Op::Conv { x, w, b, .. } => {
                let mut v = vec![x, w];
                v.extend(b);
                v
            }
            Op::ConvInputGrad { g, w, .. } => vec![g, w],
            Op::ConvWeightGrad { x, g, .. } => vec![x, g],
            Op::GridSample { img, flow } => vec![img, flow],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Operation record for one forward pass. Confined to a single thread.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        self.push_leaf(value, false)
    }

    /// Input that gradients are taken with respect to.
    pub fn param(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        self.push_leaf(value, true)
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Result<Var<'_, T>> {
        if let Some(index) = value.first_non_finite() {
            return Err(Error::NonFinite { op: "leaf", index });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Append the result of a forward op. Non-finite outputs are rejected
    /// with the producing op's name.
    pub(crate) fn record(&self, value: Tensor<T>, op: Op<T>) -> Result<Var<'_, T>> {
        if let Some(index) = value.first_non_finite() {
            return Err(Error::NonFinite {
                op: op.name(),
                index,
            });
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().any(|&i| nodes[i].requires_grad);
        // Nothing upstream needs a gradient: keep the value, drop the history.
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node<T>>> {
        self.nodes.borrow()
    }

    fn check_loss(&self, loss: Var<'_, T>) -> Result<()> {
        let shape = loss.shape();
        if shape != Shape::SCALAR {
            return Err(Error::NonScalarLoss(shape));
        }
        Ok(())
    }

    /// First-order gradients of a scalar `loss` with respect to `wrt`.
    /// Inputs the loss does not depend on get zero tensors.
    pub fn grad(&self, loss: Var<'_, T>, wrt: &[Var<'_, T>]) -> Result<Vec<Tensor<T>>> {
        self.check_loss(loss)?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Tensor::ones(Shape::SCALAR));
        }
        let mut contrib = Vec::with_capacity(3);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            contrib.clear();
            backward::vjp(&nodes, node, &g, &mut contrib)?;
            for (input, gi) in contrib.drain(..) {
                grads[input] = Some(match grads[input].take() {
                    None => gi,
                    Some(acc) => acc.zip_map(&gi, |a, b| a + b)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|v| {
                grads
                    .get(v.id)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros(nodes[v.id].value.shape()))
            })
            .collect())
    }

    /// Gradients of a scalar `loss` recorded as new tape nodes, so they can
    /// be differentiated again.
    pub fn grad_graph<'t>(
        &'t self,
        loss: Var<'t, T>,
        wrt: &[Var<'t, T>],
    ) -> Result<Vec<Var<'t, T>>> {
        self.check_loss(loss)?;
        let mut grads: Vec<Option<Var<'t, T>>> = vec![None; loss.id + 1];
        if self.nodes.borrow()[loss.id].requires_grad {
            grads[loss.id] = Some(self.constant(Tensor::ones(Shape::SCALAR))?);
        }
        for id in (0..=loss.id).rev() {
            let (op, requires_grad) = {
                let nodes = self.nodes.borrow();
                (nodes[id].op.clone(), nodes[id].requires_grad)
            };
            if !requires_grad || matches!(op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, gi) in backward::vjp_graph(self, &op, g)? {
                grads[input] = Some(match grads[input].take() {
                    None => gi,
                    Some(acc) => acc.add(gi)?,
                });
            }
        }
        wrt.iter()
            .map(|v| match grads.get(v.id).copied().flatten() {
                Some(g) => Ok(g),
                None => self.constant(Tensor::zeros(v.shape())),
            })
            .collect()
    }

    /// Dispatches on `create_graph` and returns gradients as tape variables.
    pub fn backward<'t>(
        &'t self,
        loss: Var<'t, T>,
        wrt: &[Var<'t, T>],
        create_graph: bool,
    ) -> Result<Vec<Var<'t, T>>> {
        if create_graph {
            self.grad_graph(loss, wrt)
        } else {
            self.grad(loss, wrt)?
                .into_iter()
                .map(|g| self.constant(g))
                .collect()
        }
    }
}

/// Handle to one tape node.
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn shape(&self) -> Shape {
        self.value().shape()
    }

    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Result<Var<'t, T>> {
        self.tape.constant(self.to_tensor())
    }

    pub(crate) fn record(&self, value: Tensor<T>, op: Op<T>) -> Result<Var<'t, T>> {
        self.tape.record(value, op)
    }
}
