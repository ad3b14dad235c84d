//! Named trainable tensors with equalized-learning-rate scaling.
//!
//! Every weight is stored as a unit-normal draw and multiplied by a fixed
//! runtime constant `c = gain / sqrt(fan_in)` at each forward pass, so all
//! parameters see the same effective step size under Adam.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::imageops::{self, ConvSpec};
use crate::tensor::{Scalar, Shape, Tensor};

/// He gain for layers followed by a (leaky) ReLU.
pub const CONV_GAIN: f64 = std::f64::consts::SQRT_2;
/// Gain for output heads (tanh / raw scores).
pub const HEAD_GAIN: f64 = 1.0;

pub fn equalized_scale(gain: f64, fan_in: usize) -> f64 {
    gain / (fan_in as f64).sqrt()
}

/// Mix a base seed with a label so independent streams stay reproducible.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded into the seed with a splitmix step.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    /// Stored value; the forward pass sees `scale * value`.
    pub value: Tensor<T>,
    pub scale: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightInit {
    Normal,
    Zero,
}

pub type GradMap<T> = BTreeMap<String, Tensor<T>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, scale: T) {
        self.params.insert(name.into(), Param { value, scale });
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.params.iter()
    }

    pub fn names_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = &'a String> + 'a {
        self.params.keys().filter(move |k| k.starts_with(prefix))
    }

    pub fn num_elements(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    /// Register `<name>.w` and `<name>.b` for a conv layer.
    pub fn add_conv(
        &mut self,
        name: &str,
        spec: ConvSpec,
        gain: f64,
        init: WeightInit,
        rng: &mut impl Rng,
    ) {
        let shape = spec.weight_shape();
        let w = match init {
            WeightInit::Normal => Tensor::from_fn(shape, |_| {
                let z: f64 = rng.sample(StandardNormal);
                T::of(z)
            }),
            WeightInit::Zero => Tensor::zeros(shape),
        };
        self.insert(
            format!("{name}.w"),
            w,
            T::of(equalized_scale(gain, spec.fan_in())),
        );
        self.insert(
            format!("{name}.b"),
            Tensor::zeros(spec.bias_shape()),
            T::one(),
        );
    }

    /// Overwrite a conv bias with a constant.
    pub fn fill_bias(&mut self, name: &str, v: f64) -> Result<()> {
        let p = self.get_mut(&format!("{name}.b"))?;
        p.value = Tensor::full(p.value.shape(), T::of(v));
        Ok(())
    }
}

/// Binds a [`ParamStore`] onto a [`Tape`] for one forward pass.
///
/// Parameters whose names start with the trainable prefix become
/// gradient-tracked leaves; all others enter as constants (gradients still
/// flow *through* them to upstream inputs).
pub struct Binder<'a, T: Scalar> {
    tape: &'a Tape<T>,
    store: &'a ParamStore<T>,
    trainable: Option<&'a str>,
    leaves: RefCell<BTreeMap<String, (Var<'a, T>, Var<'a, T>)>>,
}

impl<'a, T: Scalar> Binder<'a, T> {
    pub fn new(tape: &'a Tape<T>, store: &'a ParamStore<T>, trainable: Option<&'a str>) -> Self {
        Self {
            tape,
            store,
            trainable,
            leaves: RefCell::new(BTreeMap::new()),
        }
    }

    /// Everything constant.
    pub fn frozen(tape: &'a Tape<T>, store: &'a ParamStore<T>) -> Self {
        Self::new(tape, store, None)
    }

    pub fn tape(&self) -> &'a Tape<T> {
        self.tape
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.store
    }

    fn is_trainable(&self, name: &str) -> bool {
        self.trainable.is_some_and(|p| name.starts_with(p))
    }

    /// Effective (scaled) value of a parameter.
    pub fn param(&self, name: &str) -> Result<Var<'a, T>> {
        if let Some((_, eff)) = self.leaves.borrow().get(name) {
            return Ok(*eff);
        }
        let p = self.store.get(name)?;
        let leaf = if self.is_trainable(name) {
            self.tape.param(p.value.clone())?
        } else {
            self.tape.constant(p.value.clone())?
        };
        let eff = if p.scale == T::one() {
            leaf
        } else {
            leaf.scale(p.scale.f64())?
        };
        self.leaves
            .borrow_mut()
            .insert(name.to_string(), (leaf, eff));
        Ok(eff)
    }

    /// Conv layer `<name>` (weights `<name>.w`, bias `<name>.b`).
    pub fn conv(&self, name: &str, x: Var<'a, T>, spec: ConvSpec) -> Result<Var<'a, T>> {
        let w = self.param(&format!("{name}.w"))?;
        let b = self.param(&format!("{name}.b"))?;
        imageops::conv2d(x, w, Some(b), spec)
    }

    /// Gradients of `loss` for every trainable parameter in the store,
    /// keyed by name. Parameters that were never bound receive zeros.
    pub fn backward(&self, loss: Var<'a, T>) -> Result<GradMap<T>> {
        let leaves = self.leaves.borrow();
        let bound: Vec<(&String, Var<'a, T>)> = leaves
            .iter()
            .filter(|(k, _)| self.is_trainable(k))
            .map(|(k, (leaf, _))| (k, *leaf))
            .collect();
        let vars: Vec<Var<'a, T>> = bound.iter().map(|(_, v)| *v).collect();
        let grads = self.tape.grad(loss, &vars)?;
        let mut out: GradMap<T> = bound.iter().map(|(k, _)| (*k).clone()).zip(grads).collect();
        if let Some(prefix) = self.trainable {
            for (name, p) in self.store.iter() {
                if name.starts_with(prefix) && !out.contains_key(name) {
                    out.insert(name.clone(), Tensor::zeros(p.value.shape()));
                }
            }
        }
        Ok(out)
    }
}

/// Shape helper for `(n, c, h, w)` images.
pub fn image_shape(n: usize, c: usize, hw: (usize, usize)) -> Shape {
    Shape::new(n, c, hw.0, hw.1)
}
