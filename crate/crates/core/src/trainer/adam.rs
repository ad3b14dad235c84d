use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GradMap, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
    pub t: u64,
    pub cfg: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
            cfg,
        }
    }
}

/// One bias-corrected Adam update of every parameter whose name starts with
/// `prefix`. Parameters without a gradient entry are an error; moments for
/// parameters seen for the first time start at zero.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &GradMap<T>,
    state: &mut AdamState<T>,
    prefix: &str,
    lr: f64,
) -> Result<()> {
    let names: Vec<String> = store.names_with_prefix(prefix).cloned().collect();
    if let Some(missing) = names.iter().find(|n| !grads.contains_key(*n)) {
        return Err(Error::MissingGradient(missing.clone()));
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.cfg;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let (ibc1, ibc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
    let (lr, eps) = (T::of(lr), T::of(eps));
    for name in names {
        let g = &grads[&name];
        let p = store.get_mut(&name)?;
        if g.shape() != p.value.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.value.shape(),
                rhs: g.shape(),
            });
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name)
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let (w, m, v) = (p.value.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let mh = m[i] * ibc1;
            let vh = v[i] * ibc2;
            w[i] = w[i] - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
