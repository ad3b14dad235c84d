#![allow(dead_code)]

pub mod gradsuite;
pub mod oracles;

use flowsr_core::{Shape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Normal draws pushed at least `margin` away from zero.
pub fn randn_off_zero(shape: Shape, margin: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = randn(shape, rng);
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 {
                *v - 2.0 * margin
            } else {
                *v + 2.0 * margin
            };
        }
    }
    t
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_rel_err(a: &Tensor<f64>, b: &Tensor<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| rel_err(x, y, floor))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function with respect to input `which`.
pub fn fd_grad(
    f: &dyn Fn(&[Tensor<f64>]) -> f64,
    inputs: &[Tensor<f64>],
    which: usize,
    eps: f64,
) -> Tensor<f64> {
    let mut work = inputs.to_vec();
    let mut g = Tensor::zeros(inputs[which].shape());
    for i in 0..inputs[which].len() {
        let x0 = inputs[which].data()[i];
        work[which].data_mut()[i] = x0 + eps;
        let fp = f(&work);
        work[which].data_mut()[i] = x0 - eps;
        let fm = f(&work);
        work[which].data_mut()[i] = x0;
        g.data_mut()[i] = (fp - fm) / (2.0 * eps);
    }
    g
}
