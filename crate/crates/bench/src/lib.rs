//! Shared inputs for the kernel benchmarks.

use flowsr_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-1, 1)`, reproducible per seed.
pub fn uniform(shape: Shape, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// A flow field with displacements of up to `max_disp` pixels.
pub fn flow(n: usize, h: usize, w: usize, max_disp: f32, seed: u64) -> Tensor<f32> {
    let f = uniform(Shape::new(n, 2, h, w), seed);
    f.map(|v| v * max_disp)
}
