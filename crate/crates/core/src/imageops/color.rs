use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// ITU-R BT.601 luma as used for SR evaluation, on `[0, 1]` RGB input.
/// Returns a single-channel tensor, also on a `[0, 1]` scale (16/255..235/255).
pub fn rgb_to_y<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = img.shape().0;
    if c != 3 {
        return Err(Error::invalid(
            "rgb_to_y",
            format!("expected 3 channels, got {c}"),
        ));
    }
    let (kr, kg, kb) = (T::of(65.481), T::of(128.553), T::of(24.966));
    let (off, scale) = (T::of(16.0), T::of(255.0));
    let plane = h * w;
    let mut out = Vec::with_capacity(n * plane);
    for i in 0..n {
        let base = i * 3 * plane;
        let d = img.data();
        for p in 0..plane {
            let (r, g, b) = (d[base + p], d[base + plane + p], d[base + 2 * plane + p]);
            out.push((off + kr * r + kg * g + kb * b) / scale);
        }
    }
    Tensor::new(Shape::new(n, 1, h, w), out)
}

/// `[-1, 1]` -> `[0, 1]`.
pub fn to_unit_range<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::of(0.5);
    x.map(|v| (v + T::one()) * half)
}

/// `[0, 1]` -> `[-1, 1]`.
pub fn from_unit_range<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let two = T::of(2.0);
    x.map(|v| v * two - T::one())
}
