//! Slow reference implementations written straight from the definitions.

use flowsr_core::imageops::ResizeKind;
use flowsr_core::Tensor;

fn tri(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Keys cubic convolution kernel, a = -1/2, in expanded polynomial form.
fn cubic(t: f64) -> f64 {
    let t = t.abs();
    let (t2, t3) = (t * t, t * t * t);
    if t <= 1.0 {
        1.5 * t3 - 2.5 * t2 + 1.0
    } else if t < 2.0 {
        -0.5 * t3 + 2.5 * t2 - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Bilinear warp as an explicit double sum over every source pixel:
/// `out(y, x) = sum_ij I(i, j) tri(sy - i) tri(sx - j)` with
/// `s = clamp(p - delta, 0, len - 1)`.
pub fn grid_sample_double_sum(img: &Tensor<f64>, flow: &Tensor<f64>) -> Tensor<f64> {
    let [_, _, h, w] = img.shape().0;
    Tensor::from_fn(img.shape(), |[b, ch, y, x]| {
        let sx = (x as f64 - flow.at([b, 0, y, x])).clamp(0.0, (w - 1) as f64);
        let sy = (y as f64 - flow.at([b, 1, y, x])).clamp(0.0, (h - 1) as f64);
        let mut acc = 0.0;
        for i in 0..h {
            for j in 0..w {
                acc += img.at([b, ch, i, j]) * tri(sy - i as f64) * tri(sx - j as f64);
            }
        }
        acc
    })
}

/// Weight of input sample `i` for output sample `o` along one axis.
/// Taps outside the input are folded onto the nearest edge sample.
pub fn axis_weights(o: usize, in_len: usize, out_len: usize, kind: ResizeKind) -> Vec<f64> {
    let mut wts = vec![0.0; in_len];
    match kind {
        ResizeKind::Nearest => {
            // floor((o + 1/2) * in / out) in exact integer arithmetic
            let i = ((2 * o + 1) * in_len) / (2 * out_len);
            wts[i.min(in_len - 1)] = 1.0;
        }
        ResizeKind::Bilinear | ResizeKind::Bicubic => {
            let src = (o as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
            let k: fn(f64) -> f64 = if kind == ResizeKind::Bilinear {
                tri
            } else {
                cubic
            };
            let lo = src.floor() as i64 - 3;
            for p in lo..=lo + 7 {
                let wgt = k(src - p as f64);
                let idx = p.clamp(0, in_len as i64 - 1) as usize;
                wts[idx] += wgt;
            }
        }
    }
    wts
}

/// Separable resize as a full double sum over input pixels.
pub fn resize_double_sum(x: &Tensor<f64>, out_hw: (usize, usize), kind: ResizeKind) -> Tensor<f64> {
    let [n, c, h, w] = x.shape().0;
    let wy: Vec<Vec<f64>> = (0..out_hw.0)
        .map(|o| axis_weights(o, h, out_hw.0, kind))
        .collect();
    let wx: Vec<Vec<f64>> = (0..out_hw.1)
        .map(|o| axis_weights(o, w, out_hw.1, kind))
        .collect();
    Tensor::from_fn(
        flowsr_core::Shape::new(n, c, out_hw.0, out_hw.1),
        |[b, ch, oy, ox]| {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += x.at([b, ch, i, j]) * wy[oy][i] * wx[ox][j];
                }
            }
            acc
        },
    )
}
