//! Procedural face-like test images: an elliptical head with eyes, nose,
//! mouth and hair, under random hue, size, offset and tilt.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::io::write_png;
use crate::error::{Error, Result};
use crate::imageops::{resize_tensor, ResizeKind};
use crate::params::rng_for;
use crate::tensor::{Shape, Tensor};

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        dx * dx + dy * dy <= 1.0
    }
}

struct Face {
    background: [f64; 3],
    /// Head-frame ellipses, painted in order.
    parts: Vec<Ellipse>,
    center: (f64, f64),
    tilt: f64,
}

impl Face {
    fn random(rng: &mut impl Rng) -> Self {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let skin = [u(0.55, 0.95), u(0.4, 0.75), u(0.3, 0.65)];
        let hair = [u(0.05, 0.5), u(0.03, 0.35), u(0.02, 0.25)];
        let background = [u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)];
        let (rx, ry) = (u(0.27, 0.33), u(0.35, 0.41));
        let eye_dx = u(0.1, 0.14);
        let eye_y = u(-0.1, -0.05);
        let iris = [u(0.05, 0.4), u(0.05, 0.4), u(0.05, 0.4)];
        let mouth_y = u(0.15, 0.22);
        let mouth_w = u(0.07, 0.12);
        let lips = [u(0.55, 0.85), u(0.15, 0.35), u(0.15, 0.35)];
        let center = (0.5 + u(-0.04, 0.04), 0.52 + u(-0.04, 0.04));
        let tilt = u(-0.2, 0.2);
        let shade = |c: [f64; 3], k: f64| c.map(|v| v * k);
        let e = |cx, cy, rx, ry, color| Ellipse {
            cx,
            cy,
            rx,
            ry,
            color,
        };
        let parts = vec![
            e(0.0, -0.08, rx * 1.08, ry * 0.95, hair),
            e(0.0, 0.0, rx, ry, skin),
            e(-eye_dx, eye_y, 0.055, 0.03, [0.95, 0.95, 0.95]),
            e(eye_dx, eye_y, 0.055, 0.03, [0.95, 0.95, 0.95]),
            e(-eye_dx, eye_y, 0.022, 0.022, iris),
            e(eye_dx, eye_y, 0.022, 0.022, iris),
            e(-eye_dx, eye_y - 0.06, 0.06, 0.012, shade(hair, 0.8)),
            e(eye_dx, eye_y - 0.06, 0.06, 0.012, shade(hair, 0.8)),
            e(0.0, 0.06, 0.025, 0.05, shade(skin, 0.85)),
            e(0.0, mouth_y, mouth_w, 0.025, lips),
        ];
        Self {
            background,
            parts,
            center,
            tilt,
        }
    }

    fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let (s, c) = self.tilt.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (hx, hy) = (c * dx + s * dy, -s * dx + c * dy);
        let mut color = self.background;
        for p in &self.parts {
            if p.contains(hx, hy) {
                color = p.color;
            }
        }
        color
    }
}

/// One `size x size` face, `(1, 3, size, size)` in `[-1, 1]`.
pub fn procedural_face(size: usize, seed: u64) -> Tensor<f32> {
    const SS: usize = 4;
    let face = Face::random(&mut rng_for(seed, "face"));
    let mut acc = vec![[0.0f64; 3]; size * size];
    for (i, px) in acc.iter_mut().enumerate() {
        let (y, x) = (i / size, i % size);
        for sy in 0..SS {
            for sx in 0..SS {
                let u = (x as f64 + (sx as f64 + 0.5) / SS as f64) / size as f64;
                let v = (y as f64 + (sy as f64 + 0.5) / SS as f64) / size as f64;
                let c = face.color_at(u, v);
                for k in 0..3 {
                    px[k] += c[k];
                }
            }
        }
    }
    let norm = (SS * SS) as f64;
    Tensor::from_fn(Shape::new(1, 3, size, size), |[_, c, y, x]| {
        (acc[y * size + x][c] / norm * 2.0 - 1.0) as f32
    })
}

/// Bicubic downsample, 3x3 box blur and Gaussian noise: a stand-in for
/// "real" low-quality captures.
pub fn degrade_for_corpus(
    img: &Tensor<f32>,
    factor: usize,
    noise: f64,
    seed: u64,
) -> Result<Tensor<f32>> {
    let (h, w) = img.shape().hw();
    let small = resize_tensor(img, (h / factor, w / factor), ResizeKind::Bicubic)?;
    let s = small.shape();
    let mut rng = rng_for(seed, "corpus.noise");
    let blurred = Tensor::from_fn(s, |[n, c, y, x]| {
        let mut acc = 0.0f32;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let yy = (y as i64 + dy).clamp(0, s.h() as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, s.w() as i64 - 1) as usize;
                acc += small.at([n, c, yy, xx]);
            }
        }
        acc / 9.0
    });
    let mut out = blurred;
    for v in out.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (*v as f64 + noise * z).clamp(-1.0, 1.0) as f32;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub count: usize,
    pub hr_size: usize,
    /// HR size over LR size for the `lr/` images.
    pub lr_factor: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            count: 16,
            hr_size: 64,
            lr_factor: 4,
            noise: 0.03,
            seed: 0,
        }
    }
}

/// Write `hr/face_NNN.png` and `lr/face_NNN.png`. The LR set shows
/// different faces than the HR set, so the two are genuinely unpaired.
pub fn write_corpus(root: &Path, spec: &CorpusSpec) -> Result<()> {
    if spec.count == 0 || spec.lr_factor == 0 || !spec.hr_size.is_multiple_of(spec.lr_factor) {
        return Err(Error::Config(format!(
            "hr_size {} must be a positive multiple of lr_factor {}",
            spec.hr_size, spec.lr_factor
        )));
    }
    for i in 0..spec.count {
        let name = format!("face_{i:03}.png");
        let hr = procedural_face(spec.hr_size, spec.seed.wrapping_add(i as u64));
        write_png(&root.join("hr").join(&name), &hr)?;
        let other_seed = spec.seed.wrapping_add((spec.count + i) as u64);
        let other = procedural_face(spec.hr_size, other_seed);
        let lr = degrade_for_corpus(&other, spec.lr_factor, spec.noise, other_seed)?;
        write_png(&root.join("lr").join(&name), &lr)?;
    }
    Ok(())
}
