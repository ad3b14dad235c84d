//! PSNR and SSIM on the BT.601 luma channel.

use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::data::{io::list_pngs, read_png};
use crate::error::{Error, Result};
use crate::imageops::{rgb_to_y, to_unit_range};
use crate::tensor::{Scalar, Shape, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn luma<T: Scalar>(img: &Tensor<T>, crop: usize) -> Result<Vec<f64>> {
    let y = rgb_to_y(img)?;
    let s = y.shape();
    if s.n() != 1 {
        return Err(Error::invalid(
            "metrics",
            format!("expected a single image, got batch {}", s.n()),
        ));
    }
    if 2 * crop >= s.h() || 2 * crop >= s.w() {
        return Err(Error::invalid(
            "metrics",
            format!("crop {crop} leaves nothing of {}x{}", s.h(), s.w()),
        ));
    }
    let mut out = Vec::with_capacity((s.h() - 2 * crop) * (s.w() - 2 * crop));
    for r in crop..s.h() - crop {
        for c in crop..s.w() - crop {
            out.push(y.at([0, 0, r, c]).f64());
        }
    }
    Ok(out)
}

fn same_dims(a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            lhs: a,
            rhs: b,
        });
    }
    Ok(())
}

/// `10 log10(1 / mse)`; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr_planes(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    psnr_from_mse(mse)
}

/// PSNR on luma of two `(1, 3, h, w)` RGB images in `[0, 1]`.
pub fn psnr_y<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    psnr_y_cropped(a, b, 0)
}

pub fn psnr_y_cropped<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, crop: usize) -> Result<f64> {
    same_dims(a.shape(), b.shape())?;
    Ok(psnr_planes(&luma(a, crop)?, &luma(b, crop)?))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable valid-mode Gaussian filter of an `h x w` plane.
fn filter_valid(p: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid window positions of two `h x w` planes.
pub fn ssim_planes(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("{h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let g = gaussian_window();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let aa = filter_valid(&prod(a, a), h, w, &g);
    let bb = filter_valid(&prod(b, b), h, w, &g);
    let ab = filter_valid(&prod(a, b), h, w, &g);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

pub fn ssim_y<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ssim_y_cropped(a, b, 0)
}

pub fn ssim_y_cropped<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, crop: usize) -> Result<f64> {
    same_dims(a.shape(), b.shape())?;
    let (h, w) = a.shape().hw();
    ssim_planes(&luma(a, crop)?, &luma(b, crop)?, h - 2 * crop, w - 2 * crop)
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn de_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Str(s) => Err(serde::de::Error::custom(format!("bad dB value {s:?}"))),
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_image: Vec<ImageScore>,
    /// Mean over finite PSNR values; `inf` if every entry is infinite.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub count: usize,
    /// Entries left out of the PSNR mean because they were infinite.
    pub psnr_excluded: usize,
}

impl MetricReport {
    pub fn from_scores(per_image: Vec<ImageScore>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Data("no images to score".into()));
        }
        let finite: Vec<f64> = per_image
            .iter()
            .map(|s| s.psnr_db)
            .filter(|v| v.is_finite())
            .collect();
        let excluded = per_image.len() - finite.len();
        if excluded > 0 {
            log::warn!("{excluded} image(s) have infinite PSNR and are left out of the mean");
        }
        let mean_psnr_db = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let mean_ssim = per_image.iter().map(|s| s.ssim).sum::<f64>() / per_image.len() as f64;
        Ok(Self {
            count: per_image.len(),
            per_image,
            mean_psnr_db,
            mean_ssim,
            psnr_excluded: excluded,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("id\tpsnr_db\tssim\n");
        for r in &self.per_image {
            s.push_str(&format!("{}\t{}\t{:.6}\n", r.id, fmt_db(r.psnr_db), r.ssim));
        }
        s.push_str(&format!(
            "mean\t{}\t{:.6}\n",
            fmt_db(self.mean_psnr_db),
            self.mean_ssim
        ));
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Score every PNG in `pred_dir` against the same-named file in `gt_dir`.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, crop_border: usize) -> Result<MetricReport> {
    let names = list_pngs(pred_dir)?;
    if !gt_dir.is_dir() {
        return Err(Error::path(gt_dir, "ground-truth directory not found"));
    }
    let mut scores = Vec::with_capacity(names.len());
    for name in names {
        let gt_path = gt_dir.join(&name);
        if !gt_path.is_file() {
            return Err(Error::path(&gt_path, "no ground truth for prediction"));
        }
        let p = to_unit_range(
            &read_png(&pred_dir.join(&name), name.clone())?
                .pixels
                .cast::<f64>(),
        );
        let g = to_unit_range(&read_png(&gt_path, name.clone())?.pixels.cast::<f64>());
        scores.push(ImageScore {
            id: name,
            psnr_db: psnr_y_cropped(&p, &g, crop_border)?,
            ssim: ssim_y_cropped(&p, &g, crop_border)?,
        });
    }
    MetricReport::from_scores(scores)
}
