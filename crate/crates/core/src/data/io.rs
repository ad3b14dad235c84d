//! 8-bit PNG decoding and encoding.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::imageops::{from_unit_range, to_unit_range};
use crate::tensor::{Scalar, Shape, Tensor};

/// A decoded image, `(1, 3, h, w)` in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    /// Path relative to the directory it was loaded from.
    pub id: String,
    pub pixels: Tensor<f32>,
    pub source_dims: (usize, usize),
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, pixels: Tensor<f32>) -> Self {
        let source_dims = pixels.shape().hw();
        Self {
            id: id.into(),
            pixels,
            source_dims,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.shape().hw()
    }
}

/// Interleaved RGB bytes to a `(1, 3, h, w)` tensor in `[-1, 1]`.
pub fn tensor_from_rgb8<T: Scalar>(w: usize, h: usize, rgb: &[u8]) -> Result<Tensor<T>> {
    if rgb.len() != w * h * 3 {
        return Err(Error::Data(format!(
            "expected {} bytes for {w}x{h} RGB, got {}",
            w * h * 3,
            rgb.len()
        )));
    }
    let unit = Tensor::from_fn(Shape::new(1, 3, h, w), |[_, c, y, x]| {
        T::of(rgb[(y * w + x) * 3 + c] as f64 / 255.0)
    });
    Ok(from_unit_range(&unit))
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (v.f64() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// `(1, 3, h, w)` in `[-1, 1]` to interleaved RGB bytes.
pub fn rgb8_from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.n() != 1 || s.c() != 3 {
        return Err(Error::invalid(
            "encode",
            format!("expected (1, 3, h, w), got {s}"),
        ));
    }
    let unit = to_unit_range(t);
    let mut out = Vec::with_capacity(s.numel());
    for y in 0..s.h() {
        for x in 0..s.w() {
            for c in 0..3 {
                out.push(quantize(unit.at([0, c, y, x])));
            }
        }
    }
    Ok(out)
}

pub fn read_png(path: &Path, id: impl Into<String>) -> Result<ImageRecord> {
    let img = image::open(path)
        .map_err(|e| Error::path(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = tensor_from_rgb8(w, h, img.as_raw())?;
    Ok(ImageRecord::new(id, pixels))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::path(dir, e.to_string()))?;
        }
    }
    Ok(())
}

/// Write a `(1, 3, h, w)` image in `[-1, 1]`.
pub fn write_png<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let s = t.shape();
    let bytes = rgb8_from_tensor(t)?;
    let img = RgbImage::from_raw(s.w() as u32, s.h() as u32, bytes).expect("buffer size matches");
    ensure_parent(path)?;
    img.save(path).map_err(|e| Error::path(path, e.to_string()))
}

/// Write a single-channel `(1, 1, h, w)` map in `[0, 1]` as grayscale.
pub fn write_gray_png<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let s = t.shape();
    if s.n() != 1 || s.c() != 1 {
        return Err(Error::invalid(
            "encode",
            format!("expected (1, 1, h, w), got {s}"),
        ));
    }
    let bytes = t.data().iter().map(|&v| quantize(v)).collect();
    let img = GrayImage::from_raw(s.w() as u32, s.h() as u32, bytes).expect("buffer size matches");
    ensure_parent(path)?;
    img.save(path).map_err(|e| Error::path(path, e.to_string()))
}

/// Sorted relative paths of the `.png` files directly inside `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::path(dir, e.to_string()))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::path(dir, e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_file() && name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn read_dir_pngs(dir: &Path) -> Result<Vec<ImageRecord>> {
    list_pngs(dir)?
        .into_iter()
        .map(|name| read_png(&dir.join(&name), name))
        .collect()
}
