use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_dir_pngs, ImageRecord};
use crate::error::{Error, Result};
use crate::imageops::{resize_tensor, ResizeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// LR images are bicubic downsamples of the HR images.
    PairedSynthetic,
    /// Independent LR and HR sets.
    Unpaired,
    /// LR images (e.g. degraded outputs) aligned 1:1 with HR by id.
    PseudoPaired,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub hr: Vec<ImageRecord>,
    pub lr: Vec<ImageRecord>,
    pub mode: PairingMode,
}

/// Bicubic downsample by `factor` (2, 4 or 8).
pub fn synth_clean_lr(hr: &ImageRecord, factor: u32) -> Result<ImageRecord> {
    if !matches!(factor, 2 | 4 | 8) {
        return Err(Error::Config(format!(
            "downsample factor must be 2, 4 or 8, got {factor}"
        )));
    }
    let f = factor as usize;
    let (h, w) = hr.dims();
    if h % f != 0 || w % f != 0 {
        return Err(Error::Data(format!(
            "{}: {h}x{w} is not divisible by {factor}",
            hr.id
        )));
    }
    let pixels = resize_tensor(&hr.pixels, (h / f, w / f), ResizeKind::Bicubic)?;
    Ok(ImageRecord {
        id: hr.id.clone(),
        pixels,
        source_dims: hr.source_dims,
    })
}

fn check_uniform(records: &[ImageRecord], what: &str) -> Result<()> {
    if let Some(first) = records.first() {
        if let Some(r) = records.iter().find(|r| r.dims() != first.dims()) {
            return Err(Error::Data(format!(
                "{what} images differ in size: {} is {:?}, {} is {:?}",
                first.id,
                first.dims(),
                r.id,
                r.dims()
            )));
        }
    }
    Ok(())
}

impl DatasetIndex {
    pub fn paired_synthetic(mut hr: Vec<ImageRecord>, factor: u32) -> Result<Self> {
        hr.sort_by(|a, b| a.id.cmp(&b.id));
        let lr = hr
            .iter()
            .map(|r| synth_clean_lr(r, factor))
            .collect::<Result<_>>()?;
        Self::checked(hr, lr, PairingMode::PairedSynthetic)
    }

    pub fn unpaired(mut hr: Vec<ImageRecord>, mut lr: Vec<ImageRecord>) -> Result<Self> {
        hr.sort_by(|a, b| a.id.cmp(&b.id));
        lr.sort_by(|a, b| a.id.cmp(&b.id));
        Self::checked(hr, lr, PairingMode::Unpaired)
    }

    pub fn pseudo_paired(mut hr: Vec<ImageRecord>, mut lr: Vec<ImageRecord>) -> Result<Self> {
        hr.sort_by(|a, b| a.id.cmp(&b.id));
        lr.sort_by(|a, b| a.id.cmp(&b.id));
        if hr.len() != lr.len() {
            return Err(Error::Data(format!(
                "{} HR images but {} LR images",
                hr.len(),
                lr.len()
            )));
        }
        if let Some((h, l)) = hr.iter().zip(&lr).find(|(h, l)| h.id != l.id) {
            return Err(Error::Data(format!(
                "no LR image for {} (found {})",
                h.id, l.id
            )));
        }
        Self::checked(hr, lr, PairingMode::PseudoPaired)
    }

    fn checked(hr: Vec<ImageRecord>, lr: Vec<ImageRecord>, mode: PairingMode) -> Result<Self> {
        if hr.is_empty() {
            return Err(Error::Data("no HR images".into()));
        }
        if lr.is_empty() {
            return Err(Error::Data("no LR images".into()));
        }
        check_uniform(&hr, "HR")?;
        check_uniform(&lr, "LR")?;
        Ok(Self { hr, lr, mode })
    }

    /// Load `<root>/hr` and, unless synthesizing, an LR directory
    /// (`lr_dir` or `<root>/lr`).
    pub fn load(
        root: &Path,
        lr_dir: Option<&Path>,
        mode: PairingMode,
        factor: u32,
    ) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::path(root, "corpus directory not found"));
        }
        let hr = read_dir_pngs(&root.join("hr"))?;
        if mode == PairingMode::PairedSynthetic {
            return Self::paired_synthetic(hr, factor);
        }
        let lr_path = lr_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| root.join("lr"));
        let lr = read_dir_pngs(&lr_path)?;
        match mode {
            PairingMode::Unpaired => Self::unpaired(hr, lr),
            _ => Self::pseudo_paired(hr, lr),
        }
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        self.hr[0].dims()
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        self.lr[0].dims()
    }

    pub fn is_paired(&self) -> bool {
        self.mode != PairingMode::Unpaired
    }
}
