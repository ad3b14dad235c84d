//! Directory-level operations behind each command-line subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::io::list_pngs;
use crate::data::{read_png, synth_clean_lr, write_gray_png, write_png, DatasetIndex, PairingMode};
use crate::degradation::{degrade_tensor, perturb_flow};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dirs, MetricReport};
use crate::srnet::{dump_condition_features, superresolve};
use crate::trainer::{self, Checkpoint, Stage, Stage1Trainer, Stage2Trainer, TrainConfig};

/// A complete training run: corpus location, output directory and the
/// training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory containing `hr/` and usually `lr/`.
    pub corpus: PathBuf,
    /// LR images to use instead of `<corpus>/lr`.
    #[serde(default)]
    pub lr_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults: unpaired for `degrade` and `sr_unpaired`; for `sr`,
    /// pseudo-paired when `lr_dir` is set and synthetic otherwise.
    #[serde(default)]
    pub pairing: Option<PairingMode>,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parse a JSON config; relative paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::path(path, e.to_string()))?;
        let mut rc: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut rc.corpus);
        fix(&mut rc.output_dir);
        if let Some(p) = rc.lr_dir.as_mut() {
            fix(p);
        }
        rc.train.validate()?;
        Ok(rc)
    }

    pub fn pairing(&self) -> PairingMode {
        self.pairing.unwrap_or(match self.train.stage {
            Stage::Degrade | Stage::SrUnpaired => PairingMode::Unpaired,
            Stage::Sr if self.lr_dir.is_some() => PairingMode::PseudoPaired,
            Stage::Sr => PairingMode::PairedSynthetic,
        })
    }

    pub fn load_index(&self) -> Result<DatasetIndex> {
        DatasetIndex::load(
            &self.corpus,
            self.lr_dir.as_deref(),
            self.pairing(),
            self.train.scale_factor,
        )
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoints")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("final.sfsr")
    }

    pub fn loss_log(&self) -> PathBuf {
        self.output_dir.join("loss.tsv")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub iterations: u64,
}

/// Train the stage named in `rc`, writing `loss.tsv` and
/// `checkpoints/` under the output directory.
pub fn train(rc: &RunConfig, stages: &[Stage]) -> Result<TrainOutcome> {
    let cfg = rc.train.clone();
    if !stages.contains(&cfg.stage) {
        let names: Vec<_> = stages.iter().map(|s| s.name()).collect();
        return Err(Error::Config(format!(
            "config stage is {}, this command trains {}",
            cfg.stage.name(),
            names.join(" or ")
        )));
    }
    let index = rc.load_index()?;
    std::fs::create_dir_all(&rc.output_dir)
        .map_err(|e| Error::path(&rc.output_dir, e.to_string()))?;
    let log_path = rc.loss_log();
    let file = File::create(&log_path).map_err(|e| Error::path(&log_path, e.to_string()))?;
    let mut log = BufWriter::new(file);
    let ck_dir = rc.checkpoint_dir();
    let every = cfg.checkpoint_every;
    let ck = match cfg.stage {
        Stage::Degrade => {
            let mut t = Stage1Trainer::new(cfg, index)?;
            trainer::run(&mut t, every, &mut log, Some(&ck_dir))?
        }
        _ => {
            let mut t = Stage2Trainer::new(cfg, index)?;
            trainer::run(&mut t, every, &mut log, Some(&ck_dir))?
        }
    };
    Ok(TrainOutcome {
        checkpoint: rc.final_checkpoint(),
        loss_log: log_path,
        iterations: ck.iter,
    })
}

fn input_pngs(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::path(dir, "input directory not found"));
    }
    let names = list_pngs(dir)?;
    if names.is_empty() {
        return Err(Error::path(dir, "no PNG images"));
    }
    Ok(names)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub noise_std: f64,
    pub seed: u64,
}

/// Degrade every PNG in `in_dir` into `out_dir` (same file names). With
/// `downsample`, inputs are first bicubic-downsampled by that factor. With
/// `perturb`, flow-perturbed variants go to `out_dir/perturbed/`.
pub fn degrade_dir(
    ckpt: &Path,
    in_dir: &Path,
    out_dir: &Path,
    downsample: Option<u32>,
    perturb: Option<Perturbation>,
) -> Result<usize> {
    let ck = Checkpoint::<f32>::load(ckpt)?;
    ck.expect(&[Stage::Degrade], None)?;
    let net = *ck.arch.degrade()?;
    let names = input_pngs(in_dir)?;
    for name in &names {
        let mut rec = read_png(&in_dir.join(name), name.clone())?;
        if let Some(f) = downsample {
            rec = synth_clean_lr(&rec, f)?;
        }
        let out = degrade_tensor(&ck.params, &net, &rec.pixels)?;
        write_png(&out_dir.join(name), &out.degraded)?;
        if let Some(p) = perturb {
            let img = perturb_flow(&out, p.noise_std, p.seed)?;
            write_png(&out_dir.join("perturbed").join(name), &img)?;
        }
    }
    Ok(names.len())
}

/// Upscale every PNG in `in_dir` at the checkpoint's final scale.
pub fn superres_dir(
    ckpt: &Path,
    in_dir: &Path,
    out_dir: &Path,
    scale: Option<u32>,
) -> Result<usize> {
    let ck = Checkpoint::<f32>::load(ckpt)?;
    ck.expect(&[Stage::Sr, Stage::SrUnpaired], scale)?;
    let net = *ck.arch.sr()?;
    let state = ck
        .progress
        .clone()
        .ok_or_else(|| Error::Data("checkpoint lacks progressive state".into()))?;
    if state.scale() != ck.arch.scale_factor {
        return Err(Error::Config(format!(
            "checkpoint has reached x{} of its final x{}",
            state.scale(),
            ck.arch.scale_factor
        )));
    }
    let names = input_pngs(in_dir)?;
    for name in &names {
        let rec = read_png(&in_dir.join(name), name.clone())?;
        let out = superresolve(&ck.params, &net, &state, &rec.pixels)?;
        write_png(&out_dir.join(name), &out)?;
    }
    Ok(names.len())
}

/// Score `pred_dir` against `gt_dir`; writes `report.tsv` and
/// `report.json` into `out_dir`.
pub fn eval(
    pred_dir: &Path,
    gt_dir: &Path,
    out_dir: &Path,
    crop_border: usize,
) -> Result<MetricReport> {
    let report = evaluate_dirs(pred_dir, gt_dir, crop_border)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::path(out_dir, e.to_string()))?;
    let tsv = out_dir.join("report.tsv");
    std::fs::write(&tsv, report.to_tsv()).map_err(|e| Error::path(&tsv, e.to_string()))?;
    let json = out_dir.join("report.json");
    std::fs::write(&json, report.to_json()).map_err(|e| Error::path(&json, e.to_string()))?;
    Ok(report)
}

/// Write one grayscale PNG per modulation channel of `level`.
pub fn dump_features(
    ckpt: &Path,
    image: &Path,
    level: u32,
    block: usize,
    out_dir: &Path,
) -> Result<usize> {
    let ck = Checkpoint::<f32>::load(ckpt)?;
    ck.expect(&[Stage::Sr, Stage::SrUnpaired], None)?;
    let net = *ck.arch.sr()?;
    let state = ck
        .progress
        .clone()
        .ok_or_else(|| Error::Data("checkpoint lacks progressive state".into()))?;
    let rec = read_png(image, image.display().to_string())?;
    let maps = dump_condition_features(&ck.params, &net, &state, &rec.pixels, level, block)?;
    for (c, m) in maps.iter().enumerate() {
        write_gray_png(
            &out_dir.join(format!("level{level}_block{block}_ch{c:03}.png")),
            m,
        )?;
    }
    Ok(maps.len())
}
