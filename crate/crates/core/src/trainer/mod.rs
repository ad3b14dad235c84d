//! Optimization loops for both stages, Adam, configuration and the
//! checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod stage1;
pub mod stage2;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{ArchConfig, Checkpoint};
pub use config::{LrDecay, SrArch, Stage, TrainConfig};
pub use stage1::Stage1Trainer;
pub use stage2::Stage2Trainer;

use crate::error::{Error, Result};

/// Scalar diagnostics of one iteration, keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLosses {
    pub iter: u64,
    pub values: BTreeMap<&'static str, f64>,
}

impl StepLosses {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// `iter<TAB>name<TAB>value` lines.
    pub fn tsv(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{}\t{k}\t{v}\n", self.iter))
            .collect()
    }
}

fn check_finite(values: &BTreeMap<&'static str, f64>) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((k, v)) => Err(Error::Numerical(format!("{k} = {v}"))),
        None => Ok(()),
    }
}

fn diverged(iteration: u64, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } | Error::Numerical(_) => Error::Diverged {
            iteration,
            source: Box::new(e),
        },
        other => other,
    }
}

/// Either trainer, for code that drives them uniformly.
pub trait Trainer {
    fn step(&mut self) -> Result<StepLosses>;
    fn done(&self) -> bool;
    fn iter(&self) -> u64;
    fn checkpoint(&self) -> Checkpoint<f32>;
}

impl Trainer for Stage1Trainer {
    fn step(&mut self) -> Result<StepLosses> {
        Stage1Trainer::step(self)
    }
    fn done(&self) -> bool {
        Stage1Trainer::done(self)
    }
    fn iter(&self) -> u64 {
        self.iter
    }
    fn checkpoint(&self) -> Checkpoint<f32> {
        Stage1Trainer::checkpoint(self)
    }
}

impl Trainer for Stage2Trainer {
    fn step(&mut self) -> Result<StepLosses> {
        Stage2Trainer::step(self)
    }
    fn done(&self) -> bool {
        Stage2Trainer::done(self)
    }
    fn iter(&self) -> u64 {
        self.iter
    }
    fn checkpoint(&self) -> Checkpoint<f32> {
        Stage2Trainer::checkpoint(self)
    }
}

/// Train to completion, appending to `log` and writing checkpoints into
/// `ckpt_dir` every `checkpoint_every` iterations and at the end
/// (`final.sfsr`). Returns the final checkpoint.
pub fn run(
    trainer: &mut dyn Trainer,
    checkpoint_every: u64,
    log: &mut dyn Write,
    ckpt_dir: Option<&Path>,
) -> Result<Checkpoint<f32>> {
    while !trainer.done() {
        let losses = trainer.step()?;
        log.write_all(losses.tsv().as_bytes())?;
        let done = trainer.iter();
        if let Some(dir) = ckpt_dir {
            if checkpoint_every > 0 && done.is_multiple_of(checkpoint_every) && !trainer.done() {
                trainer
                    .checkpoint()
                    .save(&dir.join(format!("iter_{done:08}.sfsr")))?;
            }
        }
    }
    log.flush()?;
    let ck = trainer.checkpoint();
    if let Some(dir) = ckpt_dir {
        ck.save(&dir.join("final.sfsr"))?;
    }
    Ok(ck)
}
