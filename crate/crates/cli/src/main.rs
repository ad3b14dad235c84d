//! `flowsr` command-line driver.
//!
//! Exit status: 0 ok, 2 configuration error, 3 data error, 4 numerical
//! failure, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use flowsr_core::data::{write_corpus, CorpusSpec};
use flowsr_core::pipeline::{self, Perturbation, RunConfig};
use flowsr_core::trainer::{Stage, TrainConfig};
use flowsr_core::ErrorKind;

#[derive(Parser)]
#[command(
    name = "flowsr",
    version,
    about = "Learned degradation and progressive face super-resolution"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the degradation network from a JSON run config.
    TrainDegrade {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the super-resolution network from a JSON run config.
    TrainSr {
        #[arg(long)]
        config: PathBuf,
    },
    /// Turn clean LR images into degraded ones.
    Degrade {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write variants with Gaussian noise of this std added to the flow.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, default_value_t = 0, requires = "perturb")]
        seed: u64,
        /// Bicubic-downsample inputs by this factor first (for HR inputs).
        #[arg(long)]
        downsample: Option<u32>,
    },
    /// Upscale LR images at the checkpoint's final scale.
    Superres {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless the checkpoint upscales by exactly this factor.
        #[arg(long)]
        scale: Option<u32>,
    },
    /// PSNR/SSIM on the Y channel; writes report.tsv and report.json.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pixels trimmed from every border before scoring.
        #[arg(long, default_value_t = 0)]
        crop: usize,
    },
    /// Write the condition-branch modulation maps of one block as PNGs.
    DumpFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 0)]
        block: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a procedural face corpus (hr/ and lr/).
    MakeCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        hr_size: usize,
        #[arg(long, default_value_t = 4)]
        lr_factor: usize,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a run config for a preset.
    Config {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long, default_value = "corpus")]
        corpus: PathBuf,
        #[arg(long, default_value = "runs/out")]
        output_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    DeskDegrade,
    DeskSrX2,
    FullDegrade,
    FullPairedX8,
    FullUnpairedX8,
    FullRealX4,
}

impl Preset {
    fn train(self) -> TrainConfig {
        match self {
            Preset::DeskDegrade => TrainConfig::desk_degrade(),
            Preset::DeskSrX2 => TrainConfig::desk_sr_x2(),
            Preset::FullDegrade => TrainConfig::full_degrade(),
            Preset::FullPairedX8 => TrainConfig::full_paired_x8(),
            Preset::FullUnpairedX8 => TrainConfig::full_unpaired_x8(),
            Preset::FullRealX4 => TrainConfig::full_real_x4(),
        }
    }
}

fn train(config: &Path, stages: &[Stage]) -> Result<()> {
    let rc = RunConfig::load(config)?;
    let out = pipeline::train(&rc, stages)?;
    println!(
        "trained {} iterations; checkpoint {}; losses {}",
        out.iterations,
        out.checkpoint.display(),
        out.loss_log.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::TrainDegrade { config } => train(&config, &[Stage::Degrade])?,
        Command::TrainSr { config } => train(&config, &[Stage::Sr, Stage::SrUnpaired])?,
        Command::Degrade {
            ckpt,
            input,
            out,
            perturb,
            seed,
            downsample,
        } => {
            let p = perturb.map(|noise_std| Perturbation { noise_std, seed });
            let n = pipeline::degrade_dir(&ckpt, &input, &out, downsample, p)?;
            println!("degraded {n} images into {}", out.display());
        }
        Command::Superres {
            ckpt,
            input,
            out,
            scale,
        } => {
            let n = pipeline::superres_dir(&ckpt, &input, &out, scale)?;
            println!("wrote {n} images to {}", out.display());
        }
        Command::Eval {
            pred,
            gt,
            out,
            crop,
        } => {
            let r = pipeline::eval(&pred, &gt, &out, crop)?;
            println!(
                "{} images: mean PSNR {:.3} dB, mean SSIM {:.4}",
                r.count, r.mean_psnr_db, r.mean_ssim
            );
        }
        Command::DumpFeatures {
            ckpt,
            input,
            level,
            block,
            out,
        } => {
            let n = pipeline::dump_features(&ckpt, &input, level, block, &out)?;
            println!("wrote {n} feature maps to {}", out.display());
        }
        Command::MakeCorpus {
            out,
            count,
            hr_size,
            lr_factor,
            noise,
            seed,
        } => {
            if count == 0 {
                bail!(flowsr_core::Error::Config(
                    "--count must be at least 1".into()
                ));
            }
            let spec = CorpusSpec {
                count,
                hr_size,
                lr_factor,
                noise,
                seed,
            };
            write_corpus(&out, &spec)
                .with_context(|| format!("writing corpus to {}", out.display()))?;
            println!(
                "wrote {count} HR and {count} LR images under {}",
                out.display()
            );
        }
        Command::Config {
            preset,
            corpus,
            output_dir,
        } => {
            let rc = RunConfig {
                corpus,
                lr_dir: None,
                output_dir,
                pairing: None,
                train: preset.train(),
            };
            println!("{}", serde_json::to_string_pretty(&rc)?);
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<flowsr_core::Error>())
        .map(|fe| fe.kind());
    match kind {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numerical) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
