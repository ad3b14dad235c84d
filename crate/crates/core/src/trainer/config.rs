use serde::{Deserialize, Serialize};

use crate::degradation::DegradeNetConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::srnet::SrNetConfig;

use super::adam::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Degradation network on unpaired clean/real LR.
    Degrade,
    /// SR on aligned LR/HR pairs with the L1 reconstruction term.
    Sr,
    /// SR on unpaired sets with the cycle reconstruction term.
    SrUnpaired,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Degrade => "degrade",
            Stage::Sr => "sr",
            Stage::SrUnpaired => "sr_unpaired",
        }
    }

    pub fn is_sr(self) -> bool {
        self != Stage::Degrade
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    None,
    /// Constant for the first half, then linear to zero at `total_iters`.
    LinearLastHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub total_iters: u64,
    #[serde(default)]
    pub grow_steps: Vec<u64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub fade_steps: u64,
    #[serde(default = "default_decay")]
    pub lr_decay: LrDecay,
    /// Apply the R1 penalty every this many iterations.
    #[serde(default = "default_one")]
    pub r1_interval: u64,
    /// 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// HR size over LR size. For SR stages this is the final upscaling.
    pub scale_factor: u32,
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub degrade_net: DegradeNetConfig,
    #[serde(default)]
    pub sr_net: SrArch,
}

/// SR network shape apart from its final scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrArch {
    pub base_width: usize,
    pub blocks_per_level: usize,
    pub eps: f64,
}

impl Default for SrArch {
    fn default() -> Self {
        let d = SrNetConfig::default();
        Self {
            base_width: d.base_width,
            blocks_per_level: d.blocks_per_level,
            eps: d.eps,
        }
    }
}

fn default_batch() -> usize {
    4
}

fn default_decay() -> LrDecay {
    LrDecay::None
}

fn default_one() -> u64 {
    1
}

impl TrainConfig {
    pub fn sr_config(&self) -> SrNetConfig {
        SrNetConfig {
            base_width: self.sr_net.base_width,
            blocks_per_level: self.sr_net.blocks_per_level,
            final_scale: self.scale_factor,
            eps: self.sr_net.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.total_iters == 0 {
            return bad("total_iters must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.r1_interval == 0 {
            return bad("r1_interval must be at least 1".into());
        }
        if !matches!(self.scale_factor, 2 | 4 | 8) {
            return bad(format!(
                "scale_factor must be 2, 4 or 8, got {}",
                self.scale_factor
            ));
        }
        if self.grow_steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("grow_steps must be strictly increasing".into());
        }
        if let Some(&last) = self.grow_steps.last() {
            if last >= self.total_iters {
                return bad(format!(
                    "grow step {last} is not below total_iters {}",
                    self.total_iters
                ));
            }
        }
        match self.stage {
            Stage::Degrade => {
                if !self.grow_steps.is_empty() {
                    return bad("the degrade stage does not grow".into());
                }
                self.degrade_net.validate()
            }
            _ => {
                let need = self.scale_factor.trailing_zeros() as usize - 1;
                if self.grow_steps.len() != need {
                    return bad(format!(
                        "scale_factor {} needs {need} grow step(s), got {}",
                        self.scale_factor,
                        self.grow_steps.len()
                    ));
                }
                self.sr_config().validate()
            }
        }
    }

    /// Learning rate at iteration `iter` (0-based).
    pub fn lr_at(&self, iter: u64) -> f64 {
        match self.lr_decay {
            LrDecay::None => self.lr,
            LrDecay::LinearLastHalf => {
                let t = self.total_iters;
                let half = t / 2;
                if iter < half {
                    self.lr
                } else {
                    self.lr * (t.saturating_sub(iter)) as f64 / (t - half) as f64
                }
            }
        }
    }

    fn base(stage: Stage, lr: f64, total_iters: u64, scale_factor: u32) -> Self {
        Self {
            stage,
            lr,
            total_iters,
            grow_steps: Vec::new(),
            batch: 4,
            seed: 0,
            weights: LossWeights::default(),
            fade_steps: 0,
            lr_decay: LrDecay::None,
            r1_interval: 1,
            checkpoint_every: 0,
            scale_factor,
            hflip: true,
            adam: AdamConfig::default(),
            degrade_net: DegradeNetConfig::default(),
            sr_net: SrArch::default(),
        }
    }

    /// Degradation network at full scale: 180k iterations from 2e-4 with
    /// linear decay over the second half, 64 -> 16 faces.
    pub fn full_degrade() -> Self {
        Self {
            lr_decay: LrDecay::LinearLastHalf,
            batch: 48,
            ..Self::base(Stage::Degrade, 2e-4, 180_000, 4)
        }
    }

    /// Paired x8 SR: 160k iterations, growing at 20k and 80k.
    pub fn full_paired_x8() -> Self {
        Self {
            grow_steps: vec![20_000, 80_000],
            batch: 48,
            sr_net: SrArch {
                base_width: 64,
                ..SrArch::default()
            },
            ..Self::base(Stage::Sr, 0.003, 160_000, 8)
        }
    }

    /// Unpaired x8 SR: 280k iterations, growing at 40k and 120k.
    pub fn full_unpaired_x8() -> Self {
        Self {
            grow_steps: vec![40_000, 120_000],
            total_iters: 280_000,
            ..Self::full_paired_x8()
        }
        .with_stage(Stage::SrUnpaired)
    }

    /// Real-face x4 SR on pseudo pairs: 160k iterations, growing at 60k.
    pub fn full_real_x4() -> Self {
        Self {
            grow_steps: vec![60_000],
            batch: 48,
            sr_net: SrArch {
                base_width: 64,
                ..SrArch::default()
            },
            ..Self::base(Stage::Sr, 0.003, 160_000, 4)
        }
    }

    /// Small CPU run of the degradation stage.
    pub fn desk_degrade() -> Self {
        Self {
            lr_decay: LrDecay::LinearLastHalf,
            ..Self::base(Stage::Degrade, 2e-4, 300, 4)
        }
    }

    /// Small CPU run of x2 SR.
    pub fn desk_sr_x2() -> Self {
        Self::base(Stage::Sr, 0.003, 300, 2)
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }
}
