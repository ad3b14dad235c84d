use std::collections::BTreeMap;

use super::adam::{adam_step, AdamState};
use super::checkpoint::{ArchConfig, Checkpoint};
use super::config::{Stage, TrainConfig};
use super::{check_finite, diverged, StepLosses};
use crate::autodiff::Tape;
use crate::data::{hflip_augment, BatchStream, DatasetIndex, PairingMode};
use crate::error::{Error, Result};
use crate::imageops::{resize_tensor, ResizeKind};
use crate::params::{derive_seed, Binder, ParamStore};
use crate::srnet::{self as sr, ProgressiveState, SrNetConfig, D_PREFIX, G_PREFIX};
use crate::tensor::Tensor;

/// Progressive SR training: alternating hinge D/G updates, R1 on real
/// images, and an L1 (paired) or cycle (unpaired) reconstruction term.
pub struct Stage2Trainer {
    pub cfg: TrainConfig,
    pub net: SrNetConfig,
    pub params: ParamStore<f32>,
    pub adam_g: AdamState<f32>,
    pub adam_d: AdamState<f32>,
    pub state: ProgressiveState,
    /// Completed iterations.
    pub iter: u64,
    stream: BatchStream,
}

impl Stage2Trainer {
    pub fn new(cfg: TrainConfig, index: DatasetIndex) -> Result<Self> {
        cfg.validate()?;
        match (cfg.stage, index.mode) {
            (Stage::Sr, PairingMode::PairedSynthetic | PairingMode::PseudoPaired) => {}
            (Stage::SrUnpaired, PairingMode::Unpaired) => {}
            (stage, mode) => {
                return Err(Error::Config(format!(
                    "stage {} cannot train on a {mode:?} corpus",
                    stage.name()
                )));
            }
        }
        let (lh, lw) = index.lr_dims();
        let f = cfg.scale_factor as usize;
        if (lh * f, lw * f) != index.hr_dims() {
            return Err(Error::Data(format!(
                "LR {lh}x{lw} upscaled by {f} does not match HR {:?}",
                index.hr_dims()
            )));
        }
        let net = cfg.sr_config();
        let mut params = ParamStore::new();
        sr::init_params(&mut params, &net, cfg.seed)?;
        let state =
            ProgressiveState::new(cfg.scale_factor, cfg.grow_steps.clone(), cfg.fade_steps)?;
        let stream = BatchStream::new(index, cfg.batch, derive_seed(cfg.seed, "data"))?;
        Ok(Self {
            adam_g: AdamState::new(cfg.adam),
            adam_d: AdamState::new(cfg.adam),
            cfg,
            net,
            params,
            state,
            iter: 0,
            stream,
        })
    }

    pub fn resume(cfg: TrainConfig, index: DatasetIndex, ck: Checkpoint<f32>) -> Result<Self> {
        ck.expect_config(&cfg)?;
        let mut t = Self::new(cfg, index)?;
        t.params = ck.params;
        t.state = ck
            .progress
            .ok_or_else(|| Error::Data("checkpoint lacks progressive state".into()))?;
        t.adam_g = ck
            .adam
            .get(G_PREFIX)
            .cloned()
            .unwrap_or_else(|| AdamState::new(t.cfg.adam));
        t.adam_d = ck
            .adam
            .get(D_PREFIX)
            .cloned()
            .unwrap_or_else(|| AdamState::new(t.cfg.adam));
        t.iter = ck.iter;
        for _ in 0..ck.iter {
            t.stream.next_batch()?;
        }
        Ok(t)
    }

    pub fn done(&self) -> bool {
        self.iter >= self.cfg.total_iters
    }

    /// Append levels whose grow step has been reached. Returns how many.
    pub fn maybe_grow(&mut self) -> Result<u32> {
        let mut grown = 0;
        while self.state.levels_at(self.iter) > self.state.active_levels {
            sr::grow(
                &mut self.state,
                &mut self.params,
                &self.net,
                self.cfg.seed,
                self.iter,
            )?;
            log::info!("iteration {}: grew to x{}", self.iter, self.state.scale());
            grown += 1;
        }
        Ok(grown)
    }

    pub fn step(&mut self) -> Result<StepLosses> {
        let it = self.iter;
        self.train_step().map_err(|e| diverged(it, e))
    }

    fn train_step(&mut self) -> Result<StepLosses> {
        self.maybe_grow()?;
        let it = self.iter;
        let lr = self.cfg.lr_at(it);
        let paired = self.cfg.stage == Stage::Sr;
        let mut batch = self.stream.next_batch()?;
        if self.cfg.hflip {
            batch = hflip_augment(&batch, paired, derive_seed(self.cfg.seed, "flip"), it)?;
        }
        let levels = self.state.active_levels;
        let (lh, lw) = batch.lr.shape().hw();
        let cur = (lh << levels, lw << levels);
        let real = if cur == batch.hr.shape().hw() {
            batch.hr.clone()
        } else {
            resize_tensor(&batch.hr, cur, ResizeKind::Bicubic)?
        };
        let fade = self.state.fade_alpha(it);
        let net = self.net;
        let w = self.cfg.weights;
        let mut losses = BTreeMap::new();

        // Discriminator.
        let d_grads = {
            let tape = Tape::new();
            let b = Binder::new(&tape, &self.params, Some(D_PREFIX));
            let fake = sr::sr_forward(
                &b,
                &net,
                &self.state,
                tape.constant(batch.lr.clone())?,
                fade,
            )?
            .detach()?;
            let use_r1 = w.r1 > 0.0 && it.is_multiple_of(self.cfg.r1_interval);
            let (r1, sr_scores) = if use_r1 {
                let (pen, scores) = sr::loss_r1(&b, &net, levels, &real, w.r1_gamma)?;
                (Some(pen), scores)
            } else {
                (
                    None,
                    sr::discriminate(&b, &net, levels, tape.constant(real.clone())?)?,
                )
            };
            let sf = sr::discriminate(&b, &net, levels, fake)?;
            let adv = sr::hinge_d_loss(sr_scores, sf)?;
            let total = sr::stage2_total(adv, None, r1, &w)?;
            losses.insert("d_adv", adv.item() as f64);
            if let Some(r1) = r1 {
                losses.insert("r1", r1.item() as f64);
            }
            b.backward(total)?
        };
        adam_step(&mut self.params, &d_grads, &mut self.adam_d, D_PREFIX, lr)?;

        // Generator.
        let g_grads = {
            let tape = Tape::new();
            let b = Binder::new(&tape, &self.params, Some(G_PREFIX));
            let x = tape.constant(batch.lr.clone())?;
            let fake = sr::sr_forward(&b, &net, &self.state, x, fade)?;
            let adv = sr::hinge_g_loss(sr::discriminate(&b, &net, levels, fake)?)?;
            let rec = if paired {
                sr::loss_rec(tape.constant(real)?, fake)?
            } else {
                sr::loss_rec_cycle(fake, x)?
            };
            let total = sr::stage2_total(adv, Some(rec), None, &w)?;
            losses.insert("g_adv", adv.item() as f64);
            losses.insert("rec", rec.item() as f64);
            losses.insert("g_total", total.item() as f64);
            b.backward(total)?
        };
        adam_step(&mut self.params, &g_grads, &mut self.adam_g, G_PREFIX, lr)?;
        losses.insert("lr", lr);
        losses.insert("scale", self.state.scale() as f64);
        check_finite(&losses)?;
        self.iter += 1;
        Ok(StepLosses {
            iter: it,
            values: losses,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            arch: ArchConfig::from_train(&self.cfg),
            iter: self.iter,
            progress: Some(self.state.clone()),
            params: self.params.clone(),
            adam: [
                (G_PREFIX.to_string(), self.adam_g.clone()),
                (D_PREFIX.to_string(), self.adam_d.clone()),
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn superresolve(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        sr::superresolve(&self.params, &self.net, &self.state, lr)
    }
}
