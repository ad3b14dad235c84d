use std::collections::BTreeMap;

use super::adam::{adam_step, AdamState};
use super::checkpoint::{ArchConfig, Checkpoint};
use super::config::{Stage, TrainConfig};
use super::{check_finite, diverged, StepLosses};
use crate::autodiff::Tape;
use crate::data::{hflip_augment, BatchStream, DatasetIndex, PairingMode};
use crate::degradation::{self as dg, D_PREFIX, G_PREFIX};
use crate::error::{Error, Result};
use crate::imageops::{resize_tensor, ResizeKind};
use crate::params::{derive_seed, Binder, ParamStore};
use crate::tensor::Tensor;

/// Alternating D/G optimization of the degradation network.
///
/// Each batch pairs HR images (bicubic-downsampled on the fly into clean
/// LR inputs) with unrelated real LR images for the discriminator.
pub struct Stage1Trainer {
    pub cfg: TrainConfig,
    pub params: ParamStore<f32>,
    pub adam_g: AdamState<f32>,
    pub adam_d: AdamState<f32>,
    /// Completed iterations.
    pub iter: u64,
    stream: BatchStream,
}

impl Stage1Trainer {
    pub fn new(cfg: TrainConfig, index: DatasetIndex) -> Result<Self> {
        cfg.validate()?;
        if cfg.stage != Stage::Degrade {
            return Err(Error::Config(format!(
                "stage {} is not degrade",
                cfg.stage.name()
            )));
        }
        if index.mode != PairingMode::Unpaired {
            return Err(Error::Config(
                "the degrade stage needs an unpaired corpus".into(),
            ));
        }
        let (hh, hw) = index.hr_dims();
        let f = cfg.scale_factor as usize;
        if hh % f != 0 || hw % f != 0 || (hh / f, hw / f) != index.lr_dims() {
            return Err(Error::Data(format!(
                "HR {hh}x{hw} downsampled by {f} does not match real LR {:?}",
                index.lr_dims()
            )));
        }
        let mut params = ParamStore::new();
        dg::init_params(&mut params, &cfg.degrade_net, cfg.seed)?;
        let stream = BatchStream::new(index, cfg.batch, derive_seed(cfg.seed, "data"))?;
        Ok(Self {
            adam_g: AdamState::new(cfg.adam),
            adam_d: AdamState::new(cfg.adam),
            cfg,
            params,
            iter: 0,
            stream,
        })
    }

    /// Continue from a checkpoint written by this stage.
    pub fn resume(cfg: TrainConfig, index: DatasetIndex, ck: Checkpoint<f32>) -> Result<Self> {
        ck.expect_config(&cfg)?;
        let mut t = Self::new(cfg, index)?;
        t.params = ck.params;
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

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<StepLosses> {
        let it = self.iter;
        self.train_step().map_err(|e| diverged(it, e))
    }

    fn train_step(&mut self) -> Result<StepLosses> {
        let it = self.iter;
        let lr = self.cfg.lr_at(it);
        let mut batch = self.stream.next_batch()?;
        if self.cfg.hflip {
            batch = hflip_augment(&batch, false, derive_seed(self.cfg.seed, "flip"), it)?;
        }
        let clean = resize_tensor(&batch.hr, batch.lr.shape().hw(), ResizeKind::Bicubic)?;
        let net = self.cfg.degrade_net;
        let mut losses = BTreeMap::new();

        // Discriminator.
        let d_grads = {
            let tape = Tape::new();
            let b = Binder::new(&tape, &self.params, Some(D_PREFIX));
            let fake = dg::degrade_forward(&b, &net, tape.constant(clean.clone())?)?
                .degraded
                .detach()?;
            let sr = dg::discriminate(&b, &net, tape.constant(batch.lr.clone())?)?;
            let sf = dg::discriminate(&b, &net, fake)?;
            let d_loss = dg::vanilla_d_loss(sr, sf)?;
            losses.insert("d_adv", d_loss.item() as f64);
            b.backward(d_loss)?
        };
        adam_step(&mut self.params, &d_grads, &mut self.adam_d, D_PREFIX, lr)?;

        // Generator.
        let (g_grads, flow_max) = {
            let tape = Tape::new();
            let b = Binder::new(&tape, &self.params, Some(G_PREFIX));
            let x = tape.constant(clean)?;
            let out = dg::degrade_forward(&b, &net, x)?;
            let adv = dg::vanilla_g_loss(dg::discriminate(&b, &net, out.degraded)?)?;
            let idt = dg::loss_identity(out.intermediate, x)?;
            let smooth = dg::loss_smooth(&out.flow)?;
            let total = dg::stage1_total(adv, idt, smooth, &self.cfg.weights)?;
            losses.insert("g_adv", adv.item() as f64);
            losses.insert("idt", idt.item() as f64);
            losses.insert("smooth", smooth.item() as f64);
            losses.insert("g_total", total.item() as f64);
            let flow_max = out.flow.offsets.value().max_abs() as f64;
            (b.backward(total)?, flow_max)
        };
        adam_step(&mut self.params, &g_grads, &mut self.adam_g, G_PREFIX, lr)?;
        losses.insert("flow_max", flow_max);
        losses.insert("lr", lr);
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
            progress: None,
            params: self.params.clone(),
            adam: [
                (G_PREFIX.to_string(), self.adam_g.clone()),
                (D_PREFIX.to_string(), self.adam_d.clone()),
            ]
            .into_iter()
            .collect(),
        }
    }

    /// Run the generator on clean LR images with the current weights.
    pub fn degrade(&self, clean_lr: &Tensor<f32>) -> Result<dg::DegradationSnapshot<f32>> {
        dg::degrade_tensor(&self.params, &self.cfg.degrade_net, clean_lr)
    }
}
