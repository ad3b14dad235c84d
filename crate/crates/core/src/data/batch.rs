use rand::seq::SliceRandom;
use rand::Rng;

use super::index::DatasetIndex;
use crate::error::{Error, Result};
use crate::params::rng_for;
use crate::tensor::Tensor;

/// One training batch. In paired modes `lr[i]` and `hr[i]` belong together.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub lr: Tensor<f32>,
    pub hr: Tensor<f32>,
    pub lr_ids: Vec<String>,
    pub hr_ids: Vec<String>,
}

fn permutation(len: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng_for(seed, label));
    order
}

/// All full batches of one epoch; the trailing partial batch is dropped.
pub fn epoch_batches(
    index: &DatasetIndex,
    batch: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<PairBatch>> {
    if batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let hr_order = permutation(index.hr.len(), seed, &format!("epoch{epoch}.hr"));
    let lr_order = if index.is_paired() {
        hr_order.clone()
    } else {
        permutation(index.lr.len(), seed, &format!("epoch{epoch}.lr"))
    };
    let count = hr_order.len().min(lr_order.len()) / batch;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let hs = &hr_order[k * batch..(k + 1) * batch];
        let ls = &lr_order[k * batch..(k + 1) * batch];
        let hr: Vec<_> = hs.iter().map(|&i| index.hr[i].pixels.clone()).collect();
        let lr: Vec<_> = ls.iter().map(|&i| index.lr[i].pixels.clone()).collect();
        out.push(PairBatch {
            lr: Tensor::stack(&lr)?,
            hr: Tensor::stack(&hr)?,
            lr_ids: ls.iter().map(|&i| index.lr[i].id.clone()).collect(),
            hr_ids: hs.iter().map(|&i| index.hr[i].id.clone()).collect(),
        });
    }
    Ok(out)
}

/// Endless batch source that reshuffles at each epoch boundary.
pub struct BatchStream {
    index: DatasetIndex,
    batch: usize,
    seed: u64,
    epoch: u64,
    queue: std::collections::VecDeque<PairBatch>,
}

impl BatchStream {
    pub fn new(index: DatasetIndex, batch: usize, seed: u64) -> Result<Self> {
        let per_epoch = index.hr.len().min(index.lr.len());
        if batch == 0 || per_epoch < batch {
            return Err(Error::Data(format!(
                "batch size {batch} needs at least that many images, corpus has {per_epoch}"
            )));
        }
        Ok(Self {
            index,
            batch,
            seed,
            epoch: 0,
            queue: Default::default(),
        })
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    pub fn next_batch(&mut self) -> Result<PairBatch> {
        if self.queue.is_empty() {
            self.queue = epoch_batches(&self.index, self.batch, self.seed, self.epoch)?.into();
            self.epoch += 1;
        }
        Ok(self.queue.pop_front().expect("non-empty epoch"))
    }
}

/// Flip sample `i` of `t` horizontally wherever `flags[i]` is set.
pub fn flip_samples(t: &Tensor<f32>, flags: &[bool]) -> Result<Tensor<f32>> {
    let n = t.shape().n();
    if flags.len() != n {
        return Err(Error::invalid(
            "flip",
            format!("{} flags for {n} samples", flags.len()),
        ));
    }
    let parts = (0..n)
        .map(|i| {
            let s = t.batch_slice(i, 1)?;
            Ok(if flags[i] { s.flip_w() } else { s })
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

/// Per-sample coin flips for `(seed, iter)`; `stream` separates the LR
/// and HR draws in unpaired mode.
pub fn flip_flags(seed: u64, iter: u64, stream: &str, n: usize) -> Vec<bool> {
    (0..n)
        .map(|i| rng_for(seed, &format!("flip.{stream}.{iter}.{i}")).random_bool(0.5))
        .collect()
}

/// Random horizontal flips. Paired batches flip LR and HR together.
pub fn hflip_augment(batch: &PairBatch, paired: bool, seed: u64, iter: u64) -> Result<PairBatch> {
    let hr_flags = flip_flags(seed, iter, "hr", batch.hr.shape().n());
    let lr_flags = if paired {
        hr_flags.clone()
    } else {
        flip_flags(seed, iter, "lr", batch.lr.shape().n())
    };
    Ok(PairBatch {
        lr: flip_samples(&batch.lr, &lr_flags)?,
        hr: flip_samples(&batch.hr, &hr_flags)?,
        lr_ids: batch.lr_ids.clone(),
        hr_ids: batch.hr_ids.clone(),
    })
}
