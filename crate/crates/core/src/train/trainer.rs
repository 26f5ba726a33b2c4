//! Multi-task training loop.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::model::ops::IndexSets;
use crate::model::{Block, BtnParams};
use crate::train::adam::{AdamConfig, AdamState, UpdateMask};
use crate::train::examples::{Context, Example};
use crate::train::loss::{batch_loss, gradients, LossConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Rate for the embedding-only updates of self-supervised learning.
    pub ssl_learning_rate: f64,
    pub ssl_epochs: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossConfig,
    /// Probability of writing a label instead of the subject entity into
    /// `q_S` in semantic examples.
    pub rho: f64,
    /// The same for perception examples.
    pub rho_perception: f64,
    pub frozen: BTreeSet<Block>,
    /// Label families left out of the training targets.
    pub excluded_families: BTreeSet<String>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            ssl_learning_rate: 1e-5,
            ssl_epochs: 20,
            batch_size: 128,
            epochs: 10,
            loss: LossConfig::default(),
            rho: 0.5,
            rho_perception: 0.0,
            frozen: BTreeSet::new(),
            excluded_families: BTreeSet::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) || !(self.ssl_learning_rate > 0.0) {
            return Err(BtnError::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(BtnError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) || !(0.0..=1.0).contains(&self.rho_perception) {
            return Err(BtnError::Config("rho must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.loss.dropout) {
            return Err(BtnError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
}

/// Writes the loss curve as CSV.
pub fn write_loss_csv<W: Write>(mut w: W, stats: &[EpochStats]) -> Result<()> {
    writeln!(w, "epoch,split,loss")?;
    for s in stats {
        writeln!(w, "{},{},{:.9}", s.epoch, s.split, s.loss)?;
    }
    Ok(())
}

/// Draws this epoch's label injections and dropout seeds.
pub fn prepare_epoch(examples: &[Example], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Example> {
    examples
        .iter()
        .map(|ex| {
            let mut ex = ex.clone();
            let rho = match ex.context {
                Context::Semantic => cfg.rho,
                Context::Perception { .. } => cfg.rho_perception,
                _ => 0.0,
            };
            // Draw unconditionally so the stream does not depend on eligibility.
            let u: f64 = rng.random();
            let pick: usize = rng.random_range(0..ex.unary.len().max(1));
            ex.inject = (u < rho && !ex.unary.is_empty()).then(|| ex.unary[pick].1);
            let seed: u64 = rng.random();
            ex.dropout_seed = (cfg.loss.dropout > 0.0).then_some(seed);
            ex
        })
        .collect()
}

pub struct Trainer<'a> {
    pub cfg: &'a TrainConfig,
    pub sets: &'a IndexSets,
    pub mask: UpdateMask,
    pub state: AdamState,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(params: &BtnParams, sets: &'a IndexSets, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            cfg,
            sets,
            mask: UpdateMask { frozen: cfg.frozen.clone(), rows: None },
            state: AdamState::new(params),
            epoch: 0,
        })
    }

    /// Continues the per-epoch random streams of an earlier run that stopped
    /// after `epoch` epochs.
    pub fn starting_at(mut self, epoch: usize) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn with_mask(mut self, mask: UpdateMask) -> Self {
        self.mask = mask;
        self
    }

    /// One pass over `examples`; returns the quadruple-weighted mean loss.
    pub fn epoch(&mut self, params: &mut BtnParams, examples: &[Example], adam: &AdamConfig) -> Result<f64> {
        let epoch = self.epoch;
        self.epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut batch = prepare_epoch(examples, self.cfg, &mut rng);
        batch.shuffle(&mut rng);
        let mut total = 0.0;
        let mut weight = 0.0;
        for chunk in batch.chunks(self.cfg.batch_size) {
            let (loss, grad) = gradients(params, self.sets, chunk, &self.cfg.loss).map_err(|e| match e {
                BtnError::NonFinite(layer) => BtnError::Divergence { epoch, detail: format!("non-finite {layer}") },
                other => other,
            })?;
            let n = chunk.iter().map(|e| e.quads()).sum::<usize>() as f64;
            total += loss * n;
            weight += n;
            self.state.step(params, &grad, adam, &self.mask);
            if let Some(b) = params.t.first_non_finite() {
                return Err(BtnError::Divergence { epoch, detail: format!("non-finite parameters in {}", b.name()) });
            }
        }
        Ok(if weight > 0.0 { total / weight } else { 0.0 })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` after each.
pub fn train(
    params: &mut BtnParams,
    sets: &IndexSets,
    examples: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if examples.is_empty() {
        return Err(BtnError::EmptyStore);
    }
    let mut trainer = Trainer::new(params, sets, cfg)?;
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = trainer.epoch(params, examples, &cfg.adam)?;
        let s = EpochStats { epoch, split: "train".into(), loss };
        log::debug!("epoch {epoch} loss {loss:.6}");
        on_epoch(&s);
        out.push(s);
    }
    Ok(out)
}

/// Loss of `examples` without injection or dropout.
pub fn evaluate_loss(params: &BtnParams, sets: &IndexSets, examples: &[Example], cfg: &TrainConfig) -> Result<f64> {
    let loss = LossConfig { dropout: 0.0, ..cfg.loss.clone() };
    batch_loss(params, sets, examples, &loss)
}
