//! World to trained model: which example kinds to build and the training
//! loop around them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::eval::metrics::ZeroShotSplit;
use crate::model::{BtnParams, IndexSets, ModelConfig};
use crate::store::TripleTensor;
use crate::train::examples::{episodic_examples, semantic_examples};
use crate::train::{EpochStats, Example, TrainConfig, Trainer};
use crate::vocab::Vocabulary;
use crate::world::{perception_examples, GroundTruthWorld};

/// Example kinds in the training set. Direct examples train the bottom-up
/// path on its own; off by default, so that direct perception is a decoding
/// mode of a model trained on perception and memory only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Modes {
    pub episodic: bool,
    pub semantic: bool,
    pub perception: bool,
    pub direct: bool,
}

impl Default for Modes {
    fn default() -> Self {
        Modes { episodic: true, semantic: true, perception: true, direct: false }
    }
}

pub fn training_examples(
    world: &GroundTruthWorld,
    store: &TripleTensor,
    zero_shot: &ZeroShotSplit,
    modes: &Modes,
    excluded: &BTreeSet<String>,
) -> Result<Vec<Example>> {
    let vocab = store.vocab();
    let held = zero_shot.held_out_set();
    let instances = store.populated_instances();
    let mut out = vec![];
    if modes.episodic {
        out.extend(episodic_examples(store, &instances, excluded));
    }
    if modes.semantic {
        out.extend(semantic_examples(store, &instances, excluded));
    }
    if modes.perception {
        out.extend(perception_examples(world, vocab, &held, excluded, false)?);
    }
    if modes.direct {
        out.extend(perception_examples(world, vocab, &held, excluded, true)?);
    }
    if out.is_empty() {
        return Err(BtnError::EmptyStore);
    }
    Ok(out)
}

pub struct Trained {
    pub params: BtnParams,
    pub vocab: Vocabulary,
    pub store: TripleTensor,
    pub losses: Vec<EpochStats>,
}

/// Builds the training store and examples of `world` and trains a fresh
/// model on them. The model's feature width follows the world.
pub fn train_world(
    world: &GroundTruthWorld,
    zero_shot: &ZeroShotSplit,
    model: &ModelConfig,
    cfg: &TrainConfig,
    modes: &Modes,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<Trained> {
    cfg.validate()?;
    let store = world.training_store(&zero_shot.held_out_set())?;
    let vocab = store.vocab().clone();
    let mc = ModelConfig { feature_dim: world.config.feature_dim, ..model.clone() };
    let mut params = BtnParams::init(mc, vocab.len());
    let losses = train_more(world, zero_shot, &store, &mut params, cfg, modes, 0, on_epoch)?;
    Ok(Trained { params, vocab, store, losses })
}

/// Trains `params` for `cfg.epochs` further epochs on the examples of
/// `store`, whose vocabulary must be the model's. Epochs are numbered from
/// `start_epoch`, and a run resumed this way draws the same injection and
/// dropout streams an uninterrupted run would.
#[allow(clippy::too_many_arguments)]
pub fn train_more(
    world: &GroundTruthWorld,
    zero_shot: &ZeroShotSplit,
    store: &TripleTensor,
    params: &mut BtnParams,
    cfg: &TrainConfig,
    modes: &Modes,
    start_epoch: usize,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let vocab = store.vocab();
    if params.num_columns() != vocab.len() {
        return Err(BtnError::InvalidInput(format!(
            "model has {} columns for {} vocabulary ids",
            params.num_columns(),
            vocab.len()
        )));
    }
    let examples = training_examples(world, store, zero_shot, modes, &cfg.excluded_families)?;
    let sets = IndexSets::from_vocab(vocab);
    let mut trainer = Trainer::new(params, &sets, cfg)?.starting_at(start_epoch);
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in start_epoch..start_epoch + cfg.epochs {
        let loss = trainer.epoch(params, &examples, &cfg.adam)?;
        let s = EpochStats { epoch, split: "train".into(), loss };
        log::debug!("epoch {epoch} loss {loss:.6}");
        on_epoch(&s);
        out.push(s);
    }
    params.check_finite()?;
    Ok(out)
}
