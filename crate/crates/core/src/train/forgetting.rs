//! Forgetting probe: recall on protected instances before and after some
//! further training, plus how far each protected column moved.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::recall::episodic_recall;
use crate::model::ops::IndexSets;
use crate::model::BtnParams;
use crate::store::TripleTensor;
use crate::vocab::{VocabId, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnDrift {
    pub name: String,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    /// Episodic unary plus binary Hits@1 recall on the protected instances.
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub count: usize,
    pub drift: Vec<ColumnDrift>,
    pub max_drift: f64,
}

fn recall(params: &BtnParams, vocab: &Vocabulary, store: &TripleTensor, protected: &[VocabId]) -> Result<(f64, usize)> {
    let sets = IndexSets::from_vocab(vocab);
    let t = episodic_recall(params, vocab, &sets, store, protected, &[1])?;
    let mut all = t.get("unary");
    all.merge(t.get("binary.hits@1"));
    Ok((all.value(), all.count))
}

/// Runs `perturbation` (continued training on other data, usually) on
/// `params` and reports what it did to the protected instances. `store`
/// holds the protected memories and `vocab` must cover any columns the
/// perturbation adds.
pub fn forgetting_probe(
    params: &mut BtnParams,
    vocab: &Vocabulary,
    store: &TripleTensor,
    protected: &[VocabId],
    perturbation: impl FnOnce(&mut BtnParams) -> Result<()>,
) -> Result<ForgettingReport> {
    let (before, count) = recall(params, vocab, store, protected)?;
    let snapshot = params.clone();
    perturbation(params)?;
    let (after, _) = recall(params, vocab, store, protected)?;
    let drift: Vec<ColumnDrift> = protected
        .iter()
        .map(|&id| {
            let mut d2: f64 = params.column(id).iter().zip(snapshot.column(id)).map(|(a, b)| (a - b).powi(2)).sum();
            if params.t.embed_up.is_some() {
                d2 += params.column_up(id).iter().zip(snapshot.column_up(id)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            ColumnDrift { name: vocab.name(id).to_string(), l2: d2.sqrt() }
        })
        .collect();
    let max_drift = drift.iter().map(|d| d.l2).fold(0.0, f64::max);
    Ok(ForgettingReport { before, after, delta: after - before, count, drift, max_drift })
}
