//! Consolidation by replay: activating an instance index evokes its
//! representation, and a fresh index learns that representation into its
//! own connection weights. The original index stays as it was.

use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::model::BtnParams;
use crate::vocab::{Kind, VocabId, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidateConfig {
    /// Regression steps on the new column.
    pub steps: usize,
    pub rate: f64,
    /// Appended to the original name to name the duplicate.
    pub suffix: String,
}

impl Default for ConsolidateConfig {
    fn default() -> Self {
        ConsolidateConfig { steps: 64, rate: 0.5, suffix: "@cortex".into() }
    }
}

/// Gradient steps on `½‖x − target‖²` from zero.
fn regress(target: &[f64], steps: usize, rate: f64) -> Vec<f64> {
    let mut x = vec![0.0; target.len()];
    for _ in 0..steps {
        for (xi, ti) in x.iter_mut().zip(target) {
            *xi += rate * (ti - *xi);
        }
    }
    x
}

/// Allocates a duplicate of instance `t` and returns its id.
pub fn consolidate(
    t: VocabId,
    params: &mut BtnParams,
    vocab: &mut Vocabulary,
    cfg: &ConsolidateConfig,
) -> Result<VocabId> {
    vocab.check(t, &[Kind::Instance])?;
    if !(cfg.rate > 0.0 && cfg.rate <= 1.0) {
        return Err(BtnError::Config("consolidation rate must lie in (0, 1]".into()));
    }
    // Replay: the read weights regress onto what activating t writes into
    // the representation layer's input side, the write weights onto its
    // output side.
    let read = regress(params.column(t), cfg.steps, cfg.rate);
    let write = regress(params.column_up(t), cfg.steps, cfg.rate);
    let name = format!("{}{}", vocab.name(t), cfg.suffix);
    let id = vocab.add_instance(&name)?;
    let pid = params.push_column(&read);
    debug_assert_eq!(id, pid);
    if let Some(up) = &mut params.t.embed_up {
        up.row_mut(pid.index()).copy_from_slice(&write);
    }
    Ok(id)
}
