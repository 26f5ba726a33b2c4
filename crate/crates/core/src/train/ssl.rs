//! Self-supervised learning: winner-take-all perception of unlabeled scenes
//! produces labels that become training labels for freshly allocated
//! instance and entity columns. Nothing else moves.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{sigmoid, sub};
use crate::model::ops::{attend, IndexSets};
use crate::model::{decode, BtnParams, DecodeInput};
use crate::store::TripleLine;
use crate::train::adam::UpdateMask;
use crate::train::examples::{Context, Example, Features, ObjectTarget};
use crate::train::loss::LossConfig;
use crate::train::trainer::{EpochStats, TrainConfig, Trainer};
use crate::vocab::{VocabId, Vocabulary, HAS_ATTRIBUTE};

pub const PROVENANCE: &str = "ssl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// A box is a novel entity when every known entity's `sig(n_S)` stays
    /// below this.
    pub novelty_threshold: f64,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig { learning_rate: 1e-5, epochs: 20, batch_size: 128, novelty_threshold: 0.99, seed: 0 }
    }
}

/// An unlabeled scene: features only. Box names become entity names when a
/// box turns out to be novel, so they should be opaque.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledScene {
    pub name: String,
    pub scene: Features,
    pub boxes: Vec<(String, Features)>,
    /// `(subject box, object box, predicate box features)`.
    pub pairs: Vec<(usize, usize, Features)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SslOutcome {
    pub pseudo: Vec<TripleLine>,
    pub new_instances: Vec<VocabId>,
    pub new_entities: Vec<VocabId>,
    pub novelty_triggers: usize,
    pub losses: Vec<EpochStats>,
}

/// True iff `sig(x) < threshold` for every pre-activation `x`.
pub fn detect_novel_entity(n_s: &[f64], threshold: f64) -> bool {
    n_s.iter().all(|&x| sigmoid(x) < threshold)
}

/// Pseudo-labels each scene, grows `params` and `vocab`, then trains only the
/// new columns at the self-supervised learning rate.
pub fn ssl_step(
    scenes: &[UnlabeledScene],
    params: &mut BtnParams,
    vocab: &mut Vocabulary,
    cfg: &SslConfig,
    loss: &LossConfig,
) -> Result<SslOutcome> {
    let mut out = SslOutcome::default();
    let mut examples = vec![];
    let name = |v: &Vocabulary, id: VocabId| v.name(id).to_string();
    for sc in scenes {
        // Perceive with the vocabulary as it stands before this scene.
        let sets = IndexSets::from_vocab(vocab);
        let mut subjects = Vec::with_capacity(sc.boxes.len());
        let mut labels = Vec::with_capacity(sc.boxes.len());
        let mut q_t = None;
        for (box_name, feats) in &sc.boxes {
            let input = DecodeInput::perception(sc.scene.to_vec(), feats.to_vec(), None).with_seed(cfg.seed);
            let tr = decode(&input, params, vocab, &sets)?;
            if q_t.is_none() {
                q_t = Some(sub(&tr.q_t, &params.encode(&sc.scene)));
            }
            let s = if detect_novel_entity(&tr.n_s, cfg.novelty_threshold) {
                out.novelty_triggers += 1;
                // A new column starts from what attention over known entities evokes.
                let q_tilde = sub(&tr.q_s, params.column_up(tr.s_star.expect("perception commits a subject")));
                let init = sub(&attend(&q_tilde, params, &sets.entities, 1.0)?, &q_tilde);
                let id = vocab.add_entity(&format!("{}_{}", sc.name, box_name))?;
                let pid = params.push_column(&init);
                debug_assert_eq!(id, pid);
                out.new_entities.push(id);
                id
            } else {
                tr.s_star.expect("perception commits a subject")
            };
            subjects.push(s);
            labels.push(tr.c_stars.iter().map(|&(_, c)| c).collect::<Vec<_>>());
        }
        let t = vocab.add_instance(&sc.name)?;
        let pid = params.push_column(&q_t.unwrap_or_else(|| vec![0.0; params.rank()]));
        debug_assert_eq!(t, pid);
        out.new_instances.push(t);

        let sets = IndexSets::from_vocab(vocab);
        let mut ex: Vec<Example> = subjects
            .iter()
            .zip(&labels)
            .zip(&sc.boxes)
            .map(|((&s, cs), (_, f))| Example {
                context: Context::Perception { t, scene: sc.scene.clone() },
                s,
                bb_sub: Some(f.clone()),
                unary: cs.iter().filter_map(|&c| vocab.family_of(c).map(|fi| (fi, c))).collect(),
                objects: vec![],
                inject: None,
                dropout_seed: None,
            })
            .collect();
        for (&s, cs) in subjects.iter().zip(&labels) {
            for &c in cs {
                out.pseudo.push(line(name(vocab, s), HAS_ATTRIBUTE, name(vocab, c), name(vocab, t)));
            }
        }
        for (i, j, pf) in &sc.pairs {
            let (s, o) = (subjects[*i], subjects[*j]);
            let input = DecodeInput::perception(
                sc.scene.to_vec(),
                sc.boxes[*i].1.to_vec(),
                Some((sc.boxes[*j].1.to_vec(), pf.to_vec())),
            )
            .with_subject(s)
            .with_object(o)
            .with_seed(cfg.seed);
            let tr = decode(&input, params, vocab, &sets)?;
            let p = tr.p_star.expect("full pass commits a predicate");
            out.pseudo.push(line(name(vocab, s), vocab.name(p), name(vocab, o), name(vocab, t)));
            let target = ObjectTarget { o, preds: vec![p], bb_obj: Some(sc.boxes[*j].1.clone()), bb_pred: Some(pf.clone()) };
            match ex[*i].objects.iter_mut().find(|x| x.o == o) {
                Some(x) if !x.preds.contains(&p) => x.preds.push(p),
                Some(_) => {}
                None => ex[*i].objects.push(target),
            }
        }
        examples.extend(ex);
    }

    let rows: BTreeSet<usize> = out.new_instances.iter().chain(&out.new_entities).map(|id| id.index()).collect();
    if examples.is_empty() || cfg.epochs == 0 {
        return Ok(out);
    }
    let sets = IndexSets::from_vocab(vocab);
    let tc = TrainConfig {
        adam: crate::train::AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() },
        ssl_learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        loss: loss.clone(),
        rho: 0.0,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut trainer = Trainer::new(params, &sets, &tc)?.with_mask(UpdateMask::rows_only(rows));
    for epoch in 0..cfg.epochs {
        let l = trainer.epoch(params, &examples, &tc.adam)?;
        out.losses.push(EpochStats { epoch, split: PROVENANCE.into(), loss: l });
    }
    Ok(out)
}

fn line(s: String, p: &str, o: String, t: String) -> TripleLine {
    TripleLine { s, p: p.to_string(), o, t, y: 1, provenance: Some(PROVENANCE.into()) }
}
