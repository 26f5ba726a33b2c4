//! Training examples: one subject at one instance together with all its
//! positive unary labels and binary statements there.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::store::TripleTensor;
use crate::vocab::{Kind, VocabId, Vocabulary};

pub type Features = Arc<[f64]>;

#[derive(Clone, Debug, PartialEq)]
pub enum Context {
    /// Memory recall for a stored instance.
    Episodic(VocabId),
    /// Recall through `ā`; no subject term.
    Semantic,
    /// A scene seen through its features; the instance is the target of the
    /// instance head.
    Perception { t: VocabId, scene: Features },
    /// Heads read the encoded boxes directly.
    Direct,
}

impl Context {
    pub fn uses_features(&self) -> bool {
        matches!(self, Context::Perception { .. } | Context::Direct)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectTarget {
    pub o: VocabId,
    pub preds: Vec<VocabId>,
    pub bb_obj: Option<Features>,
    pub bb_pred: Option<Features>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub context: Context,
    pub s: VocabId,
    pub bb_sub: Option<Features>,
    /// `(family index, label)` with the family index into the vocabulary.
    pub unary: Vec<(usize, VocabId)>,
    pub objects: Vec<ObjectTarget>,
    /// Class or attribute written into `q_S` in place of `s`; the subject
    /// term is then skipped.
    pub inject: Option<VocabId>,
    /// Seed of the dropout masks on encoded features.
    pub dropout_seed: Option<u64>,
}

impl Example {
    /// Positive quadruples this example stands for.
    pub fn quads(&self) -> usize {
        self.unary.len() + self.objects.iter().map(|o| o.preds.len()).sum::<usize>()
    }

    /// Labels eligible for generalized-statement injection.
    pub fn labels(&self) -> impl Iterator<Item = VocabId> + '_ {
        self.unary.iter().map(|&(_, c)| c)
    }
}

/// Unary targets and binary statements per subject at one instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubjectFacts {
    pub unary: Vec<(usize, VocabId)>,
    /// Object to its predicates.
    pub objects: BTreeMap<VocabId, Vec<VocabId>>,
}

/// Groups the positives of instance `t` by subject. Labels of families in
/// `excluded` are left out.
pub fn facts_at(store: &TripleTensor, t: VocabId, excluded: &BTreeSet<String>) -> BTreeMap<VocabId, SubjectFacts> {
    let vocab = store.vocab();
    let ha = vocab.has_attribute();
    let mut out: BTreeMap<VocabId, SubjectFacts> = BTreeMap::new();
    for q in store.positives_at(t) {
        if vocab.kind(q.s) != Kind::Entity {
            continue;
        }
        if q.p == ha {
            let Some(fi) = vocab.family_of(q.o) else { continue };
            if excluded.contains(&vocab.families()[fi].name) {
                continue;
            }
            out.entry(q.s).or_default().unary.push((fi, q.o));
        } else if vocab.kind(q.o) == Kind::Entity {
            out.entry(q.s).or_default().objects.entry(q.o).or_default().push(q.p);
        }
    }
    out.retain(|_, f| !f.unary.is_empty() || !f.objects.is_empty());
    out
}

fn from_facts(context: Context, s: VocabId, f: SubjectFacts) -> Example {
    Example {
        context,
        s,
        bb_sub: None,
        unary: f.unary,
        objects: f
            .objects
            .into_iter()
            .map(|(o, preds)| ObjectTarget { o, preds, bb_obj: None, bb_pred: None })
            .collect(),
        inject: None,
        dropout_seed: None,
    }
}

/// One episodic example per (instance, subject).
pub fn episodic_examples(store: &TripleTensor, instances: &[VocabId], excluded: &BTreeSet<String>) -> Vec<Example> {
    let mut out = vec![];
    for &t in instances {
        for (s, f) in facts_at(store, t, excluded) {
            out.push(from_facts(Context::Episodic(t), s, f));
        }
    }
    out
}

/// The same (instance, subject) groups decoded through `ā`, so that every
/// stored quadruple counts once, as in the pre-observation model.
pub fn semantic_examples(store: &TripleTensor, instances: &[VocabId], excluded: &BTreeSet<String>) -> Vec<Example> {
    let mut out = vec![];
    for &t in instances {
        for (s, f) in facts_at(store, t, excluded) {
            out.push(from_facts(Context::Semantic, s, f));
        }
    }
    out
}

/// Entities and labels referenced by the examples, for sanity checks.
pub fn referenced_ids(examples: &[Example], vocab: &Vocabulary) -> BTreeSet<VocabId> {
    let mut ids = BTreeSet::new();
    for e in examples {
        ids.insert(e.s);
        ids.extend(e.labels());
        for o in &e.objects {
            ids.insert(o.o);
            ids.extend(o.preds.iter().copied());
        }
    }
    ids.retain(|&i| vocab.contains(i));
    ids
}
