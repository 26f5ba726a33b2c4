//! Memory recall measured against the stored quadruples.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::Result;
use crate::eval::metrics::Tallies;
use crate::model::{decode, DecodeInput, IndexSets};
use crate::model::BtnParams;
use crate::store::TripleTensor;
use crate::train::examples::facts_at;
use crate::vocab::{Kind, VocabId, Vocabulary};

/// Rank of `truth` in `ranked` after removing the other true answers.
pub fn filtered_rank(ranked: &[VocabId], truth: VocabId, others: &[VocabId]) -> usize {
    ranked
        .iter()
        .filter(|&&x| x == truth || !others.contains(&x))
        .position(|&x| x == truth)
        .map_or(usize::MAX, |r| r + 1)
}

fn add_ranks(t: &mut Tallies, prefix: &str, rank: usize, ks: &[usize]) {
    for &k in ks {
        t.add(format!("{prefix}.hits@{k}"), rank <= k);
    }
}

/// Winner-take-all episodic recall of the instances in `instances`.
///
/// Tallies: `unary` and `unary.<family>` given `(t, s)`; `subject.hits@1`
/// given `t`; `object.hits@k` given `(t, s)`; `binary.hits@k` given
/// `(t, s, o)`, with filtered ranks.
pub fn episodic_recall(
    params: &BtnParams,
    vocab: &Vocabulary,
    sets: &IndexSets,
    store: &TripleTensor,
    instances: &[VocabId],
    ks: &[usize],
) -> Result<Tallies> {
    let none = BTreeSet::new();
    let parts: Vec<Result<Tallies>> = instances
        .par_iter()
        .map(|&t| {
            let mut tl = Tallies::default();
            let facts = facts_at(store, t, &none);
            if facts.is_empty() {
                return Ok(tl);
            }
            let top = decode(&DecodeInput::episodic(t), params, vocab, sets)?;
            tl.add("subject.hits@1", top.s_star.is_some_and(|s| facts.contains_key(&s)));
            for (&s, f) in &facts {
                let tr = decode(&DecodeInput::episodic(t).with_subject(s).unary_only(), params, vocab, sets)?;
                for &(fi, c) in &f.unary {
                    let fam = &vocab.families()[fi].name;
                    let hit = tr.label(fam) == Some(c);
                    tl.add("unary", hit);
                    tl.add(format!("unary.{fam}"), hit);
                }
                if f.objects.is_empty() {
                    continue;
                }
                let with_s = decode(&DecodeInput::episodic(t).with_subject(s), params, vocab, sets)?;
                let objs: Vec<VocabId> = f.objects.keys().copied().collect();
                let ranked_o = with_s.o_dist.as_ref().map(|d| d.ranked()).unwrap_or_default();
                for &o in &objs {
                    add_ranks(&mut tl, "object", filtered_rank(&ranked_o, o, &objs), ks);
                }
                for (&o, preds) in &f.objects {
                    let tr = decode(&DecodeInput::episodic(t).with_subject(s).with_object(o), params, vocab, sets)?;
                    let ranked = tr.p_dist.as_ref().map(|d| d.ranked()).unwrap_or_default();
                    for &p in preds {
                        add_ranks(&mut tl, "binary", filtered_rank(&ranked, p, preds), ks);
                    }
                }
            }
            Ok(tl)
        })
        .collect();
    let mut out = Tallies::default();
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}

/// What the store says about one subject, pooled over instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubjectKnowledge {
    pub unary: BTreeMap<usize, VocabId>,
    pub objects: BTreeMap<VocabId, Vec<VocabId>>,
}

pub fn knowledge(store: &TripleTensor) -> BTreeMap<VocabId, SubjectKnowledge> {
    let none = BTreeSet::new();
    let mut out: BTreeMap<VocabId, SubjectKnowledge> = BTreeMap::new();
    for &t in store.vocab().instances() {
        for (s, f) in facts_at(store, t, &none) {
            let k = out.entry(s).or_default();
            for (fi, c) in f.unary {
                k.unary.insert(fi, c);
            }
            for (o, preds) in f.objects {
                let e = k.objects.entry(o).or_default();
                for p in preds {
                    if !e.contains(&p) {
                        e.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Winner-take-all semantic recall given the subject.
///
/// Tallies: `unary`, `unary.<family>`; `object.hits@k` given `s`;
/// `binary.hits@k` given `(s, o)`.
pub fn semantic_recall(
    params: &BtnParams,
    vocab: &Vocabulary,
    sets: &IndexSets,
    store: &TripleTensor,
    ks: &[usize],
) -> Result<Tallies> {
    let know: Vec<(VocabId, SubjectKnowledge)> =
        knowledge(store).into_iter().filter(|(s, _)| vocab.kind(*s) == Kind::Entity).collect();
    let parts: Vec<Result<Tallies>> = know
        .par_iter()
        .map(|(s, k)| {
            let s = *s;
            let mut tl = Tallies::default();
            let tr = decode(&DecodeInput::semantic(Some(s)).unary_only(), params, vocab, sets)?;
            for (&fi, &c) in &k.unary {
                let fam = &vocab.families()[fi].name;
                let hit = tr.label(fam) == Some(c);
                tl.add("unary", hit);
                tl.add(format!("unary.{fam}"), hit);
            }
            if k.objects.is_empty() {
                return Ok(tl);
            }
            let with_s = decode(&DecodeInput::semantic(Some(s)), params, vocab, sets)?;
            let objs: Vec<VocabId> = k.objects.keys().copied().collect();
            let ranked_o = with_s.o_dist.as_ref().map(|d| d.ranked()).unwrap_or_default();
            for &o in &objs {
                add_ranks(&mut tl, "object", filtered_rank(&ranked_o, o, &objs), ks);
            }
            for (&o, preds) in &k.objects {
                let tr = decode(&DecodeInput::semantic(Some(s)).with_object(o), params, vocab, sets)?;
                let ranked = tr.p_dist.as_ref().map(|d| d.ranked()).unwrap_or_default();
                for &p in preds {
                    add_ranks(&mut tl, "binary", filtered_rank(&ranked, p, preds), ks);
                }
            }
            Ok(tl)
        })
        .collect();
    let mut out = Tallies::default();
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}
