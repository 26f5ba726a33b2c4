//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use btn::model::ops::IndexSets;
use btn::model::{Block, BtnParams, ModelConfig};
use btn::train::{batch_loss, gradients, Context, Example, LossConfig, ObjectTarget};
use btn::vocab::{VocabId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FEATURES: usize = 5;

/// Five entities, two label families, three binary labels, three instances.
pub fn tiny_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for e in ["e0", "e1", "e2", "e3", "e4"] {
        v.add_entity(e).unwrap();
    }
    for c in ["Dog", "Cat", "Bench"] {
        v.add_class(c).unwrap();
    }
    for a in ["Black", "White"] {
        v.add_attribute(a).unwrap();
    }
    for p in ["on", "nextTo", "ownedBy"] {
        v.add_predicate(p).unwrap();
    }
    for t in ["t0", "t1", "t2"] {
        v.add_instance(t).unwrap();
    }
    v.add_family("B-Class", &["Dog", "Cat", "Bench"]).unwrap();
    v.add_family("Color", &["Black", "White"]).unwrap();
    v
}

fn feats(rng: &mut ChaCha8Rng) -> Arc<[f64]> {
    (0..FEATURES).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<_>>().into()
}

/// A random example in the given context kind (0 episodic, 1 semantic,
/// 2 perception, 3 direct).
pub fn random_example(v: &Vocabulary, kind: usize, rng: &mut ChaCha8Rng) -> Example {
    let pick = |rng: &mut ChaCha8Rng, ids: &[VocabId]| ids[rng.random_range(0..ids.len())];
    let t = pick(rng, v.instances());
    let context = match kind {
        0 => Context::Episodic(t),
        1 => Context::Semantic,
        2 => Context::Perception { t, scene: feats(rng) },
        _ => Context::Direct,
    };
    let with_features = kind >= 2;
    let s = pick(rng, v.entities());
    let mut unary = vec![];
    for (fi, f) in v.families().iter().enumerate() {
        if rng.random_bool(0.8) {
            unary.push((fi, pick(rng, &f.members)));
        }
    }
    let mut objects = vec![];
    for _ in 0..rng.random_range(0..3) {
        let o = pick(rng, v.entities());
        if objects.iter().any(|x: &ObjectTarget| x.o == o) {
            continue;
        }
        let mut preds = vec![pick(rng, v.binary_labels())];
        if rng.random_bool(0.3) {
            let extra = pick(rng, v.binary_labels());
            if !preds.contains(&extra) {
                preds.push(extra);
            }
        }
        objects.push(ObjectTarget {
            o,
            preds,
            bb_obj: with_features.then(|| feats(rng)),
            bb_pred: with_features.then(|| feats(rng)),
        });
    }
    if unary.is_empty() && objects.is_empty() {
        unary.push((0, v.families()[0].members[0]));
    }
    let inject = (matches!(kind, 1 | 2) && rng.random_bool(0.5) && !unary.is_empty()).then(|| unary[0].1);
    Example {
        context,
        s,
        bb_sub: with_features.then(|| feats(rng)),
        unary,
        objects,
        inject,
        dropout_seed: rng.random_bool(0.3).then(|| rng.random()),
    }
}

pub struct GradCase {
    pub params: BtnParams,
    pub sets: IndexSets,
    pub batch: Vec<Example>,
    pub cfg: LossConfig,
}

/// Random parameters at r = 8, h = 4 with a batch covering `kinds`.
pub fn grad_case(seed: u64, kinds: &[usize]) -> GradCase {
    let v = tiny_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        rank: 8,
        hidden: 4,
        feature_dim: FEATURES,
        symmetric: seed % 3 != 0,
        init_scale: 1.0,
        seed,
        ..Default::default()
    };
    let mut params = BtnParams::init(cfg, v.len());
    for x in params.t.enc_b.iter_mut() {
        *x = rng.random_range(-0.5..0.5);
    }
    let batch = (0..4).map(|i| random_example(&v, kinds[i % kinds.len()], &mut rng)).collect();
    let loss = LossConfig { dropout: if seed % 2 == 0 { 0.3 } else { 0.0 }, soft_commit: seed % 4 < 2, ..Default::default() };
    GradCase { params, sets: IndexSets::from_vocab(&v), batch, cfg: loss }
}

/// Largest relative error between the analytic gradient and 64-bit central
/// differences over every parameter coordinate. Per-block maxima are also
/// returned for diagnostics.
pub fn finite_difference_error(case: &GradCase) -> (f64, BTreeMap<&'static str, f64>) {
    let (_, grad) = gradients(&case.params, &case.sets, &case.batch, &case.cfg).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut per_block = BTreeMap::new();
    let mut p = case.params.clone();
    for b in Block::ALL {
        let Some(n) = case.params.t.block(b).map(|d| d.len()) else { continue };
        let analytic = grad.block(b).unwrap().to_vec();
        let mut block_worst = 0.0f64;
        for i in 0..n {
            let x0 = p.t.block(b).unwrap()[i];
            p.t.block_mut(b).unwrap()[i] = x0 + eps;
            let up = batch_loss(&p, &case.sets, &case.batch, &case.cfg).unwrap();
            p.t.block_mut(b).unwrap()[i] = x0 - eps;
            let down = batch_loss(&p, &case.sets, &case.batch, &case.cfg).unwrap();
            p.t.block_mut(b).unwrap()[i] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            block_worst = block_worst.max(rel);
        }
        per_block.insert(b.name(), block_worst);
        worst = worst.max(block_worst);
    }
    (worst, per_block)
}

/// A labeled quadruple by names, as the brute-force oracles read it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Record {
    pub s: String,
    pub p: String,
    pub o: String,
    pub t: String,
    pub y: bool,
}

pub type NameTriple = (String, String, String);

/// Vocabulary for random stores: four entities, six instances.
pub fn store_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for e in ["e0", "e1", "e2", "e3"] {
        v.add_entity(e).unwrap();
    }
    for c in ["Dog", "Cat", "Mammal"] {
        v.add_class(c).unwrap();
    }
    for a in ["Black", "White"] {
        v.add_attribute(a).unwrap();
    }
    for p in ["on", "nextTo"] {
        v.add_predicate(p).unwrap();
    }
    for i in 0..6 {
        v.add_instance(&format!("t{i}")).unwrap();
    }
    v.add_family("B-Class", &["Dog", "Cat"]).unwrap();
    v.add_family("P-Class", &["Mammal"]).unwrap();
    v.add_family("Color", &["Black", "White"]).unwrap();
    v
}

/// Up to `max` distinct labeled quadruples over [`store_vocab`], at least
/// one of them positive.
pub fn random_records(rng: &mut ChaCha8Rng, max: usize) -> Vec<Record> {
    let ents = ["e0", "e1", "e2", "e3"];
    let labels = ["Dog", "Cat", "Mammal", "Black", "White"];
    let mut seen = std::collections::BTreeSet::new();
    let mut out = vec![];
    let n = rng.random_range(1..=max);
    for _ in 0..n {
        let s = ents[rng.random_range(0..ents.len())];
        let (p, o) = match rng.random_range(0..3) {
            0 => ("hA", labels[rng.random_range(0..labels.len())]),
            1 => ("on", ents[rng.random_range(0..ents.len())]),
            _ => ("nextTo", ents[rng.random_range(0..ents.len())]),
        };
        let t = format!("t{}", rng.random_range(0..6));
        if !seen.insert((s, p, o, t.clone())) {
            continue;
        }
        out.push(Record { s: s.into(), p: p.into(), o: o.into(), t, y: out.is_empty() || rng.random_bool(0.7) });
    }
    out
}

pub fn store_from(records: &[Record]) -> btn::TripleTensor {
    let mut st = btn::TripleTensor::new(store_vocab());
    for r in records {
        st.observe(&r.s, &r.p, &r.o, &r.t, r.y).unwrap();
    }
    st
}

/// A distribution over id triples, keyed by names.
pub fn by_names(v: &Vocabulary, d: &btn::CategoricalDist<btn::store::Triple>) -> BTreeMap<NameTriple, f64> {
    d.iter().map(|(tr, p)| ((v.name(tr.s).into(), v.name(tr.p).into(), v.name(tr.o).into()), p)).collect()
}

fn key(r: &Record) -> NameTriple {
    (r.s.clone(), r.p.clone(), r.o.clone())
}

/// `i_{s,p,o,t} / N_t`, enumerated.
pub fn oracle_observation(records: &[Record], t: &str) -> BTreeMap<NameTriple, f64> {
    let pos: Vec<&Record> = records.iter().filter(|r| r.y && r.t == t).collect();
    pos.iter().map(|r| (key(r), 1.0 / pos.len() as f64)).collect()
}

/// `sum_t i_{s,p,o,t} / N_total`, enumerated.
pub fn oracle_pre_observation(records: &[Record]) -> BTreeMap<NameTriple, f64> {
    let total = records.iter().filter(|r| r.y).count() as f64;
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| r.y) {
        *out.entry(key(r)).or_insert(0.0) += 1.0 / total;
    }
    out
}

/// Positives over knowns for one triple; `None` when nothing is known.
pub fn oracle_expected_state(records: &[Record], s: &str, p: &str, o: &str) -> Option<f64> {
    let known: Vec<&Record> = records.iter().filter(|r| r.s == s && r.p == p && r.o == o).collect();
    (!known.is_empty()).then(|| known.iter().filter(|r| r.y).count() as f64 / known.len() as f64)
}

/// Over every (entity, instance) pair carrying `c1`: the share that carry
/// `c2`, among those where `c2` is known either way.
pub fn oracle_generalized(records: &[Record], c1: &str, c2: &str) -> Option<f64> {
    let (mut num, mut den) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.y && r.p == "hA" && r.o == c1) {
        for r2 in records {
            if r2.s == r.s && r2.t == r.t && r2.p == "hA" && r2.o == c2 {
                den += 1;
                num += r2.y as usize;
            }
        }
    }
    (den > 0).then(|| num as f64 / den as f64)
}

/// Largest gap between two distributions over the union of their supports.
pub fn max_gap(a: &BTreeMap<NameTriple, f64>, b: &BTreeMap<NameTriple, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Worst disagreement between the store and the oracles over every
/// instance, every triple that occurs and every label pair.
pub fn counting_model_error(records: &[Record]) -> f64 {
    let st = store_from(records);
    let v = st.vocab().clone();
    let mut worst = 0.0f64;
    for &t in v.instances() {
        let want = oracle_observation(records, v.name(t));
        match st.empirical_observation_dist(t) {
            Ok(d) => worst = worst.max(max_gap(&by_names(&v, &d), &want)),
            Err(_) => assert!(want.is_empty(), "store found no positives at {}", v.name(t)),
        }
    }
    let pre = st.empirical_pre_observation_dist().unwrap();
    worst = worst.max(max_gap(&by_names(&v, &pre), &oracle_pre_observation(records)));
    let gap = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    for r in records {
        let (s, p, o) = (v.id(&r.s).unwrap(), v.id(&r.p).unwrap(), v.id(&r.o).unwrap());
        worst = worst.max(gap(st.expected_state(s, p, o).known(), oracle_expected_state(records, &r.s, &r.p, &r.o)));
    }
    let labels: Vec<VocabId> = v.concepts().into_iter().filter(|&c| v.kind(c) != btn::Kind::Entity).collect();
    for &c1 in &labels {
        for &c2 in &labels {
            let want = oracle_generalized(records, v.name(c1), v.name(c2));
            worst = worst.max(gap(st.generalized_statement(c1, c2).known(), want));
        }
    }
    worst
}
