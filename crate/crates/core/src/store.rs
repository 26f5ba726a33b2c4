//! The four-mode triple-observation tensor and its count-based models.
//!
//! Entries are `(s, p, o, t)` quadruples whose truth value is known, either
//! observed true or concluded false under the local closed-world assumption
//! (LCWA). Everything else is unknown. The counting models here are exact and
//! serve as oracles for the learned network.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dist::CategoricalDist;
use crate::error::{BtnError, Result};
use crate::vocab::{Kind, VocabId, Vocabulary};

/// One cell of the tensor. Field order makes instance the major sort key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quad {
    pub t: VocabId,
    pub s: VocabId,
    pub p: VocabId,
    pub o: VocabId,
}

impl Quad {
    pub fn new(s: VocabId, p: VocabId, o: VocabId, t: VocabId) -> Self {
        Quad { t, s, p, o }
    }

    pub fn triple(&self) -> Triple {
        Triple { s: self.s, p: self.p, o: self.o }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub s: VocabId,
    pub p: VocabId,
    pub o: VocabId,
}

/// A probability that may be undefined because nothing is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimate {
    Known(f64),
    Unknown,
}

impl Estimate {
    pub fn known(self) -> Option<f64> {
        match self {
            Estimate::Known(v) => Some(v),
            Estimate::Unknown => None,
        }
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, Estimate::Unknown)
    }
}

/// What to do when the same quadruple is asserted twice with the same value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    #[default]
    Idempotent,
    Reject,
}

#[derive(Clone, Debug)]
pub struct TripleTensor {
    vocab: Vocabulary,
    known: BTreeMap<Quad, bool>,
    // (positives, known) per triple over all instances
    counts: BTreeMap<Triple, (usize, usize)>,
    n_t: BTreeMap<VocabId, usize>,
    n_total: usize,
    duplicates: DuplicatePolicy,
    horizon: Option<usize>,
}

impl TripleTensor {
    pub fn new(vocab: Vocabulary) -> Self {
        TripleTensor {
            vocab,
            known: BTreeMap::new(),
            counts: BTreeMap::new(),
            n_t: BTreeMap::new(),
            n_total: 0,
            duplicates: DuplicatePolicy::default(),
            horizon: None,
        }
    }

    pub fn with_duplicate_policy(mut self, policy: DuplicatePolicy) -> Self {
        self.duplicates = policy;
        self
    }

    /// Restrict [`expected_state`](Self::expected_state) to the most recent
    /// `window` instances (registration order). `None` means all of them.
    pub fn with_horizon(mut self, window: Option<usize>) -> Self {
        self.horizon = window;
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Mutable access for vocabulary growth. Existing ids never change.
    pub fn vocab_mut(&mut self) -> &mut Vocabulary {
        &mut self.vocab
    }

    pub fn add_observation(
        &mut self,
        s: VocabId,
        p: VocabId,
        o: VocabId,
        t: VocabId,
        truth: bool,
    ) -> Result<()> {
        let concept = [Kind::Entity, Kind::Class, Kind::Attribute];
        self.vocab.check(s, &concept)?;
        self.vocab.check(p, &[Kind::Predicate])?;
        self.vocab.check(o, &concept)?;
        self.vocab.check(t, &[Kind::Instance])?;
        let q = Quad::new(s, p, o, t);
        if let Some(&prev) = self.known.get(&q) {
            if prev != truth {
                return Err(BtnError::Conflict(self.describe(&q)));
            }
            return match self.duplicates {
                DuplicatePolicy::Idempotent => Ok(()),
                DuplicatePolicy::Reject => Err(BtnError::Duplicate(self.describe(&q))),
            };
        }
        self.known.insert(q, truth);
        let c = self.counts.entry(q.triple()).or_default();
        c.1 += 1;
        if truth {
            c.0 += 1;
            *self.n_t.entry(t).or_default() += 1;
            self.n_total += 1;
        }
        Ok(())
    }

    /// Name-based convenience wrapper around [`add_observation`](Self::add_observation).
    pub fn observe(&mut self, s: &str, p: &str, o: &str, t: &str, truth: bool) -> Result<()> {
        let v = &self.vocab;
        let (s, p, o, t) = (v.id(s)?, v.id(p)?, v.id(o)?, v.id(t)?);
        self.add_observation(s, p, o, t, truth)
    }

    fn describe(&self, q: &Quad) -> String {
        let v = &self.vocab;
        format!("({}, {}, {}, {})", v.name(q.s), v.name(q.p), v.name(q.o), v.name(q.t))
    }

    /// Known quadruples at instance `t` in sorted order.
    fn at(&self, t: VocabId) -> impl Iterator<Item = (&Quad, &bool)> {
        let lo = Quad { t, s: VocabId(0), p: VocabId(0), o: VocabId(0) };
        let hi = Quad { t, s: VocabId(u32::MAX), p: VocabId(u32::MAX), o: VocabId(u32::MAX) };
        self.known.range(lo..=hi)
    }

    /// Positive quadruples at instance `t`.
    pub fn positives_at(&self, t: VocabId) -> impl Iterator<Item = Quad> + '_ {
        self.at(t).filter(|(_, &y)| y).map(|(q, _)| *q)
    }

    pub fn positives(&self) -> impl Iterator<Item = Quad> + '_ {
        self.known.iter().filter(|(_, &y)| y).map(|(q, _)| *q)
    }

    pub fn known(&self) -> impl Iterator<Item = (Quad, bool)> + '_ {
        self.known.iter().map(|(q, &y)| (*q, y))
    }

    pub fn is_positive(&self, q: &Quad) -> bool {
        self.known.get(q).copied().unwrap_or(false)
    }

    pub fn truth(&self, q: &Quad) -> Option<bool> {
        self.known.get(q).copied()
    }

    pub fn n_t(&self, t: VocabId) -> usize {
        self.n_t.get(&t).copied().unwrap_or(0)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    /// Instances with at least one positive triple, in id order.
    pub fn populated_instances(&self) -> Vec<VocabId> {
        self.n_t.iter().filter(|(_, &n)| n > 0).map(|(&t, _)| t).collect()
    }

    /// Entities appearing as subject or object of a positive triple at `t`.
    pub fn entities_at(&self, t: VocabId) -> Vec<VocabId> {
        let mut set = BTreeSet::new();
        for q in self.positives_at(t) {
            for id in [q.s, q.o] {
                if self.vocab.kind(id) == Kind::Entity {
                    set.insert(id);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Materializes LCWA negatives at `t` for the given entities and returns
    /// every negative that applies (including ones already known).
    ///
    /// Unary: for each label family in which an entity has a positive label at
    /// `t`, the other members are false. Binary: for each ordered pair of the
    /// given entities with at least one positive binary label at `t`, all other
    /// binary labels are false.
    pub fn lcwa_expand(&mut self, t: VocabId, observed_entities: &[VocabId]) -> Result<Vec<Quad>> {
        self.vocab.check(t, &[Kind::Instance])?;
        let ha = self.vocab.has_attribute();
        let observed: BTreeSet<VocabId> = observed_entities.iter().copied().collect();
        let positives: BTreeSet<Quad> = self.positives_at(t).collect();
        let mut negatives = Vec::new();
        for &e in &observed {
            let mut families = BTreeSet::new();
            for q in positives.iter().filter(|q| q.s == e && q.p == ha) {
                if let Some(f) = self.vocab.family_of(q.o) {
                    families.insert(f);
                }
            }
            for f in families {
                for &m in &self.vocab.families()[f].members {
                    let q = Quad::new(e, ha, m, t);
                    if !positives.contains(&q) {
                        negatives.push(q);
                    }
                }
            }
        }
        let pairs: BTreeSet<(VocabId, VocabId)> = positives
            .iter()
            .filter(|q| q.p != ha && observed.contains(&q.s) && observed.contains(&q.o))
            .map(|q| (q.s, q.o))
            .collect();
        for (s, o) in pairs {
            for &p in self.vocab.binary_labels() {
                let q = Quad::new(s, p, o, t);
                if !positives.contains(&q) {
                    negatives.push(q);
                }
            }
        }
        let saved = std::mem::replace(&mut self.duplicates, DuplicatePolicy::Idempotent);
        let res = negatives
            .iter()
            .try_for_each(|q| self.add_observation(q.s, q.p, q.o, q.t, false));
        self.duplicates = saved;
        res?;
        Ok(negatives)
    }

    /// Applies [`lcwa_expand`](Self::lcwa_expand) at every populated instance
    /// using the entities present in its positives.
    pub fn lcwa_expand_all(&mut self) -> Result<usize> {
        let mut n = 0;
        for t in self.populated_instances() {
            let ents = self.entities_at(t);
            n += self.lcwa_expand(t, &ents)?.len();
        }
        Ok(n)
    }

    /// Observation model: `i_{s,p,o,t} / N_t` over the positives at `t`.
    pub fn empirical_observation_dist(&self, t: VocabId) -> Result<CategoricalDist<Triple>> {
        let n = self.n_t(t);
        if n == 0 {
            return Err(BtnError::EmptyInstance(self.vocab.name(t).to_string()));
        }
        let support: Vec<Triple> = self.positives_at(t).map(|q| q.triple()).collect();
        let weights = vec![1.0 / n as f64; support.len()];
        CategoricalDist::from_weights(support, weights)
    }

    /// Pre-observation model: `sum_t i_{s,p,o,t} / N_total`.
    pub fn empirical_pre_observation_dist(&self) -> Result<CategoricalDist<Triple>> {
        if self.n_total == 0 {
            return Err(BtnError::EmptyStore);
        }
        let (support, weights): (Vec<Triple>, Vec<f64>) = self
            .counts
            .iter()
            .filter(|(_, c)| c.0 > 0)
            .map(|(tr, c)| (*tr, c.0 as f64 / self.n_total as f64))
            .unzip();
        CategoricalDist::from_weights(support, weights)
    }

    /// Expected-state model: mean truth value over the instances where the
    /// triple is known, within the configured horizon.
    pub fn expected_state(&self, s: VocabId, p: VocabId, o: VocabId) -> Estimate {
        match self.horizon {
            None => {
                let tr = Triple { s, p, o };
                match self.counts.get(&tr) {
                    Some(&(pos, known)) if known > 0 => Estimate::Known(pos as f64 / known as f64),
                    _ => Estimate::Unknown,
                }
            }
            Some(w) => {
                let inst = self.vocab.instances();
                let start = inst.len().saturating_sub(w);
                self.expected_state_over(s, p, o, &inst[start..])
            }
        }
    }

    /// Expected state restricted to the given instances.
    pub fn expected_state_over(
        &self,
        s: VocabId,
        p: VocabId,
        o: VocabId,
        instances: &[VocabId],
    ) -> Estimate {
        let (mut pos, mut known) = (0usize, 0usize);
        for &t in instances {
            if let Some(&y) = self.known.get(&Quad::new(s, p, o, t)) {
                known += 1;
                pos += y as usize;
            }
        }
        if known == 0 {
            Estimate::Unknown
        } else {
            Estimate::Known(pos as f64 / known as f64)
        }
    }

    /// Generalized statement `(c1, hA, c2)`: the fraction of (entity, instance)
    /// pairs labeled `c1` that also carry `c2`, counted where `c2` is known.
    pub fn generalized_statement(&self, c1: VocabId, c2: VocabId) -> Estimate {
        let ha = self.vocab.has_attribute();
        let (mut num, mut den) = (0usize, 0usize);
        for (q, &y) in &self.known {
            if !y || q.p != ha || q.o != c1 {
                continue;
            }
            if let Some(&y2) = self.known.get(&Quad::new(q.s, ha, c2, q.t)) {
                den += 1;
                num += y2 as usize;
            }
        }
        if den == 0 {
            Estimate::Unknown
        } else {
            Estimate::Known(num as f64 / den as f64)
        }
    }

    /// Writes the JSON-Lines triple format. With `positives_only`, LCWA
    /// negatives are left for the reader to re-derive.
    pub fn write_jsonl<W: Write>(&self, mut w: W, positives_only: bool) -> Result<usize> {
        let mut n = 0;
        for (q, &y) in &self.known {
            if positives_only && !y {
                continue;
            }
            let line = TripleLine {
                s: self.vocab.name(q.s).to_string(),
                p: self.vocab.name(q.p).to_string(),
                o: self.vocab.name(q.o).to_string(),
                t: self.vocab.name(q.t).to_string(),
                y: y as u8,
                provenance: None,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
            n += 1;
        }
        Ok(n)
    }

    /// Reads triple lines, resolving names against the store's vocabulary.
    /// Returns the number of lines ingested.
    pub fn read_jsonl<R: BufRead>(&mut self, r: R) -> Result<usize> {
        let mut n = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let tl: TripleLine = serde_json::from_str(&line)
                .map_err(|e| BtnError::Format(format!("line {}: {e}", lineno + 1)))?;
            if tl.y > 1 {
                return Err(BtnError::Format(format!("line {}: y must be 0 or 1", lineno + 1)));
            }
            self.observe(&tl.s, &tl.p, &tl.o, &tl.t, tl.y == 1)?;
            n += 1;
        }
        Ok(n)
    }
}

/// One line of the triple file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleLine {
    pub s: String,
    pub p: String,
    pub o: String,
    pub t: String,
    pub y: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Dirichlet update `(gamma * pre + n_t * obs) / (gamma + n_t)` over the union
/// of both supports.
pub fn dirichlet_fuse<K: Clone + Ord>(
    pre: &CategoricalDist<K>,
    obs: &CategoricalDist<K>,
    gamma: f64,
    n_t: u64,
) -> Result<CategoricalDist<K>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(BtnError::InvalidInput(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let n = n_t as f64;
    if gamma + n <= 0.0 {
        return Err(BtnError::ZeroWeights);
    }
    // The limits are returned as is; rescaling by gamma / gamma can move the last bit.
    if n_t == 0 {
        return Ok(pre.clone());
    }
    if gamma == 0.0 {
        return Ok(obs.clone());
    }
    let mut mass: BTreeMap<K, f64> = BTreeMap::new();
    for (k, p) in pre.iter() {
        *mass.entry(k.clone()).or_default() += gamma * p;
    }
    for (k, p) in obs.iter() {
        *mass.entry(k.clone()).or_default() += n * p;
    }
    let (support, weights): (Vec<K>, Vec<f64>) =
        mass.into_iter().map(|(k, m)| (k, m / (gamma + n))).unzip();
    CategoricalDist::from_weights(support, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let mut v = Vocabulary::new();
        for e in ["Sparky", "Jack"] {
            v.add_entity(e).unwrap();
        }
        v.add_class("Dog").unwrap();
        v.add_class("Person").unwrap();
        v.add_class("Mammal").unwrap();
        for a in ["Black", "White", "Other", "Barking", "Quiet"] {
            v.add_attribute(a).unwrap();
        }
        for p in ["ownedBy", "looksAt", "p3", "p4", "p5", "p6", "p7", "p8"] {
            v.add_predicate(p).unwrap();
        }
        for i in 0..1010 {
            v.add_instance(&format!("t{i}")).unwrap();
        }
        v.add_family("B-Class", &["Dog", "Person"]).unwrap();
        v.add_family("P-Class", &["Mammal"]).unwrap();
        v.add_family("Color", &["Black", "White", "Other"]).unwrap();
        v.add_family("Sound", &["Barking", "Quiet"]).unwrap();
        v
    }

    #[test]
    fn insertion_and_conflicts() {
        let mut st = TripleTensor::new(vocab());
        st.observe("Sparky", "hA", "Dog", "t1", true).unwrap();
        let q = Quad::new(
            st.vocab().id("Sparky").unwrap(),
            st.vocab().has_attribute(),
            st.vocab().id("Dog").unwrap(),
            st.vocab().id("t1").unwrap(),
        );
        assert!(st.is_positive(&q));
        st.observe("Sparky", "hA", "Dog", "t1", true).unwrap();
        assert_eq!(st.n_total(), 1);
        assert!(matches!(
            st.observe("Sparky", "hA", "Dog", "t1", false),
            Err(BtnError::Conflict(_))
        ));
        let mut strict = TripleTensor::new(vocab()).with_duplicate_policy(DuplicatePolicy::Reject);
        strict.observe("Sparky", "hA", "Dog", "t1", true).unwrap();
        assert!(strict.observe("Sparky", "hA", "Dog", "t1", true).is_err());
        assert!(st.observe("Rex", "hA", "Dog", "t1", true).is_err());
        assert!(st.observe("Sparky", "Dog", "Dog", "t1", true).is_err());
    }

    #[test]
    fn lcwa_complements_families_and_pairs() {
        let mut st = TripleTensor::new(vocab());
        st.observe("Sparky", "hA", "Black", "t1", true).unwrap();
        st.observe("Sparky", "ownedBy", "Jack", "t1", true).unwrap();
        let v = st.vocab().clone();
        let (sp, jk, t1) = (v.id("Sparky").unwrap(), v.id("Jack").unwrap(), v.id("t1").unwrap());
        let neg = st.lcwa_expand(t1, &[sp, jk]).unwrap();
        let unary: Vec<_> = neg.iter().filter(|q| q.p == v.has_attribute()).map(|q| q.o).collect();
        assert_eq!(unary, vec![v.id("White").unwrap(), v.id("Other").unwrap()]);
        assert_eq!(neg.iter().filter(|q| q.p != v.has_attribute()).count(), 7);
        assert!(neg.iter().all(|q| st.truth(q) == Some(false)));
        assert!(st.lcwa_expand(t1, &[]).unwrap().is_empty());
    }

    #[test]
    fn observation_and_pre_observation_models() {
        let mut st = TripleTensor::new(vocab());
        for (s, p, o) in [("Sparky", "hA", "Dog"), ("Sparky", "hA", "Black"), ("Jack", "hA", "Person"), ("Sparky", "ownedBy", "Jack")] {
            st.observe(s, p, o, "t1", true).unwrap();
        }
        let t1 = st.vocab().id("t1").unwrap();
        let d = st.empirical_observation_dist(t1).unwrap();
        assert!(d.probs().iter().all(|&p| p == 0.25));
        let t2 = st.vocab().id("t2").unwrap();
        assert!(matches!(st.empirical_observation_dist(t2), Err(BtnError::EmptyInstance(_))));
        let pre = st.empirical_pre_observation_dist().unwrap();
        assert!((pre.total() - 1.0).abs() < 1e-12);
        assert!(matches!(
            TripleTensor::new(vocab()).empirical_pre_observation_dist(),
            Err(BtnError::EmptyStore)
        ));
    }

    #[test]
    fn expected_state_barking_example() {
        let mut st = TripleTensor::new(vocab());
        for i in 0..1010 {
            let t = format!("t{i}");
            let (pos, neg) = if i < 10 { ("Barking", "Quiet") } else { ("Quiet", "Barking") };
            st.observe("Sparky", "hA", pos, &t, true).unwrap();
            st.observe("Sparky", "hA", neg, &t, false).unwrap();
        }
        let v = st.vocab().clone();
        let e = st.expected_state(v.id("Sparky").unwrap(), v.has_attribute(), v.id("Barking").unwrap());
        let p = e.known().unwrap();
        assert!((p - 10.0 / 1010.0).abs() < 1e-15);
        assert!((p - 0.0099).abs() < 1e-4);
        assert!(st
            .expected_state(v.id("Jack").unwrap(), v.has_attribute(), v.id("Barking").unwrap())
            .is_unknown());
        // A horizon over the last 1000 instances never sees the barking days.
        let windowed = st.clone().with_horizon(Some(1000));
        let w = windowed.expected_state(v.id("Sparky").unwrap(), v.has_attribute(), v.id("Barking").unwrap());
        assert_eq!(w, Estimate::Known(0.0));
    }

    #[test]
    fn generalized_statements() {
        let mut st = TripleTensor::new(vocab());
        st.observe("Sparky", "hA", "Dog", "t1", true).unwrap();
        st.observe("Sparky", "hA", "Mammal", "t1", true).unwrap();
        st.observe("Jack", "hA", "Person", "t1", true).unwrap();
        st.observe("Jack", "hA", "Mammal", "t1", true).unwrap();
        st.lcwa_expand_all().unwrap();
        let v = st.vocab().clone();
        let id = |n| v.id(n).unwrap();
        assert_eq!(st.generalized_statement(id("Dog"), id("Mammal")), Estimate::Known(1.0));
        assert_eq!(st.generalized_statement(id("Dog"), id("Dog")), Estimate::Known(1.0));
        assert_eq!(st.generalized_statement(id("Mammal"), id("Dog")), Estimate::Known(0.5));
        assert!(st.generalized_statement(id("White"), id("Dog")).is_unknown());
    }

    #[test]
    fn fusion_special_cases() {
        let pre = CategoricalDist::from_weights(vec![0, 1, 2], vec![0.5, 0.5, 0.0]).unwrap();
        let obs = CategoricalDist::from_weights(vec![0, 1, 2], vec![0.0, 0.5, 0.5]).unwrap();
        assert_eq!(dirichlet_fuse(&pre, &obs, 0.0, 3).unwrap(), obs);
        assert_eq!(dirichlet_fuse(&pre, &obs, 2.5, 0).unwrap(), pre);
        let f = dirichlet_fuse(&pre, &obs, 2.0, 2).unwrap();
        assert_eq!(f.probs(), &[0.25, 0.5, 0.25]);
        assert!(matches!(dirichlet_fuse(&pre, &obs, 0.0, 0), Err(BtnError::ZeroWeights)));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut st = TripleTensor::new(vocab());
        st.observe("Sparky", "hA", "Black", "t1", true).unwrap();
        st.observe("Sparky", "ownedBy", "Jack", "t1", true).unwrap();
        st.lcwa_expand_all().unwrap();
        let mut buf = Vec::new();
        let lines = st.write_jsonl(&mut buf, true).unwrap();
        assert_eq!(lines, st.n_total());
        let mut back = TripleTensor::new(vocab());
        back.read_jsonl(buf.as_slice()).unwrap();
        back.lcwa_expand_all().unwrap();
        assert_eq!(back.n_known(), st.n_known());
        let mut again = Vec::new();
        back.write_jsonl(&mut again, true).unwrap();
        assert_eq!(buf, again);
    }
}
