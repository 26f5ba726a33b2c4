//! Normalized categorical distributions over a declared support.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{BtnError, Result};

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist<K> {
    support: Vec<K>,
    probs: Vec<f64>,
}

impl<K: Clone + Ord> CategoricalDist<K> {
    /// Builds from nonnegative weights, normalizing them. The support is kept
    /// in the given order; duplicate keys are rejected.
    pub fn from_weights(support: Vec<K>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(BtnError::InvalidInput("support and weights differ in length".into()));
        }
        if support.is_empty() {
            return Err(BtnError::EmptyIndexSet("distribution support"));
        }
        {
            let mut sorted: Vec<&K> = support.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(BtnError::InvalidInput("duplicate support ids".into()));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(BtnError::NonFinite("distribution weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(BtnError::InvalidInput("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(CategoricalDist { support, probs })
    }

    pub fn uniform(support: Vec<K>) -> Result<Self> {
        let n = support.len();
        Self::from_weights(support, vec![1.0; n])
    }

    pub fn point(k: K) -> Self {
        CategoricalDist { support: vec![k], probs: vec![1.0] }
    }

    pub fn support(&self) -> &[K] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.support.iter().zip(self.probs.iter().copied())
    }

    /// Probability of `k`; zero outside the support.
    pub fn prob(&self, k: &K) -> f64 {
        self.support
            .iter()
            .position(|x| x == k)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Most probable element; ties go to the smallest key.
    pub fn argmax(&self) -> &K {
        let mut best = 0;
        for i in 1..self.support.len() {
            let (p, b) = (self.probs[i], self.probs[best]);
            if p > b || (p == b && self.support[i] < self.support[best]) {
                best = i;
            }
        }
        &self.support[best]
    }

    /// Support sorted by decreasing probability, ties by key.
    pub fn ranked(&self) -> Vec<K> {
        let mut idx: Vec<usize> = (0..self.support.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.support[a].cmp(&self.support[b]))
        });
        idx.into_iter().map(|i| self.support[i].clone()).collect()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &K {
        let u: f64 = rng.random::<f64>();
        let mut acc = 0.0;
        for (k, p) in self.iter() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // Rounding left a sliver of mass; give it to the last nonzero entry.
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        &self.support[last]
    }

    /// Total-variation distance, treating missing keys as zero mass.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let mut m: BTreeMap<&K, (f64, f64)> = BTreeMap::new();
        for (k, p) in self.iter() {
            m.entry(k).or_default().0 += p;
        }
        for (k, p) in other.iter() {
            m.entry(k).or_default().1 += p;
        }
        0.5 * m.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}
