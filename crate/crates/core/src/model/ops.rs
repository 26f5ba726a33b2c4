//! Building blocks of a decoding pass.

use crate::dist::CategoricalDist;
use crate::error::{BtnError, Result};
use crate::linalg::{self, axpy, dot, Mat};
use crate::model::BtnParams;
use crate::vocab::{Kind, VocabId, Vocabulary};

pub use crate::linalg::sig;

/// Index sets the sampling steps draw from.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSets {
    pub instances: Vec<VocabId>,
    pub entities: Vec<VocabId>,
    /// `(family name, members)` in vocabulary family order.
    pub families: Vec<(String, Vec<VocabId>)>,
    pub binary: Vec<VocabId>,
}

impl IndexSets {
    pub fn from_vocab(vocab: &Vocabulary) -> Self {
        IndexSets {
            instances: vocab.instances().to_vec(),
            entities: vocab.entities().to_vec(),
            families: vocab
                .families()
                .iter()
                .map(|f| (f.name.clone(), f.members.clone()))
                .collect(),
            binary: vocab.binary_labels().to_vec(),
        }
    }

    pub fn family(&self, name: &str) -> Option<&[VocabId]> {
        self.families.iter().find(|(n, _)| n == name).map(|(_, m)| m.as_slice())
    }

    /// Drops one family, e.g. to ask what perception alone knows.
    pub fn without_family(mut self, name: &str) -> Self {
        self.families.retain(|(n, _)| n != name);
        self
    }
}

/// `softmax(βx)` as a distribution over `ids`.
pub fn softmax_beta(ids: &[VocabId], x: &[f64], beta: f64) -> Result<CategoricalDist<VocabId>> {
    if ids.is_empty() {
        return Err(BtnError::EmptyIndexSet("softmax support"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(BtnError::NonFinite("index layer".into()));
    }
    if beta.is_infinite() {
        // One-hot at the maximum; ties go to the lowest id.
        let mut best = 0;
        for i in 1..ids.len() {
            if x[i] > x[best] || (x[i] == x[best] && ids[i] < ids[best]) {
                best = i;
            }
        }
        let mut w = vec![0.0; ids.len()];
        w[best] = 1.0;
        return CategoricalDist::from_weights(ids.to_vec(), w);
    }
    CategoricalDist::from_weights(ids.to_vec(), linalg::softmax_vec(x, beta))
}

/// `n_k = a_kᵀ z` for every id in `ids`.
pub fn index_scores(params: &BtnParams, ids: &[VocabId], z: &[f64]) -> Vec<f64> {
    ids.iter().map(|&k| dot(params.column(k), z)).collect()
}

/// `W sig(B sig(V sig(q)))`
pub fn g(q: &[f64], params: &BtnParams) -> Vec<f64> {
    let t = &params.t;
    let inner = sig(&t.v.matvec(&sig(q)));
    let h = t.b.matvec(&inner);
    t.w.matvec(&sig(&h))
}

/// `h ← B sig[sig(h) + V sig(q)]`
pub fn step_context(h: &[f64], q: &[f64], params: &BtnParams) -> Vec<f64> {
    let mut x = sig(h);
    axpy(1.0, &params.t.v.matvec(&sig(q)), &mut x);
    params.t.b.matvec(&sig(&x))
}

/// Read-out of the context layer into the representation layer, `W sig(h)`.
pub fn context_readout(h: &[f64], params: &BtnParams) -> Vec<f64> {
    params.t.w.matvec(&sig(h))
}

/// `q̃ + Σ_k softmax^β(A_Kᵀ sig(q̃))_k a_k` over the columns `ids`.
pub fn attend(q_tilde: &[f64], params: &BtnParams, ids: &[VocabId], beta: f64) -> Result<Vec<f64>> {
    let n = index_scores(params, ids, &sig(q_tilde));
    let w = softmax_beta(ids, &n, beta)?;
    let mut q = q_tilde.to_vec();
    for (&k, p) in w.iter() {
        if p != 0.0 {
            axpy(p, params.column_up(k), &mut q);
        }
    }
    Ok(q)
}

/// Attention over entity columns standing in for sampling a subject or object.
pub fn semantic_attention(q_tilde: &[f64], params: &BtnParams, entities: &[VocabId]) -> Result<Vec<f64>> {
    attend(q_tilde, params, entities, 1.0)
}

/// Attention over instance columns standing in for sampling `t*`.
pub fn episodic_attention(q_tilde: &[f64], params: &BtnParams, instances: &[VocabId]) -> Result<Vec<f64>> {
    attend(q_tilde, params, instances, 1.0)
}

/// `sig(a_cᵀ sig(q_S))`
pub fn boolean_unary(q_s: &[f64], c: VocabId, params: &BtnParams, vocab: &Vocabulary) -> Result<f64> {
    vocab.check(c, &[Kind::Class, Kind::Attribute])?;
    Ok(linalg::sigmoid(dot(params.column(c), &sig(q_s))))
}

/// `sig(a_pᵀ sig(q_P))`
pub fn boolean_binary(q_p: &[f64], p: VocabId, params: &BtnParams, vocab: &Vocabulary) -> Result<f64> {
    vocab.check(p, &[Kind::Predicate])?;
    Ok(linalg::sigmoid(dot(params.column(p), &sig(q_p))))
}

/// Continues unary decoding after a subject: in each step the most confident
/// family not yet emitted fires, and its label is added into `q`. The context
/// layer is left untouched.
pub fn chain_unary<R: rand::Rng + ?Sized>(
    q: &[f64],
    params: &BtnParams,
    sets: &IndexSets,
    steps: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<VocabId>> {
    if steps == 0 {
        return Err(BtnError::InvalidInput("chain_unary needs at least one step".into()));
    }
    let mut q = q.to_vec();
    let mut done = vec![false; sets.families.len()];
    let mut out = Vec::new();
    for _ in 0..steps.min(sets.families.len()) {
        let z = sig(&q);
        let mut best: Option<(usize, CategoricalDist<VocabId>, f64)> = None;
        for (i, (_, members)) in sets.families.iter().enumerate() {
            if done[i] {
                continue;
            }
            let d = softmax_beta(members, &index_scores(params, members, &z), 1.0)?;
            let top = d.prob(d.argmax());
            if best.as_ref().is_none_or(|b| top > b.2) {
                best = Some((i, d, top));
            }
        }
        let Some((i, d, _)) = best else { break };
        let members = &sets.families[i].1;
        let c = if beta == 1.0 {
            *d.sample(rng)
        } else {
            *softmax_beta(members, &index_scores(params, members, &z), beta)?.sample(rng)
        };
        done[i] = true;
        axpy(1.0, params.column_up(c), &mut q);
        out.push(c);
    }
    Ok(out)
}

/// `M` restricted to rows `ids`, for diagnostics.
pub fn columns(params: &BtnParams, ids: &[VocabId]) -> Mat {
    let mut m = Mat::zeros(0, params.rank());
    for &k in ids {
        m.push_row(params.column(k));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(r: usize, h: usize, d: usize) -> BtnParams {
        BtnParams::init(ModelConfig { rank: r, hidden: h, feature_dim: 2, ..Default::default() }, d)
    }

    #[test]
    fn g_matches_hand_evaluation() {
        let mut p = tiny(2, 2, 1);
        p.t.v = Mat { rows: 2, cols: 2, data: vec![1.0, 0.0, 0.0, -1.0] };
        p.t.b = Mat { rows: 2, cols: 2, data: vec![0.5, 0.0, 0.0, 2.0] };
        p.t.w = Mat { rows: 2, cols: 2, data: vec![1.0, 1.0, 0.0, 1.0] };
        let q = [0.3, -0.7];
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let v = [s(s(0.3)), s(-s(-0.7))];
        let h = [0.5 * v[0], 2.0 * v[1]];
        let want = [s(h[0]) + s(h[1]), s(h[1])];
        let got = g(&q, &p);
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        p.t.w.fill(0.0);
        assert_eq!(g(&q, &p), vec![0.0, 0.0]);
    }

    #[test]
    fn step_context_from_rest() {
        let mut p = tiny(2, 2, 1);
        p.t.v = Mat { rows: 2, cols: 2, data: vec![1.0, 2.0, -1.0, 0.0] };
        p.t.b = Mat { rows: 2, cols: 2, data: vec![1.0, 0.0, 1.0, 1.0] };
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        // sig(0) = 0.5 everywhere, so V sig(q) = [1.5, -0.5].
        let x = [s(0.5 + 1.5), s(0.5 - 0.5)];
        let want = [x[0], x[0] + x[1]];
        let got = step_context(&[0.0, 0.0], &[0.0, 0.0], &p);
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn attention_hand_cases() {
        let mut p = tiny(2, 1, 2);
        p.t.embed = Mat { rows: 2, cols: 2, data: vec![1.0, 0.0, 0.0, 1.0] };
        let ids = [VocabId(0), VocabId(1)];
        // Singleton set adds the column exactly.
        assert_eq!(attend(&[0.2, 0.1], &p, &ids[..1], 1.0).unwrap(), vec![1.2, 0.1]);
        // Zero input at β = 0: uniform weights, so the column mean is added.
        assert_eq!(attend(&[0.0, 0.0], &p, &ids, 0.0).unwrap(), vec![0.5, 0.5]);
        // Aligned with the first column: weights are softmax(sig(3), sig(0)).
        let q = [3.0, 0.0];
        let z = sig(&q);
        let e0 = (z[0] - z[1]).exp();
        let w0 = e0 / (e0 + 1.0);
        let out = attend(&q, &p, &ids, 1.0).unwrap();
        assert!((out[0] - (3.0 + w0)).abs() < 1e-15);
        assert!((out[1] - (1.0 - w0)).abs() < 1e-15);
        assert!(w0 > 0.5);
    }

    #[test]
    fn winner_take_all_breaks_ties_low() {
        let ids = [VocabId(4), VocabId(2), VocabId(9)];
        let d = softmax_beta(&ids, &[1.0, 1.0, 0.0], f64::INFINITY).unwrap();
        assert_eq!(*d.argmax(), VocabId(2));
        assert_eq!(d.prob(&VocabId(2)), 1.0);
        let u = softmax_beta(&ids, &[5.0, -1.0, 2.0], 0.0).unwrap();
        assert!(u.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }
}
