//! Social network among persons: each person links to the persons with the
//! highest embedding scores, and each link is oriented at random with odds
//! set by the embedding norms.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{BtnError, Result};
use crate::linalg::{add, dot, norm};

/// `P(s knows s')` for one unordered pair, normalized over its two
/// orientations: `exp(β‖a_s‖/‖a_s + a_s'‖)` against the same with `s'`.
pub fn orientation_probability(a_s: &[f64], a_o: &[f64], beta: f64) -> f64 {
    let sum = norm(&add(a_s, a_o)).max(1e-12);
    let x = beta * norm(a_s) / sum;
    let y = beta * norm(a_o) / sum;
    1.0 / (1.0 + (y - x).exp())
}

/// Directed `knows` edges `(s, s')` over indices into `embeddings`.
pub fn gen_social_network<R: Rng + ?Sized>(
    embeddings: &[Vec<f64>],
    k: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = embeddings.len();
    if k == 0 || n < k + 1 {
        return Err(BtnError::Infeasible(format!("{n} persons cannot each link to {k} others")));
    }
    let mut pairs = BTreeSet::new();
    for s in 0..n {
        let mut scored: Vec<(f64, usize)> = (0..n)
            .filter(|&o| o != s)
            .map(|o| (dot(&embeddings[s], &embeddings[o]), o))
            .collect();
        // Highest score first, ties by index.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, o) in scored.iter().take(k) {
            pairs.insert((s.min(o), s.max(o)));
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(a, b)| {
            let p = orientation_probability(&embeddings[a], &embeddings[b], beta);
            if rng.random::<f64>() < p {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect())
}
