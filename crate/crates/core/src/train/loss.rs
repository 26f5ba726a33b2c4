//! Cross-entropy losses of the teacher-forced decoding pass and their
//! gradients, derived by hand for the fixed graph.
//!
//! Per example the pass is
//!
//! ```text
//! q_T  = q̃_T + a_t | ā | Σ_k π_k a_k        (episodic | semantic | perception)
//! h1   = B sig(sig(h0) + V sig(q_T))
//! q_S  = f(BB_sub) + W sig(h1) + a_s
//! h2   = B sig(sig(h1) + V sig(q_S))
//! q_O  = f(BB_obj) + W sig(h2) + a_o          (per object)
//! h3   = B sig(sig(h2) + V sig(q_O))
//! q_P  = f(BB_pred) + W sig(h3)
//! ```
//!
//! with softmax heads reading `sig(q̃)` before each commitment and the unary
//! family heads reading `sig(q_S)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::linalg::{self, axpy, dot, sig, sigmoid};
use crate::model::ops::IndexSets;
use crate::model::{BtnParams, Tensors};
use crate::train::examples::{Context, Example, Features};
use crate::vocab::VocabId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub perception: f64,
    pub episodic: f64,
    pub semantic: f64,
    pub direct: f64,
    /// Instance head in perception, relative to the other terms.
    pub instance: f64,
    /// Logistic terms on the Boolean heads (label present or absent within
    /// the target's family, predicate present or absent for the pair).
    pub boolean: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { perception: 1.0, episodic: 1.0, semantic: 1.0, direct: 1.0, instance: 1.0, boolean: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Dropout rate on encoded features; zero disables it.
    pub dropout: f64,
    /// In perception, write the head's softmax mixture of entity embeddings
    /// into `q_S` and `q_O` instead of the target entity's.
    pub soft_commit: bool,
}

impl LossWeights {
    fn of(&self, c: &Context) -> f64 {
        match c {
            Context::Episodic(_) => self.episodic,
            Context::Semantic => self.semantic,
            Context::Perception { .. } => self.perception,
            Context::Direct => self.direct,
        }
    }
}

/// Gradient sink; `None` in loss-only evaluation.
struct Sink<'a> {
    g: Option<&'a mut Tensors>,
}

impl Sink<'_> {
    fn on(&self) -> bool {
        self.g.is_some()
    }

    fn down(&mut self, k: VocabId, alpha: f64, z: &[f64]) {
        if let Some(g) = self.g.as_deref_mut() {
            axpy(alpha, z, g.embed.row_mut(k.index()));
        }
    }

    fn up(&mut self, k: VocabId, alpha: f64, v: &[f64]) {
        if let Some(g) = self.g.as_deref_mut() {
            let m = g.embed_up.as_mut().unwrap_or(&mut g.embed);
            axpy(alpha, v, m.row_mut(k.index()));
        }
    }

    fn with(&mut self, f: impl FnOnce(&mut Tensors)) {
        if let Some(g) = self.g.as_deref_mut() {
            f(g);
        }
    }
}

/// `-w log softmax(A_Kᵀ z)[target]`; adds `∂/∂z` into `gz`. Returns the loss
/// and the head's probabilities.
fn ce_head(
    p: &BtnParams,
    ids: &[VocabId],
    z: &[f64],
    target: VocabId,
    w: f64,
    sink: &mut Sink,
    gz: &mut [f64],
) -> Result<(f64, Vec<f64>)> {
    let n: Vec<f64> = ids.iter().map(|&k| dot(p.column(k), z)).collect();
    let ti = ids
        .iter()
        .position(|&k| k == target)
        .ok_or_else(|| BtnError::UnknownId(format!("target {} outside its index set", target.0)))?;
    let probs = linalg::softmax_vec(&n, 1.0);
    let loss = -w * linalg::log_softmax_at(&n, ti);
    if sink.on() && w != 0.0 {
        for (i, &k) in ids.iter().enumerate() {
            let gn = w * (probs[i] - if i == ti { 1.0 } else { 0.0 });
            if gn != 0.0 {
                sink.down(k, gn, z);
                axpy(gn, p.column(k), gz);
            }
        }
    }
    Ok((loss, probs))
}

/// `Σ_k π_k a_k` over the write columns.
fn mix(p: &BtnParams, ids: &[VocabId], pi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.rank()];
    for (&k, &w) in ids.iter().zip(pi) {
        axpy(w, p.column_up(k), &mut out);
    }
    out
}

/// Backward of `mix` with `π = softmax(A_Kᵀ z)`: `g_q` is `∂L/∂mix`; adds
/// `∂/∂z` into `gz`.
fn mix_back(p: &BtnParams, ids: &[VocabId], pi: &[f64], z: &[f64], g_q: &[f64], sink: &mut Sink, gz: &mut [f64]) {
    let g_pi: Vec<f64> = ids.iter().map(|&k| dot(p.column_up(k), g_q)).collect();
    let mean: f64 = pi.iter().zip(&g_pi).map(|(a, b)| a * b).sum();
    for (i, &k) in ids.iter().enumerate() {
        sink.up(k, pi[i], g_q);
        let gn = pi[i] * (g_pi[i] - mean);
        if gn != 0.0 {
            sink.down(k, gn, z);
            axpy(gn, p.column(k), gz);
        }
    }
}

/// `w Σ_k BCE(sig(a_kᵀ z), [k ∈ positives])`.
fn bool_head(p: &BtnParams, ids: &[VocabId], z: &[f64], positives: &[VocabId], w: f64, sink: &mut Sink, gz: &mut [f64]) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let mut loss = 0.0;
    for &k in ids {
        let n = dot(p.column(k), z);
        let y = positives.contains(&k);
        // -log sig(n) = softplus(-n), -log(1 - sig(n)) = softplus(n)
        loss += w * softplus(if y { -n } else { n });
        if sink.on() {
            let gn = w * (sigmoid(n) - if y { 1.0 } else { 0.0 });
            sink.down(k, gn, z);
            axpy(gn, p.column(k), gz);
        }
    }
    loss
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `g ⊙ z(1 - z)` where `z = sig(q)`.
fn through_sig(g: &[f64], z: &[f64]) -> Vec<f64> {
    g.iter().zip(z).map(|(g, z)| g * z * (1.0 - z)).collect()
}

fn check(v: &[f64], layer: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(BtnError::NonFinite(layer.to_string()))
    }
}

/// An encoded feature vector with its dropout mask.
struct Encoded<'a> {
    x: &'a [f64],
    mask: Option<Vec<f64>>,
    f: Vec<f64>,
}

fn encode<'a>(p: &BtnParams, x: &'a [f64], rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Encoded<'a>> {
    if x.len() != p.config.feature_dim {
        return Err(BtnError::InvalidInput(format!(
            "feature vector has {} entries, the encoder expects {}",
            x.len(),
            p.config.feature_dim
        )));
    }
    let mut f = p.encode(x);
    let mask = rng.map(|rng| {
        (0..f.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
            .collect::<Vec<f64>>()
    });
    if let Some(m) = &mask {
        f.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
    }
    check(&f, "encoder")?;
    Ok(Encoded { x, mask, f })
}

fn encode_back(e: &Encoded, gf: &[f64], sink: &mut Sink) {
    let g_pre: Vec<f64> = match &e.mask {
        Some(m) => gf.iter().zip(m).map(|(g, m)| g * m).collect(),
        None => gf.to_vec(),
    };
    sink.with(|g| {
        g.enc_w.add_outer(1.0, &g_pre, e.x);
        axpy(1.0, &g_pre, &mut g.enc_b);
    });
}

/// `h' = B sig(sig(h) + V z)`, keeping what the backward pass needs.
struct Step {
    y: Vec<f64>,
    h: Vec<f64>,
    s: Vec<f64>,
}

fn step(p: &BtnParams, s_prev: &[f64], z: &[f64]) -> Step {
    let mut x = s_prev.to_vec();
    axpy(1.0, &p.t.v.matvec(z), &mut x);
    let y = sig(&x);
    let h = p.t.b.matvec(&y);
    let s = sig(&h);
    Step { y, h, s }
}

/// Given `∂L/∂sig(h')`, accumulates parameter gradients and returns
/// `(∂L/∂sig(h), ∂L/∂z)`.
fn step_back(p: &BtnParams, st: &Step, z: &[f64], g_s: &[f64], sink: &mut Sink) -> (Vec<f64>, Vec<f64>) {
    let g_h = through_sig(g_s, &st.s);
    sink.with(|g| g.b.add_outer(1.0, &g_h, &st.y));
    let g_y = p.t.b.t_matvec(&g_h);
    let g_x = through_sig(&g_y, &st.y);
    sink.with(|g| g.v.add_outer(1.0, &g_x, z));
    let g_z = p.t.v.t_matvec(&g_x);
    (g_x, g_z)
}

/// Loss of one example; gradients go to `sink`.
fn example_loss(p: &BtnParams, sets: &IndexSets, ex: &Example, cfg: &LossConfig, sink: &mut Sink) -> Result<f64> {
    let w_mode = cfg.weights.of(&ex.context);
    if w_mode == 0.0 {
        return Ok(0.0);
    }
    let wb = cfg.weights.boolean * w_mode;
    let quads = ex.quads() as f64;
    let r = p.rank();
    let mut rng = match (ex.dropout_seed, cfg.dropout > 0.0) {
        (Some(seed), true) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let rate = cfg.dropout;

    if ex.context == Context::Direct {
        return direct_loss(p, sets, ex, cfg, w_mode, wb, sink, &mut rng);
    }

    let mut loss = 0.0;

    // Instance step.
    let scene = match &ex.context {
        Context::Perception { scene, .. } => Some(encode(p, scene, rate, rng.as_mut())?),
        _ => None,
    };
    let q_t_tilde = scene.as_ref().map_or_else(|| vec![0.0; r], |e| e.f.clone());
    let mut ea: Option<(Vec<VocabId>, Vec<f64>, Vec<f64>)> = None;
    let q_t = match &ex.context {
        Context::Episodic(t) => linalg::add(&q_t_tilde, p.column_up(*t)),
        Context::Semantic => linalg::add(&q_t_tilde, &p.t.a_bar),
        Context::Perception { t, .. } => {
            let z = sig(&q_t_tilde);
            let ids = &sets.instances;
            let n: Vec<f64> = ids.iter().map(|&k| dot(p.column(k), &z)).collect();
            let pi = linalg::softmax_vec(&n, 1.0);
            let ti = ids
                .iter()
                .position(|k| k == t)
                .ok_or_else(|| BtnError::UnknownId(format!("instance {}", t.0)))?;
            loss -= cfg.weights.instance * w_mode * quads * linalg::log_softmax_at(&n, ti);
            let mut q = q_t_tilde.clone();
            for (i, &k) in ids.iter().enumerate() {
                axpy(pi[i], p.column_up(k), &mut q);
            }
            ea = Some((ids.clone(), pi, z));
            q
        }
        Context::Direct => unreachable!(),
    };
    check(&q_t, "q_T")?;
    let z_t = sig(&q_t);
    let s0 = vec![0.5; p.hidden()];
    let st1 = step(p, &s0, &z_t);
    check(&st1.h, "h")?;

    // Subject.
    let sub = match ex.context {
        Context::Perception { .. } => Some(encode(p, feat(&ex.bb_sub, "subject box features")?, rate, rng.as_mut())?),
        _ => None,
    };
    let r1 = p.t.w.matvec(&st1.s);
    let q_s_tilde = match &sub {
        Some(e) => linalg::add(&e.f, &r1),
        None => r1,
    };
    let z_s_tilde = sig(&q_s_tilde);
    let mut g_z_s_tilde = vec![0.0; r];
    let subject_term = ex.inject.is_none() && ex.context != Context::Semantic;
    let soft = cfg.soft_commit && matches!(ex.context, Context::Perception { .. });
    let mut pi_s = None;
    if subject_term {
        let (l, probs) = ce_head(p, &sets.entities, &z_s_tilde, ex.s, w_mode * quads, sink, &mut g_z_s_tilde)?;
        loss += l;
        pi_s = soft.then_some(probs);
    }
    let written = ex.inject.unwrap_or(ex.s);
    let q_s = match &pi_s {
        Some(pi) => linalg::add(&q_s_tilde, &mix(p, &sets.entities, pi)),
        None => linalg::add(&q_s_tilde, p.column_up(written)),
    };
    check(&q_s, "q_S")?;
    let z_s = sig(&q_s);
    let mut g_z_s = vec![0.0; r];
    for &(fi, c) in &ex.unary {
        let members = &sets.families[fi].1;
        loss += ce_head(p, members, &z_s, c, w_mode, sink, &mut g_z_s)?.0;
        loss += bool_head(p, members, &z_s, &[c], wb, sink, &mut g_z_s);
    }
    let st2 = step(p, &st1.s, &z_s);

    // Objects, each branching off h2.
    let mut g_r2 = vec![0.0; r];
    let mut g_s2 = vec![0.0; p.hidden()];
    let r2 = p.t.w.matvec(&st2.s);
    for obj in &ex.objects {
        let w_obj = w_mode * obj.preds.len() as f64;
        let eo = match ex.context {
            Context::Perception { .. } => Some(encode(p, feat(&obj.bb_obj, "object box features")?, rate, rng.as_mut())?),
            _ => None,
        };
        let ep = match ex.context {
            Context::Perception { .. } => Some(encode(p, feat(&obj.bb_pred, "predicate box features")?, rate, rng.as_mut())?),
            _ => None,
        };
        let q_o_tilde = match &eo {
            Some(e) => linalg::add(&e.f, &r2),
            None => r2.clone(),
        };
        let z_o_tilde = sig(&q_o_tilde);
        let mut g_z_o_tilde = vec![0.0; r];
        let (l, probs) = ce_head(p, &sets.entities, &z_o_tilde, obj.o, w_obj, sink, &mut g_z_o_tilde)?;
        loss += l;
        let pi_o = soft.then_some(probs);
        let q_o = match &pi_o {
            Some(pi) => linalg::add(&q_o_tilde, &mix(p, &sets.entities, pi)),
            None => linalg::add(&q_o_tilde, p.column_up(obj.o)),
        };
        check(&q_o, "q_O")?;
        let z_o = sig(&q_o);
        let st3 = step(p, &st2.s, &z_o);
        let r3 = p.t.w.matvec(&st3.s);
        let q_p = match &ep {
            Some(e) => linalg::add(&e.f, &r3),
            None => r3,
        };
        check(&q_p, "q_P")?;
        let z_p = sig(&q_p);
        let mut g_z_p = vec![0.0; r];
        for &pr in &obj.preds {
            loss += ce_head(p, &sets.binary, &z_p, pr, w_mode, sink, &mut g_z_p)?.0;
        }
        loss += bool_head(p, &sets.binary, &z_p, &obj.preds, wb, sink, &mut g_z_p);

        if !sink.on() {
            continue;
        }
        let g_q_p = through_sig(&g_z_p, &z_p);
        if let Some(e) = &ep {
            encode_back(e, &g_q_p, sink);
        }
        sink.with(|g| g.w.add_outer(1.0, &g_q_p, &st3.s));
        let g_s3 = p.t.w.t_matvec(&g_q_p);
        let (g_x3, g_z_o) = step_back(p, &st3, &z_o, &g_s3, sink);
        axpy(1.0, &g_x3, &mut g_s2);
        let g_q_o = through_sig(&g_z_o, &z_o);
        match &pi_o {
            Some(pi) => mix_back(p, &sets.entities, pi, &z_o_tilde, &g_q_o, sink, &mut g_z_o_tilde),
            None => sink.up(obj.o, 1.0, &g_q_o),
        }
        let mut g_q_o_tilde = g_q_o;
        axpy(1.0, &through_sig(&g_z_o_tilde, &z_o_tilde), &mut g_q_o_tilde);
        if let Some(e) = &eo {
            encode_back(e, &g_q_o_tilde, sink);
        }
        axpy(1.0, &g_q_o_tilde, &mut g_r2);
    }
    check(&[loss], "loss")?;
    if !sink.on() {
        return Ok(loss);
    }

    // Back through h2 and the subject.
    sink.with(|g| g.w.add_outer(1.0, &g_r2, &st2.s));
    axpy(1.0, &p.t.w.t_matvec(&g_r2), &mut g_s2);
    let (g_x2, g_z_s_ctx) = step_back(p, &st2, &z_s, &g_s2, sink);
    axpy(1.0, &g_z_s_ctx, &mut g_z_s);
    let g_q_s = through_sig(&g_z_s, &z_s);
    match &pi_s {
        Some(pi) => mix_back(p, &sets.entities, pi, &z_s_tilde, &g_q_s, sink, &mut g_z_s_tilde),
        None => sink.up(written, 1.0, &g_q_s),
    }
    let mut g_q_s_tilde = g_q_s;
    axpy(1.0, &through_sig(&g_z_s_tilde, &z_s_tilde), &mut g_q_s_tilde);
    if let Some(e) = &sub {
        encode_back(e, &g_q_s_tilde, sink);
    }
    sink.with(|g| g.w.add_outer(1.0, &g_q_s_tilde, &st1.s));
    // sig(h1) feeds both the read-out and the next step.
    let mut g_s1 = p.t.w.t_matvec(&g_q_s_tilde);
    axpy(1.0, &g_x2, &mut g_s1);
    let (_, g_z_t) = step_back(p, &st1, &z_t, &g_s1, sink);
    let g_q_t = through_sig(&g_z_t, &z_t);

    // Back through the instance step.
    match &ex.context {
        Context::Episodic(t) => sink.up(*t, 1.0, &g_q_t),
        Context::Semantic => sink.with(|g| axpy(1.0, &g_q_t, &mut g.a_bar)),
        Context::Perception { t, .. } => {
            let (ids, pi, z) = ea.expect("set in forward");
            let mut g_q_t_tilde = g_q_t.clone();
            let g_pi: Vec<f64> = ids.iter().map(|&k| dot(p.column_up(k), &g_q_t)).collect();
            let mean: f64 = pi.iter().zip(&g_pi).map(|(a, b)| a * b).sum();
            let w_inst = cfg.weights.instance * w_mode * quads;
            let mut g_z = vec![0.0; r];
            for (i, &k) in ids.iter().enumerate() {
                sink.up(k, pi[i], &g_q_t);
                let gn = pi[i] * (g_pi[i] - mean) + w_inst * (pi[i] - if k == *t { 1.0 } else { 0.0 });
                if gn != 0.0 {
                    sink.down(k, gn, &z);
                    axpy(gn, p.column(k), &mut g_z);
                }
            }
            axpy(1.0, &through_sig(&g_z, &z), &mut g_q_t_tilde);
            if let Some(e) = &scene {
                encode_back(e, &g_q_t_tilde, sink);
            }
        }
        Context::Direct => unreachable!(),
    }
    Ok(loss)
}

#[allow(clippy::too_many_arguments)]
fn direct_loss(
    p: &BtnParams,
    sets: &IndexSets,
    ex: &Example,
    cfg: &LossConfig,
    w_mode: f64,
    wb: f64,
    sink: &mut Sink,
    rng: &mut Option<ChaCha8Rng>,
) -> Result<f64> {
    let r = p.rank();
    let rate = cfg.dropout;
    let mut loss = 0.0;
    let es = encode(p, feat(&ex.bb_sub, "subject box features")?, rate, rng.as_mut())?;
    let zs = sig(&es.f);
    let mut g_zs = vec![0.0; r];
    loss += ce_head(p, &sets.entities, &zs, ex.s, w_mode * ex.quads() as f64, sink, &mut g_zs)?.0;
    for &(fi, c) in &ex.unary {
        let members = &sets.families[fi].1;
        loss += ce_head(p, members, &zs, c, w_mode, sink, &mut g_zs)?.0;
        loss += bool_head(p, members, &zs, &[c], wb, sink, &mut g_zs);
    }
    if sink.on() {
        encode_back(&es, &through_sig(&g_zs, &zs), sink);
    }
    for obj in &ex.objects {
        let eo = encode(p, feat(&obj.bb_obj, "object box features")?, rate, rng.as_mut())?;
        let ep = encode(p, feat(&obj.bb_pred, "predicate box features")?, rate, rng.as_mut())?;
        let zo = sig(&eo.f);
        let zp = sig(&ep.f);
        let mut g_zo = vec![0.0; r];
        let mut g_zp = vec![0.0; r];
        loss += ce_head(p, &sets.entities, &zo, obj.o, w_mode * obj.preds.len() as f64, sink, &mut g_zo)?.0;
        for &pr in &obj.preds {
            loss += ce_head(p, &sets.binary, &zp, pr, w_mode, sink, &mut g_zp)?.0;
        }
        loss += bool_head(p, &sets.binary, &zp, &obj.preds, wb, sink, &mut g_zp);
        if sink.on() {
            encode_back(&eo, &through_sig(&g_zo, &zo), sink);
            encode_back(&ep, &through_sig(&g_zp, &zp), sink);
        }
    }
    check(&[loss], "loss")?;
    Ok(loss)
}

/// Sum of example losses over the number of quadruples they stand for.
pub fn batch_loss(p: &BtnParams, sets: &IndexSets, batch: &[Example], cfg: &LossConfig) -> Result<f64> {
    let mut sink = Sink { g: None };
    let mut total = 0.0;
    for ex in batch {
        total += example_loss(p, sets, ex, cfg, &mut sink)?;
    }
    Ok(total / normalizer(batch))
}

fn feat<'a>(x: &'a Option<Features>, what: &'static str) -> Result<&'a [f64]> {
    x.as_deref().ok_or(BtnError::MissingInput(what))
}

fn normalizer(batch: &[Example]) -> f64 {
    batch.iter().map(|e| e.quads()).sum::<usize>().max(1) as f64
}

/// Examples per partial gradient; the reduction order over chunks is fixed.
pub const CHUNK: usize = 16;

/// Loss and exact gradient of [`batch_loss`].
pub fn gradients(p: &BtnParams, sets: &IndexSets, batch: &[Example], cfg: &LossConfig) -> Result<(f64, Tensors)> {
    use rayon::prelude::*;
    let parts: Vec<Result<(f64, Tensors)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Tensors::zeros_like(&p.t);
            let mut loss = 0.0;
            {
                let mut sink = Sink { g: Some(&mut g) };
                for ex in chunk {
                    loss += example_loss(p, sets, ex, cfg, &mut sink)?;
                }
            }
            Ok((loss, g))
        })
        .collect();
    let mut grad = Tensors::zeros_like(&p.t);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grad.add_assign(&g);
    }
    let n = normalizer(batch);
    grad.scale(1.0 / n);
    if let Some(b) = grad.first_non_finite() {
        return Err(BtnError::NonFinite(format!("gradient of {}", b.name())));
    }
    Ok((loss / n, grad))
}
