//! One sequential decoding pass: instance, subject with its unary labels,
//! object, predicate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::CategoricalDist;
use crate::error::{BtnError, Result};
use crate::linalg::{axpy, sig};
use crate::model::ops::{attend, context_readout, index_scores, softmax_beta, step_context, IndexSets};
use crate::model::BtnParams;
use crate::vocab::{Kind, VocabId, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// `u = 1`: a new scene is seen.
    Perception,
    /// `u = 0` with a given instance.
    Episodic,
    /// `u = 0` with `ā` in place of an instance embedding.
    Semantic,
    /// Heads read only the encoded boxes; no feedback, no context.
    Direct,
}

impl DecodeMode {
    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Perception => "perception",
            DecodeMode::Episodic => "episodic",
            DecodeMode::Semantic => "semantic",
            DecodeMode::Direct => "direct",
        }
    }
}

/// Which sampling commitments are replaced by attention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    /// Instance step in perception (default on: a new scene has no index).
    pub episodic: bool,
    /// Subject and object steps.
    pub semantic: bool,
    pub beta: f64,
}

impl Default for Attention {
    fn default() -> Self {
        Attention { episodic: true, semantic: false, beta: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeInput {
    pub mode: DecodeMode,
    /// Raw features; the model's encoder maps them to `f(·)`.
    pub scene: Option<Vec<f64>>,
    pub bb_sub: Option<Vec<f64>>,
    pub bb_obj: Option<Vec<f64>>,
    pub bb_pred: Option<Vec<f64>>,
    pub t_in: Option<VocabId>,
    /// Forced subject. In semantic mode this may also be a class or attribute,
    /// which asks for a generalized statement.
    pub s_in: Option<VocabId>,
    pub o_in: Option<VocabId>,
    /// Sampling inverse temperature; `f64::INFINITY` is winner-take-all.
    pub beta: f64,
    pub attention: Attention,
    /// Context inherited from a previous pass; zero when absent.
    pub h0: Option<Vec<f64>>,
    /// Stop after the subject and its unary labels.
    pub unary_only: bool,
    pub seed: u64,
}

impl DecodeInput {
    fn base(mode: DecodeMode) -> Self {
        DecodeInput {
            mode,
            scene: None,
            bb_sub: None,
            bb_obj: None,
            bb_pred: None,
            t_in: None,
            s_in: None,
            o_in: None,
            beta: f64::INFINITY,
            attention: Attention::default(),
            h0: None,
            unary_only: false,
            seed: 0,
        }
    }

    pub fn episodic(t: VocabId) -> Self {
        DecodeInput { t_in: Some(t), ..Self::base(DecodeMode::Episodic) }
    }

    pub fn semantic(s: Option<VocabId>) -> Self {
        DecodeInput { s_in: s, ..Self::base(DecodeMode::Semantic) }
    }

    /// Perception of a scene; object and predicate boxes may be absent for a
    /// unary-only pass.
    pub fn perception(scene: Vec<f64>, bb_sub: Vec<f64>, pair: Option<(Vec<f64>, Vec<f64>)>) -> Self {
        let unary_only = pair.is_none();
        let (bb_obj, bb_pred) = pair.map_or((None, None), |(o, p)| (Some(o), Some(p)));
        DecodeInput {
            scene: Some(scene),
            bb_sub: Some(bb_sub),
            bb_obj,
            bb_pred,
            unary_only,
            ..Self::base(DecodeMode::Perception)
        }
    }

    pub fn direct(bb_sub: Vec<f64>, pair: Option<(Vec<f64>, Vec<f64>)>) -> Self {
        DecodeInput { mode: DecodeMode::Direct, scene: None, ..Self::perception(vec![], bb_sub, pair) }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_subject(mut self, s: VocabId) -> Self {
        self.s_in = Some(s);
        self
    }

    pub fn with_object(mut self, o: VocabId) -> Self {
        self.o_in = Some(o);
        self
    }

    pub fn with_attention(mut self, attention: Attention) -> Self {
        self.attention = attention;
        self
    }

    pub fn unary_only(mut self) -> Self {
        self.unary_only = true;
        self
    }

    fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let has_features = self.scene.is_some()
            || self.bb_sub.is_some()
            || self.bb_obj.is_some()
            || self.bb_pred.is_some();
        match self.mode {
            DecodeMode::Perception | DecodeMode::Direct => {
                if self.mode == DecodeMode::Perception && self.scene.is_none() {
                    return Err(BtnError::MissingInput("scene features"));
                }
                if self.bb_sub.is_none() {
                    return Err(BtnError::MissingInput("subject box features"));
                }
                if !self.unary_only && self.bb_obj.is_none() {
                    return Err(BtnError::MissingInput("object box features"));
                }
                if !self.unary_only && self.bb_pred.is_none() {
                    return Err(BtnError::MissingInput("predicate box features"));
                }
            }
            DecodeMode::Episodic | DecodeMode::Semantic => {
                if has_features {
                    return Err(BtnError::InvalidInput(format!(
                        "{} decoding takes no features",
                        self.mode.name()
                    )));
                }
            }
        }
        if self.mode == DecodeMode::Episodic && self.t_in.is_none() {
            return Err(BtnError::MissingInput("instance (t)"));
        }
        if let Some(t) = self.t_in {
            vocab.check(t, &[Kind::Instance])?;
        }
        if let Some(s) = self.s_in {
            let allowed: &[Kind] = if self.mode == DecodeMode::Semantic {
                &[Kind::Entity, Kind::Class, Kind::Attribute]
            } else {
                &[Kind::Entity]
            };
            vocab.check(s, allowed)?;
        }
        if let Some(o) = self.o_in {
            vocab.check(o, &[Kind::Entity])?;
        }
        if !(self.beta >= 0.0) {
            return Err(BtnError::InvalidInput("beta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Everything a pass produced. The `*_dist` fields hold the index-layer
/// distributions at `β = 1`, used for ranking; the starred ids were drawn at
/// the pass's own `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeTrace {
    pub mode: DecodeMode,
    pub t_star: Option<VocabId>,
    pub s_star: Option<VocabId>,
    pub c_stars: Vec<(String, VocabId)>,
    pub o_star: Option<VocabId>,
    pub p_star: Option<VocabId>,
    pub t_dist: Option<CategoricalDist<VocabId>>,
    pub s_dist: Option<CategoricalDist<VocabId>>,
    pub c_dists: Vec<(String, CategoricalDist<VocabId>)>,
    pub o_dist: Option<CategoricalDist<VocabId>>,
    pub p_dist: Option<CategoricalDist<VocabId>>,
    pub q_t: Vec<f64>,
    pub q_s: Vec<f64>,
    pub q_o: Vec<f64>,
    pub q_p: Vec<f64>,
    /// Context after each step, starting with the initial one.
    pub h: Vec<Vec<f64>>,
    pub n_t: Vec<f64>,
    pub n_s: Vec<f64>,
    pub n_c: Vec<Vec<f64>>,
    pub n_o: Vec<f64>,
    pub n_p: Vec<f64>,
}

impl DecodeTrace {
    fn new(mode: DecodeMode) -> Self {
        DecodeTrace {
            mode,
            t_star: None,
            s_star: None,
            c_stars: vec![],
            o_star: None,
            p_star: None,
            t_dist: None,
            s_dist: None,
            c_dists: vec![],
            o_dist: None,
            p_dist: None,
            q_t: vec![],
            q_s: vec![],
            q_o: vec![],
            q_p: vec![],
            h: vec![],
            n_t: vec![],
            n_s: vec![],
            n_c: vec![],
            n_o: vec![],
            n_p: vec![],
        }
    }

    pub fn label(&self, family: &str) -> Option<VocabId> {
        self.c_stars.iter().find(|(f, _)| f == family).map(|&(_, c)| c)
    }

    pub fn label_dist(&self, family: &str) -> Option<&CategoricalDist<VocabId>> {
        self.c_dists.iter().find(|(f, _)| f == family).map(|(_, d)| d)
    }
}

fn draw(ids: &[VocabId], n: &[f64], beta: f64, rng: &mut ChaCha8Rng) -> Result<(VocabId, CategoricalDist<VocabId>)> {
    let ranked = softmax_beta(ids, n, 1.0)?;
    let pick = if beta == 1.0 {
        *ranked.sample(rng)
    } else {
        *softmax_beta(ids, n, beta)?.sample(rng)
    };
    Ok((pick, ranked))
}

/// Commits to an index: either the forced one, attention, or a draw.
#[allow(clippy::too_many_arguments)]
fn commit(
    params: &BtnParams,
    q_tilde: &[f64],
    ids: &[VocabId],
    forced: Option<VocabId>,
    attention: Option<f64>,
    beta: f64,
    rng: &mut ChaCha8Rng,
    scores: &mut Vec<f64>,
) -> Result<(Vec<f64>, Option<VocabId>, Option<CategoricalDist<VocabId>>)> {
    let mut q = q_tilde.to_vec();
    if let Some(k) = forced {
        axpy(1.0, params.column_up(k), &mut q);
        return Ok((q, Some(k), None));
    }
    if ids.is_empty() {
        return Err(BtnError::EmptyIndexSet("decode step"));
    }
    *scores = index_scores(params, ids, &sig(q_tilde));
    if let Some(att_beta) = attention {
        let ranked = softmax_beta(ids, scores, 1.0)?;
        let q = attend(q_tilde, params, ids, att_beta)?;
        return Ok((q, Some(*ranked.argmax()), Some(ranked)));
    }
    let (k, ranked) = draw(ids, scores, beta, rng)?;
    axpy(1.0, params.column_up(k), &mut q);
    Ok((q, Some(k), Some(ranked)))
}

fn unary_heads(
    params: &BtnParams,
    sets: &IndexSets,
    z: &[f64],
    beta: f64,
    rng: &mut ChaCha8Rng,
    trace: &mut DecodeTrace,
) -> Result<()> {
    for (name, members) in &sets.families {
        let n = index_scores(params, members, z);
        let (c, d) = draw(members, &n, beta, rng)?;
        trace.c_stars.push((name.clone(), c));
        trace.c_dists.push((name.clone(), d));
        trace.n_c.push(n);
    }
    Ok(())
}

pub fn decode(input: &DecodeInput, params: &BtnParams, vocab: &Vocabulary, sets: &IndexSets) -> Result<DecodeTrace> {
    input.validate(vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mut tr = DecodeTrace::new(input.mode);
    let r = params.rank();
    let enc = |x: &Option<Vec<f64>>| x.as_ref().map(|v| params.encode(v));

    if input.mode == DecodeMode::Direct {
        let f_s = enc(&input.bb_sub).expect("validated");
        let z = sig(&f_s);
        let (s, d) = direct_pick(params, &sets.entities, &z, input.s_in, input.beta, &mut rng, &mut tr.n_s)?;
        tr.s_star = s;
        tr.s_dist = d;
        unary_heads(params, sets, &z, input.beta, &mut rng, &mut tr)?;
        tr.q_s = f_s;
        if input.unary_only {
            return Ok(tr);
        }
        let f_o = enc(&input.bb_obj).expect("validated");
        let z = sig(&f_o);
        let (o, d) = direct_pick(params, &sets.entities, &z, input.o_in, input.beta, &mut rng, &mut tr.n_o)?;
        tr.o_star = o;
        tr.o_dist = d;
        tr.q_o = f_o;
        let f_p = enc(&input.bb_pred).expect("validated");
        let z = sig(&f_p);
        tr.n_p = index_scores(params, &sets.binary, &z);
        let (p, d) = draw(&sets.binary, &tr.n_p, input.beta, &mut rng)?;
        tr.p_star = Some(p);
        tr.p_dist = Some(d);
        tr.q_p = f_p;
        return Ok(tr);
    }

    let perceive = input.mode == DecodeMode::Perception;
    let zero = vec![0.0; r];
    let with_input = |f: Option<Vec<f64>>| f.unwrap_or_else(|| zero.clone());

    // Instance step.
    let q_t_tilde = with_input(enc(&input.scene));
    let q_t = match input.mode {
        DecodeMode::Semantic => {
            let mut q = q_t_tilde.clone();
            axpy(1.0, &params.t.a_bar, &mut q);
            q
        }
        _ => {
            let att = (perceive && input.attention.episodic).then_some(input.attention.beta);
            let (q, t, d) = commit(
                params,
                &q_t_tilde,
                &sets.instances,
                input.t_in,
                att,
                input.beta,
                &mut rng,
                &mut tr.n_t,
            )?;
            tr.t_star = t;
            tr.t_dist = d;
            q
        }
    };
    let h0 = input.h0.clone().unwrap_or_else(|| vec![0.0; params.hidden()]);
    let h1 = step_context(&h0, &q_t, params);
    tr.h.push(h0);
    tr.q_t = q_t;

    // Subject.
    let mut q_s_tilde = with_input(enc(&input.bb_sub));
    axpy(1.0, &context_readout(&h1, params), &mut q_s_tilde);
    let att = input.attention.semantic.then_some(input.attention.beta);
    let (q_s, s, d) =
        commit(params, &q_s_tilde, &sets.entities, input.s_in, att, input.beta, &mut rng, &mut tr.n_s)?;
    tr.s_star = s;
    tr.s_dist = d;
    unary_heads(params, sets, &sig(&q_s), input.beta, &mut rng, &mut tr)?;
    let h2 = step_context(&h1, &q_s, params);
    tr.h.push(h1);
    tr.q_s = q_s;
    if input.unary_only {
        tr.h.push(h2);
        return Ok(tr);
    }

    // Object.
    let mut q_o_tilde = with_input(enc(&input.bb_obj));
    axpy(1.0, &context_readout(&h2, params), &mut q_o_tilde);
    let (q_o, o, d) =
        commit(params, &q_o_tilde, &sets.entities, input.o_in, att, input.beta, &mut rng, &mut tr.n_o)?;
    tr.o_star = o;
    tr.o_dist = d;
    let h3 = step_context(&h2, &q_o, params);
    tr.h.push(h2);
    tr.q_o = q_o;

    // Predicate.
    let mut q_p = with_input(enc(&input.bb_pred));
    axpy(1.0, &context_readout(&h3, params), &mut q_p);
    tr.n_p = index_scores(params, &sets.binary, &sig(&q_p));
    let (p, d) = draw(&sets.binary, &tr.n_p, input.beta, &mut rng)?;
    tr.p_star = Some(p);
    tr.p_dist = Some(d);
    tr.h.push(h3);
    tr.q_p = q_p;
    Ok(tr)
}

#[allow(clippy::type_complexity)]
fn direct_pick(
    params: &BtnParams,
    ids: &[VocabId],
    z: &[f64],
    forced: Option<VocabId>,
    beta: f64,
    rng: &mut ChaCha8Rng,
    scores: &mut Vec<f64>,
) -> Result<(Option<VocabId>, Option<CategoricalDist<VocabId>>)> {
    if let Some(k) = forced {
        return Ok((Some(k), None));
    }
    *scores = index_scores(params, ids, z);
    let (k, d) = draw(ids, scores, beta, rng)?;
    Ok((Some(k), Some(d)))
}

/// Where a post-observation sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Semantic,
    Episodic,
}

/// Draws `n` samples, each from the semantic sampler with probability
/// `γ/(γ+N_t)` and from the episodic sampler otherwise.
pub fn post_observation_sample<T, R: Rng + ?Sized>(
    mut pre_sampler: impl FnMut(&mut R) -> Result<T>,
    mut obs_sampler: impl FnMut(&mut R) -> Result<T>,
    gamma: f64,
    n_t: u64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Source, T)>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(BtnError::InvalidInput("gamma must be finite and nonnegative".into()));
    }
    let total = gamma + n_t as f64;
    if total <= 0.0 {
        return Err(BtnError::ZeroWeights);
    }
    let p_pre = gamma / total;
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < p_pre {
                pre_sampler(rng).map(|x| (Source::Semantic, x))
            } else {
                obs_sampler(rng).map(|x| (Source::Episodic, x))
            }
        })
        .collect()
}
