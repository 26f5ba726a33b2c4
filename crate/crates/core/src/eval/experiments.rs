//! Named experiment scenarios over a trained model and its world.
//!
//! Perception is scored on two splits: `e` holds novel entities in scenes of
//! their own, `ex` shows known entities in a fresh view of a training scene.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::eval::metrics::{MetricReport, Tallies, ZeroShotSplit};
use crate::eval::recall::{episodic_recall, filtered_rank, semantic_recall};
use crate::model::{decode, Attention, BtnParams, DecodeInput, DecodeTrace, IndexSets};
use crate::pipeline::{train_world, training_examples, Modes};
use crate::store::TripleTensor;
use crate::train::examples::facts_at;
use crate::train::{consolidate, ssl_step, ConsolidateConfig, SslConfig, TrainConfig};
use crate::vocab::{VocabId, Vocabulary};
use crate::world::export::check_holdout;
use crate::world::gen::{VIEW_DUPLICATE, VIEW_TEST, VIEW_TRAIN};
use crate::world::ontology::{B_CLASS, RISK};
use crate::world::views::{binary_items, unary_items, BinaryItem, UnaryItem};
use crate::world::{unlabeled_scenes, Combo, GroundTruthWorld, Split};

pub const EXPERIMENTS: [&str; 9] = [
    "perception-unary",
    "perception-binary",
    "episodic-recall",
    "semantic-recall",
    "hidden-label-enrichment",
    "zero-shot-binary",
    "social-recall",
    "ssl-before-after",
    "consolidation-fidelity",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub hits_k: Vec<usize>,
    /// Epochs of the baseline trained without the hidden label; 0 means the
    /// main model's epoch count.
    pub baseline_epochs: usize,
    /// Instances duplicated by the consolidation scenario.
    pub consolidation_instances: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, hits_k: vec![1, 10], baseline_epochs: 0, consolidation_instances: 5 }
    }
}

/// Everything the scenarios read besides the model. `train` and `modes` are
/// those the model was trained with; scenarios that train reuse them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub eval: EvalConfig,
    pub train: TrainConfig,
    pub modes: Modes,
    pub ssl: SslConfig,
    pub consolidation: ConsolidateConfig,
}

pub struct EvalContext<'a> {
    pub world: &'a GroundTruthWorld,
    pub zero_shot: &'a ZeroShotSplit,
    pub params: &'a BtnParams,
    pub vocab: &'a Vocabulary,
    pub config: &'a ExperimentConfig,
}

impl EvalContext<'_> {
    /// Training store rebuilt over the model's own vocabulary.
    fn store(&self) -> Result<TripleTensor> {
        self.world.training_store_over(&self.zero_shot.held_out_set(), self.vocab.clone())
    }

    /// Hash of the configuration, vocabulary and parameter values.
    pub fn fingerprint(&self) -> Result<String> {
        let mut bytes = serde_json::to_vec(self.config).map_err(|e| BtnError::Format(e.to_string()))?;
        bytes.extend(self.vocab.fingerprint().as_bytes());
        for (_, block) in self.params.t.blocks() {
            for x in block {
                bytes.extend(x.to_le_bytes());
            }
        }
        Ok(crate::io::sha256_bytes(&bytes))
    }
}

/// Expands `all` and checks every name.
pub fn resolve_names(names: &[String]) -> Result<Vec<String>> {
    let mut out = vec![];
    for n in names {
        if n == "all" {
            out.extend(EXPERIMENTS.iter().map(|s| s.to_string()));
        } else if EXPERIMENTS.contains(&n.as_str()) {
            out.push(n.clone());
        } else {
            return Err(BtnError::UnknownExperiment { name: n.clone(), valid: EXPERIMENTS.join(", ") });
        }
    }
    let mut seen = BTreeSet::new();
    out.retain(|n| seen.insert(n.clone()));
    Ok(out)
}

pub fn run_experiments(names: &[String], ctx: &EvalContext) -> Result<Vec<MetricReport>> {
    resolve_names(names)?.iter().map(|n| run_experiment(n, ctx)).collect()
}

pub fn run_experiment(name: &str, ctx: &EvalContext) -> Result<MetricReport> {
    let start = std::time::Instant::now();
    let mut r = MetricReport::new(name, &ctx.fingerprint()?);
    match name {
        "perception-unary" => perception_unary(ctx, &mut r)?,
        "perception-binary" => perception_binary(ctx, &mut r)?,
        "episodic-recall" => episodic(ctx, &mut r)?,
        "semantic-recall" => semantic(ctx, &mut r)?,
        "hidden-label-enrichment" => hidden_label(ctx, &mut r)?,
        "zero-shot-binary" => zero_shot(ctx, &mut r)?,
        "social-recall" => social(ctx, &mut r)?,
        "ssl-before-after" => ssl_before_after(ctx, &mut r)?,
        "consolidation-fidelity" => consolidation(ctx, &mut r)?,
        _ => {
            return Err(BtnError::UnknownExperiment { name: name.into(), valid: EXPERIMENTS.join(", ") });
        }
    }
    r.validate()?;
    r.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Perception decoding variants. `Samp` commits by winner-take-all draws,
/// `Sa` replaces the subject and object commitments by semantic attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Direct,
    Samp,
    Sa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Direct, Variant::Samp, Variant::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Direct => "direct",
            Variant::Samp => "samp",
            Variant::Sa => "sa",
        }
    }

    pub fn input(self, scene: &[f64], sub: &[f64], pair: Option<(&[f64], &[f64])>) -> DecodeInput {
        let pair = pair.map(|(o, p)| (o.to_vec(), p.to_vec()));
        match self {
            Variant::Direct => DecodeInput::direct(sub.to_vec(), pair),
            Variant::Samp => DecodeInput::perception(scene.to_vec(), sub.to_vec(), pair),
            Variant::Sa => DecodeInput::perception(scene.to_vec(), sub.to_vec(), pair)
                .with_attention(Attention { episodic: true, semantic: true, beta: 1.0 }),
        }
    }
}

const SPLITS: [(&str, Split, u32); 2] = [("e", Split::Test, VIEW_TRAIN), ("ex", Split::Train, VIEW_TEST)];

fn visible_families(world: &GroundTruthWorld) -> Vec<String> {
    world.ontology.families.iter().filter(|f| f.visible).map(|f| f.name.clone()).collect()
}

fn truth_label(world: &GroundTruthWorld, vocab: &Vocabulary, entity: usize, family: &str) -> Option<VocabId> {
    vocab.get(world.label(entity, family))
}

fn merge_all(parts: Vec<Result<Tallies>>) -> Result<Tallies> {
    let mut out = Tallies::default();
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}

/// Unary label accuracy of one variant over `items`: `<family>` for every
/// family in `families` and `entity` for the committed subject.
fn unary_tallies(
    items: &[UnaryItem],
    world: &GroundTruthWorld,
    params: &BtnParams,
    vocab: &Vocabulary,
    variant: Variant,
    families: &[String],
) -> Result<Tallies> {
    let sets = IndexSets::from_vocab(vocab);
    let parts = items
        .par_iter()
        .map(|it| {
            let mut t = Tallies::default();
            let tr = decode(&variant.input(&it.scene_features, &it.features, None), params, vocab, &sets)?;
            for f in families {
                let truth = truth_label(world, vocab, it.entity, f);
                t.add(f.as_str(), truth.is_some() && tr.label(f) == truth);
            }
            t.add("entity", tr.s_star.is_some() && tr.s_star == world.entity_id(vocab, it.entity));
            Ok(t)
        })
        .collect();
    merge_all(parts)
}

fn push_unary(r: &mut MetricReport, prefix: &str, t: &Tallies, families: &[String], with_entity: bool) {
    let mut sum = 0.0;
    for f in families {
        let v = t.get(f);
        sum += v.value();
        r.push(format!("{prefix}.{f}"), v.value(), v.count);
    }
    let n = t.get(&families[0]).count;
    r.push(format!("{prefix}.average"), sum / families.len() as f64, n);
    if with_entity {
        let e = t.get("entity");
        r.push(format!("{prefix}.entity"), e.value(), e.count);
    }
}

fn perception_unary(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let fams = visible_families(ctx.world);
    for (split_name, split, view) in SPLITS {
        let items = unary_items(ctx.world, split, view);
        if items.is_empty() {
            r.notes.push(format!("split {split_name} has no items"));
            continue;
        }
        for v in Variant::ALL {
            let t = unary_tallies(&items, ctx.world, ctx.params, ctx.vocab, v, &fams)?;
            push_unary(r, &format!("{split_name}.{}", v.name()), &t, &fams, split == Split::Train);
        }
    }
    Ok(())
}

/// Predicate ranks for binary items under one variant. Ranks are filtered
/// against the other predicates between the same pair in the same scene.
fn binary_tallies(
    items: &[BinaryItem],
    world: &GroundTruthWorld,
    params: &BtnParams,
    vocab: &Vocabulary,
    variant: Variant,
    ks: &[usize],
) -> Result<(Tallies, usize)> {
    let sets = IndexSets::from_vocab(vocab);
    let parts: Vec<Result<(Tallies, usize)>> = items
        .par_iter()
        .map(|it| {
            let mut t = Tallies::default();
            let st = &it.statement;
            let input = variant.input(&it.scene_features, &it.sub, Some((&it.obj, &it.pred)));
            let tr = decode(&input, params, vocab, &sets)?;
            let truth = vocab.id(&st.p)?;
            let others: Vec<VocabId> = world.scenes[it.scene]
                .binary
                .iter()
                .filter(|x| x.s == st.s && x.o == st.o)
                .filter_map(|x| vocab.get(&x.p))
                .collect();
            let (ranked, support) = predicate_ranking(&tr);
            let rank = filtered_rank(&ranked, truth, &others);
            for &k in ks {
                t.add(format!("hits@{k}"), rank <= k);
            }
            Ok((t, support))
        })
        .collect();
    let mut out = Tallies::default();
    let mut support = 0;
    for p in parts {
        let (t, s) = p?;
        out.merge(&t);
        support = support.max(s);
    }
    Ok((out, support))
}

/// Predicates ranked by the soft predicate distribution, which is kept even
/// when the commitment is winner-take-all.
fn predicate_ranking(tr: &DecodeTrace) -> (Vec<VocabId>, usize) {
    tr.p_dist.as_ref().map_or((vec![], 0), |d| (d.ranked(), d.len()))
}

fn perception_binary(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let held = ctx.zero_shot.held_out_set();
    for (split_name, split, view) in SPLITS {
        let items = binary_items(ctx.world, split, view, |st| !held.contains(&ctx.world.combo(st)));
        if items.is_empty() {
            r.notes.push(format!("split {split_name} has no binary statements"));
            continue;
        }
        for v in Variant::ALL {
            let (t, _) = binary_tallies(&items, ctx.world, ctx.params, ctx.vocab, v, &ctx.config.eval.hits_k)?;
            r.push_tallies(&format!("{split_name}.{}.predicate", v.name()), &t);
        }
    }
    Ok(())
}

/// Exhaustive leakage check: no held-out combo in the store or in any
/// perception target the model was trained on.
fn check_leakage(ctx: &EvalContext, store: &TripleTensor) -> Result<usize> {
    check_holdout(ctx.world, store, ctx.zero_shot)?;
    let held = ctx.zero_shot.held_out_set();
    let examples = training_examples(ctx.world, store, ctx.zero_shot, &ctx.config.modes, &BTreeSet::new())?;
    let mut checked = 0;
    for ex in examples.iter().filter(|e| e.context.uses_features()) {
        for ot in &ex.objects {
            for &p in &ot.preds {
                let (Some(s), Some(o)) = (ctx.world.entity_index(ctx.vocab.name(ex.s)), ctx.world.entity_index(ctx.vocab.name(ot.o)))
                else {
                    continue;
                };
                let c = Combo { s_class: ctx.world.class_of(s).into(), p: ctx.vocab.name(p).into(), o_class: ctx.world.class_of(o).into() };
                if held.contains(&c) {
                    return Err(BtnError::Format(format!("held-out combo {c:?} reached a training target")));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn zero_shot(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let store = ctx.store()?;
    let checked = check_leakage(ctx, &store)?;
    r.push("leakage.checked_count", checked as f64, checked.max(1));
    r.zero_shot = Some(ctx.zero_shot.clone());
    let held = ctx.zero_shot.held_out_set();
    for (split_name, split, view) in SPLITS {
        let items = binary_items(ctx.world, split, view, |st| held.contains(&ctx.world.combo(st)));
        if items.is_empty() {
            r.notes.push(format!("split {split_name} has no held-out statements"));
            continue;
        }
        for v in Variant::ALL {
            let (t, support) = binary_tallies(&items, ctx.world, ctx.params, ctx.vocab, v, &ctx.config.eval.hits_k)?;
            r.push_tallies(&format!("{split_name}.{}.predicate", v.name()), &t);
            if v == Variant::Samp && support > 0 {
                r.push(format!("{split_name}.chance.hits@1"), 1.0 / support as f64, items.len());
            }
        }
    }
    Ok(())
}

fn episodic(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let store = ctx.store()?;
    let sets = IndexSets::from_vocab(ctx.vocab);
    let t = episodic_recall(ctx.params, ctx.vocab, &sets, &store, &store.populated_instances(), &ctx.config.eval.hits_k)?;
    r.push_tallies("", &t);
    Ok(())
}

fn semantic(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let store = ctx.store()?;
    let sets = IndexSets::from_vocab(ctx.vocab);
    let t = semantic_recall(ctx.params, ctx.vocab, &sets, &store, &ctx.config.eval.hits_k)?;
    r.push_tallies("", &t);

    // Generalized statements P(c2 | c1) for every basic class c1, against
    // the store with its closed-world negatives made explicit.
    let mut store = store;
    store.lcwa_expand_all()?;
    let Some(b) = ctx.vocab.family_index(B_CLASS) else {
        return Ok(());
    };
    let basic = ctx.vocab.families()[b].members.clone();
    let others: Vec<(String, Vec<VocabId>)> = ctx
        .vocab
        .families()
        .iter()
        .filter(|f| f.name != B_CLASS)
        .map(|f| (f.name.clone(), f.members.clone()))
        .collect();
    let rows: Vec<Result<Vec<(String, f64, f64)>>> = basic
        .par_iter()
        .map(|&c1| {
            let tr = decode(&DecodeInput::semantic(Some(c1)).unary_only(), ctx.params, ctx.vocab, &sets)?;
            let mut out = vec![];
            for (fam, members) in &others {
                let Some(d) = tr.label_dist(fam) else { continue };
                for &c2 in members {
                    if let Some(p) = store.generalized_statement(c1, c2).known() {
                        let name = format!("{}|{}", ctx.vocab.name(c2), ctx.vocab.name(c1));
                        out.push((name, d.prob(&c2), p));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut errs = vec![];
    for row in rows {
        for (name, model, oracle) in row? {
            errs.push((model - oracle).abs());
            if name == "Mammal|Dog" {
                r.push("generalized.Mammal|Dog.model", model, 1);
                r.push("generalized.Mammal|Dog.oracle", oracle, 1);
            }
        }
    }
    if !errs.is_empty() {
        let max = errs.iter().copied().fold(0.0, f64::max);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        r.push("generalized.max_abs_error", max, errs.len());
        r.push("generalized.mean_abs_error", mean, errs.len());
    }
    Ok(())
}

fn hidden_label(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    if ctx.vocab.family_index(RISK).is_none() {
        r.notes.push("ontology has no hidden family".into());
        return Ok(());
    }
    let mut tc = ctx.config.train.clone();
    tc.excluded_families.insert(RISK.into());
    if ctx.config.eval.baseline_epochs > 0 {
        tc.epochs = ctx.config.eval.baseline_epochs;
    }
    let baseline = train_world(ctx.world, ctx.zero_shot, &ctx.params.config, &tc, &ctx.config.modes, |_| {})?;
    let risk = [RISK.to_string()];
    let sets = IndexSets::from_vocab(ctx.vocab);
    for (split_name, split, view) in SPLITS {
        let items = unary_items(ctx.world, split, view);
        if items.is_empty() {
            continue;
        }
        let base = unary_tallies(&items, ctx.world, &baseline.params, &baseline.vocab, Variant::Sa, &risk)?;
        let enriched = unary_tallies(&items, ctx.world, ctx.params, ctx.vocab, Variant::Sa, &risk)?;
        // Perceive the entity, then activate its semantic memory.
        let sm = merge_all(
            items
                .par_iter()
                .map(|it| {
                    let mut t = Tallies::default();
                    let p = decode(&Variant::Samp.input(&it.scene_features, &it.features, None), ctx.params, ctx.vocab, &sets)?;
                    let m = decode(&DecodeInput::semantic(p.s_star).unary_only(), ctx.params, ctx.vocab, &sets)?;
                    let truth = truth_label(ctx.world, ctx.vocab, it.entity, RISK);
                    t.add(RISK, truth.is_some() && m.label(RISK) == truth);
                    Ok(t)
                })
                .collect(),
        )?;
        let living = items
            .iter()
            .filter(|it| ctx.world.ontology.families.iter().any(|f| f.name == RISK) && ctx.world.label(it.entity, RISK) == "Dangerous")
            .count();
        r.push(format!("{split_name}.baseline"), base.get(RISK).value(), base.get(RISK).count);
        r.push(format!("{split_name}.p_enriched"), enriched.get(RISK).value(), enriched.get(RISK).count);
        r.push(format!("{split_name}.sm"), sm.get(RISK).value(), sm.get(RISK).count);
        r.push(format!("{split_name}.dangerous_fraction"), living as f64 / items.len() as f64, items.len());
    }
    let n = ctx.world.ontology.families.iter().find(|f| f.name == RISK).map_or(2, |f| f.members.len());
    r.push("chance", 1.0 / n as f64, 1);
    Ok(())
}

fn social(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let store = ctx.store()?;
    let ids: Vec<VocabId> = ctx
        .world
        .social
        .iter()
        .filter(|a| a.split == Split::Train && !a.binary.is_empty())
        .filter_map(|a| ctx.vocab.get(&a.name))
        .collect();
    if ids.is_empty() {
        r.notes.push("world has no social network".into());
        return Ok(());
    }
    let sets = IndexSets::from_vocab(ctx.vocab);
    let t = episodic_recall(ctx.params, ctx.vocab, &sets, &store, &ids, &ctx.config.eval.hits_k)?;
    r.push_tallies("episodic", &t);
    let mut sub = TripleTensor::new(ctx.vocab.clone());
    for &t in &ids {
        for q in store.positives_at(t).collect::<Vec<_>>() {
            sub.add_observation(q.s, q.p, q.o, q.t, true)?;
        }
    }
    let t = semantic_recall(ctx.params, ctx.vocab, &sets, &sub, &ctx.config.eval.hits_k)?;
    r.push_tallies("semantic", &t);
    Ok(())
}

/// Episodic unary plus binary Hits@1 recall over `instances`.
fn supervised_recall(params: &BtnParams, vocab: &Vocabulary, store: &TripleTensor, instances: &[VocabId]) -> Result<(f64, usize)> {
    let sets = IndexSets::from_vocab(vocab);
    let t = episodic_recall(params, vocab, &sets, store, instances, &[1])?;
    let mut all = t.get("unary");
    all.merge(t.get("binary.hits@1"));
    Ok((all.value(), all.count))
}

fn ssl_before_after(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let (scenes, _) = unlabeled_scenes(ctx.world, VIEW_TRAIN);
    if scenes.is_empty() {
        r.notes.push("world has no unlabeled scenes".into());
        return Ok(());
    }
    let store = ctx.store()?;
    let scene_instances: Vec<VocabId> = ctx
        .world
        .scenes_in(Split::Train)
        .flat_map(|(i, _)| ctx.world.training_views().into_iter().filter_map(move |v| ctx.world.view_instance(i, v)))
        .filter_map(|n| ctx.vocab.get(&n))
        .collect();
    let fams = visible_families(ctx.world);
    // Fresh entities in a view SSL did not see.
    let fresh = unary_items(ctx.world, Split::Unlabeled, VIEW_DUPLICATE);

    let (sup_before, n) = supervised_recall(ctx.params, ctx.vocab, &store, &scene_instances)?;
    let fresh_before = unary_tallies(&fresh, ctx.world, ctx.params, ctx.vocab, Variant::Sa, &fams)?;

    let mut params = ctx.params.clone();
    let mut vocab = ctx.vocab.clone();
    let ssl_cfg = SslConfig { seed: ctx.config.eval.seed ^ ctx.config.ssl.seed, ..ctx.config.ssl.clone() };
    let out = ssl_step(&scenes, &mut params, &mut vocab, &ssl_cfg, &ctx.config.train.loss)?;
    params.check_finite()?;

    let (sup_after, _) = supervised_recall(&params, &vocab, &store, &scene_instances)?;
    let fresh_after = unary_tallies(&fresh, ctx.world, &params, &vocab, Variant::Sa, &fams)?;
    // Pooled over families, so equal hit counts give an exactly zero delta.
    let avg = |t: &Tallies| {
        let mut all = crate::eval::Tally::default();
        fams.iter().for_each(|f| all.merge(t.get(f)));
        all.value()
    };
    let nf = fresh_before.get(&fams[0]).count.max(1);

    r.push("supervised.before", sup_before, n);
    r.push("supervised.after", sup_after, n);
    r.push("supervised.delta", sup_after - sup_before, n);
    r.push("fresh.before", avg(&fresh_before), nf);
    r.push("fresh.after", avg(&fresh_after), nf);
    r.push("fresh.delta", avg(&fresh_after) - avg(&fresh_before), nf);
    r.push("pseudo_labels_count", out.pseudo.len() as f64, scenes.len());
    r.push("new_instances_count", out.new_instances.len() as f64, scenes.len());
    r.push("new_entities_count", out.new_entities.len() as f64, scenes.len());
    r.push("novelty_triggers_count", out.novelty_triggers as f64, scenes.len());
    Ok(())
}

/// Winner-take-all outputs of every episodic query about the facts at `t`,
/// decoded through `via`.
fn wta_outputs(
    params: &BtnParams,
    vocab: &Vocabulary,
    store: &TripleTensor,
    t: VocabId,
    via: VocabId,
) -> Result<Vec<Option<VocabId>>> {
    let sets = IndexSets::from_vocab(vocab);
    let mut out = vec![];
    let top = decode(&DecodeInput::episodic(via), params, vocab, &sets)?;
    out.push(top.s_star);
    for (s, f) in facts_at(store, t, &BTreeSet::new()) {
        let tr = decode(&DecodeInput::episodic(via).with_subject(s), params, vocab, &sets)?;
        out.extend(tr.c_stars.iter().map(|&(_, c)| Some(c)));
        out.push(tr.o_star);
        for &o in f.objects.keys() {
            let tr = decode(&DecodeInput::episodic(via).with_subject(s).with_object(o), params, vocab, &sets)?;
            out.push(tr.p_star);
        }
    }
    Ok(out)
}

fn consolidation(ctx: &EvalContext, r: &mut MetricReport) -> Result<()> {
    let store = ctx.store()?;
    let instances: Vec<VocabId> =
        store.populated_instances().into_iter().take(ctx.config.eval.consolidation_instances).collect();
    if instances.is_empty() {
        return Err(BtnError::EmptyStore);
    }
    let results: Vec<Result<(usize, usize, bool)>> = instances
        .par_iter()
        .map(|&t| {
            let mut params = ctx.params.clone();
            let mut vocab = ctx.vocab.clone();
            let dup = consolidate(t, &mut params, &mut vocab, &ctx.config.consolidation)?;
            let untouched = preexisting_identical(ctx.params, &params);
            let a = wta_outputs(&params, &vocab, &store, t, t)?;
            let b = wta_outputs(&params, &vocab, &store, t, dup)?;
            let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
            Ok((same, a.len(), untouched))
        })
        .collect();
    let (mut same, mut total, mut identical) = (0, 0, 0);
    for x in results {
        let (s, n, u) = x?;
        same += s;
        total += n;
        identical += u as usize;
    }
    r.push("agreement", same as f64 / total.max(1) as f64, total.max(1));
    r.push("bit_identical", identical as f64 / instances.len() as f64, instances.len());
    Ok(())
}

/// True iff every parameter of `before` is bit-identical in `after`, which
/// may have extra embedding rows.
pub fn preexisting_identical(before: &BtnParams, after: &BtnParams) -> bool {
    let bits = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    let rows = before.num_columns();
    let r = before.rank();
    let mut ok = bits(&before.t.embed.data, &after.t.embed.data[..rows * r]);
    if let (Some(a), Some(b)) = (&before.t.embed_up, &after.t.embed_up) {
        ok &= bits(&a.data, &b.data[..rows * r]);
    }
    let fixed = |p: &BtnParams| [p.t.w.data.clone(), p.t.b.data.clone(), p.t.v.data.clone(), p.t.a_bar.clone(), p.t.enc_w.data.clone(), p.t.enc_b.clone()];
    ok && fixed(before).iter().zip(fixed(after).iter()).all(|(a, b)| bits(a, b))
}

/// Metric values by name, for quick lookups across reports.
pub fn metric_map(reports: &[MetricReport]) -> BTreeMap<String, f64> {
    reports
        .iter()
        .flat_map(|r| r.metrics.iter().map(move |m| (format!("{}/{}", r.experiment, m.name), m.value)))
        .collect()
}
