//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Runs under `cargo test` and exits 0 even when a criterion fails, so that
//! the rest of the test suite stays usable; set `BTN_ACCEPTANCE_STRICT=1` to
//! turn any failure into a nonzero exit.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use btn::cli::{run, without_timestamps, Cli};
use btn::eval::{run_experiment, zero_shot_split, EvalContext, ExperimentConfig, MetricReport, ZeroShotSplit};
use btn::model::{post_observation_sample, ModelConfig, Source};
use btn::pipeline::{train_world, Modes, Trained};
use btn::store::dirichlet_fuse;
use btn::train::{AdamConfig, TrainConfig};
use btn::world::{gen_world, GroundTruthWorld, WorldConfig};
use btn::CategoricalDist;
use clap::Parser;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

struct Suite {
    results: Vec<bool>,
}

impl Suite {
    /// Runs one criterion; exceeding `limit` is a failure too.
    fn criterion(&mut self, id: &str, title: &str, limit: Duration, f: impl FnOnce() -> Check) {
        self.timed(id, title, limit, Duration::ZERO, f)
    }

    /// `earlier` is work done before `f`, such as training a shared model.
    fn timed(&mut self, id: &str, title: &str, limit: Duration, earlier: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = f();
        let took = earlier + start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && took <= limit, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {title}: {detail} ({:.1}s, limit {}s)", took.as_secs_f64(), limit.as_secs());
        self.results.push(pass);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn c1_counting_models() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let trials = 500;
    for _ in 0..trials {
        let records = random_records(&mut rng, 50);
        worst = worst.max(counting_model_error(&records));
    }
    Ok((worst <= 1e-12, format!("{trials} random stores, max deviation {worst:.1e}")))
}

fn c2_fusion() -> Check {
    let pre = CategoricalDist::from_weights(vec![0, 1, 2, 3], vec![0.4, 0.3, 0.2, 0.1]).map_err(|e| e.to_string())?;
    let obs = CategoricalDist::from_weights(vec![1, 2, 4], vec![0.5, 0.25, 0.25]).map_err(|e| e.to_string())?;
    let fuse = |g, n| dirichlet_fuse(&pre, &obs, g, n).map_err(|e| e.to_string());
    let mut ok = true;
    let mut notes = vec![];
    let same = |a: &CategoricalDist<u32>, b: &CategoricalDist<u32>| {
        a.support().iter().chain(b.support()).all(|k| a.prob(k) == b.prob(k))
    };
    let episodic = same(&fuse(0.0, 7)?, &obs);
    let semantic = same(&fuse(5.0, 0)?, &pre);
    ok &= episodic && semantic;
    notes.push(format!("gamma=0 {}, N=0 {}", episodic, semantic));

    // Updating the pre-observation model with a new instance: the fused
    // model at gamma = N_total equals the pre-observation model of the
    // store that includes the instance.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut updates = 0;
    while updates < 200 {
        let records = random_records(&mut rng, 50);
        let t_new = records[0].t.clone();
        let prior: Vec<Record> = records.iter().filter(|r| r.t != t_new).cloned().collect();
        if !prior.iter().any(|r| r.y) {
            continue;
        }
        let all = store_from(&records);
        let before = store_from(&prior);
        let v = all.vocab().clone();
        let t = v.id(&t_new).unwrap();
        let f = dirichlet_fuse(
            &before.empirical_pre_observation_dist().unwrap(),
            &all.empirical_observation_dist(t).unwrap(),
            before.n_total() as f64,
            all.n_t(t) as u64,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(max_gap(&by_names(&v, &f), &by_names(&v, &all.empirical_pre_observation_dist().unwrap())));
        updates += 1;
    }
    ok &= worst <= 1e-12;
    notes.push(format!("pre-observation update max deviation {worst:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let mut worst_sigma = 0.0f64;
    for (gamma, n_t) in [(0.5, 4u64), (3.0, 3), (10.0, 2), (1.0, 9), (0.0, 5)] {
        let draws = post_observation_sample(|_: &mut ChaCha8Rng| Ok(()), |_| Ok(()), gamma, n_t, n, &mut rng)
            .map_err(|e| e.to_string())?;
        let semantic = draws.iter().filter(|(s, _)| *s == Source::Semantic).count() as f64 / n as f64;
        let p = gamma / (gamma + n_t as f64);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let z = if sd == 0.0 { if semantic == p { 0.0 } else { f64::INFINITY } } else { (semantic - p).abs() / sd };
        worst_sigma = worst_sigma.max(z);
    }
    ok &= worst_sigma <= 3.0;
    notes.push(format!("source frequencies within {worst_sigma:.2} sigma"));
    Ok((ok, notes.join("; ")))
}

fn c3_gradients() -> Check {
    let kinds: [&[usize]; 5] = [&[0], &[1], &[2], &[3], &[0, 1, 2, 3]];
    let mut worst = 0.0f64;
    let mut configs = 0;
    for (i, k) in kinds.iter().enumerate() {
        for seed in 0..5 {
            let case = grad_case(1000 * i as u64 + seed, k);
            worst = worst.max(finite_difference_error(&case).0);
            configs += 1;
        }
    }
    Ok((worst < 1e-4, format!("{configs} configurations at r=8 h=4, max relative error {worst:.2e}")))
}

fn c4_episodic_recall() -> Check {
    let world = gen_world(&WorldConfig::tiny(20, 10, 0)).map_err(|e| e.to_string())?;
    let zs = ZeroShotSplit { train: vec![], held_out: vec![] };
    let mc = ModelConfig { rank: 32, hidden: 32, ..Default::default() };
    let tc = TrainConfig { adam: AdamConfig { learning_rate: 1e-2, ..Default::default() }, epochs: 1000, batch_size: 16, ..Default::default() };
    let modes = Modes { episodic: true, semantic: true, perception: false, direct: false };
    let tr = train_world(&world, &zs, &mc, &tc, &modes, |_| {}).map_err(|e| e.to_string())?;
    let sets = btn::model::IndexSets::from_vocab(&tr.vocab);
    let t = btn::eval::recall::episodic_recall(&tr.params, &tr.vocab, &sets, &tr.store, tr.vocab.instances(), &[1])
        .map_err(|e| e.to_string())?;
    let (u, b) = (t.get("unary"), t.get("binary.hits@1"));
    Ok((
        u.value() >= 0.99 && b.value() >= 0.90,
        format!("unary top-1 {:.4} ({} labels), binary Hits@1 {:.4} ({} statements)", u.value(), u.count, b.value(), b.count),
    ))
}

/// The model most criteria read: the default 300-entity world.
struct Main {
    world: GroundTruthWorld,
    zs: ZeroShotSplit,
    trained: Trained,
    config: ExperimentConfig,
    train_time: Duration,
    reports: BTreeMap<String, MetricReport>,
}

fn main_train_config() -> TrainConfig {
    TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 100, batch_size: 32, ..Default::default() }
}

fn train_main(world_cfg: WorldConfig, rank: usize) -> Result<Main, String> {
    let start = Instant::now();
    let world = gen_world(&world_cfg).map_err(|e| e.to_string())?;
    let zs = zero_shot_split(&world).map_err(|e| e.to_string())?;
    let tc = main_train_config();
    let mc = ModelConfig { rank, ..Default::default() };
    let trained = train_world(&world, &zs, &mc, &tc, &Modes::default(), |_| {}).map_err(|e| e.to_string())?;
    let config = ExperimentConfig { train: tc, ..Default::default() };
    Ok(Main { world, zs, trained, config, train_time: start.elapsed(), reports: BTreeMap::new() })
}

impl Main {
    fn report(&mut self, name: &str) -> Result<&MetricReport, String> {
        if !self.reports.contains_key(name) {
            let ctx = EvalContext {
                world: &self.world,
                zero_shot: &self.zs,
                params: &self.trained.params,
                vocab: &self.trained.vocab,
                config: &self.config,
            };
            let r = run_experiment(name, &ctx).map_err(|e| e.to_string())?;
            self.reports.insert(name.into(), r);
        }
        Ok(&self.reports[name])
    }

    /// Training time plus the scenario's own time.
    fn elapsed(&self, name: &str) -> Duration {
        self.train_time + Duration::from_secs_f64(self.reports.get(name).map_or(0.0, |r| r.wall_clock_s))
    }
}

fn metric(r: &MetricReport, name: &str) -> Result<f64, String> {
    r.get(name).ok_or_else(|| format!("{} lacks {name}", r.experiment))
}

fn c5_semantic(m: &mut Main) -> Check {
    let r = m.report("semantic-recall")?;
    let unary = metric(r, "unary")?;
    let model = metric(r, "generalized.Mammal|Dog.model")?;
    let oracle = metric(r, "generalized.Mammal|Dog.oracle")?;
    Ok((
        unary >= 0.99 && (model - oracle).abs() <= 0.02,
        format!("unary top-1 {unary:.4}; P(Mammal|Dog) {model:.4} vs store {oracle:.4}"),
    ))
}

fn c6_hidden_label(m: &mut Main) -> Check {
    let r = m.report("hidden-label-enrichment")?;
    let chance = metric(r, "chance")?;
    let mut ok = true;
    let mut notes = vec![];
    for split in ["e", "ex"] {
        let base = metric(r, &format!("{split}.baseline"))?;
        let enriched = metric(r, &format!("{split}.p_enriched"))?;
        ok &= (base - chance).abs() <= 0.10 && enriched >= 0.95;
        notes.push(format!("{split}: without label {base:.4}, enriched {enriched:.4}"));
    }
    notes.push(format!("chance {chance:.2}"));
    Ok((ok, notes.join("; ")))
}

fn c7_known_entities(m: &mut Main) -> Check {
    let r = m.report("perception-unary")?;
    let samp = metric(r, "ex.samp.average")?;
    let direct_ex = metric(r, "ex.direct.average")?;
    let sa = metric(r, "e.sa.average")?;
    let direct_e = metric(r, "e.direct.average")?;
    let gap = samp - direct_ex;
    Ok((
        gap >= 0.05 && sa >= direct_e,
        format!("EX: Samp {samp:.4} vs Direct {direct_ex:.4} (gap {gap:+.4}); E: SA {sa:.4} vs Direct {direct_e:.4}"),
    ))
}

fn c8_zero_shot(m: &mut Main) -> Check {
    let r = m.report("zero-shot-binary")?;
    let mut ok = true;
    let mut notes = vec![];
    for split in ["e", "ex"] {
        let hits = metric(r, &format!("{split}.samp.predicate.hits@1"))?;
        let chance = metric(r, &format!("{split}.chance.hits@1"))?;
        let n = r.metrics.iter().find(|x| x.name == format!("{split}.samp.predicate.hits@1")).map_or(0, |x| x.count);
        ok &= hits >= 3.0 * chance;
        notes.push(format!("{split}: Hits@1 {hits:.4} over {n} held-out statements, chance {chance:.4}"));
    }
    Ok((ok, notes.join("; ")))
}

fn c9_ssl(m: &mut Main) -> Check {
    let r = m.report("ssl-before-after")?;
    let sup = metric(r, "supervised.delta")?;
    let fresh = metric(r, "fresh.delta")?;
    Ok((
        sup >= -0.005 && fresh >= 0.0,
        format!(
            "supervised {:.4} -> {:.4}; fresh entities {:.4} -> {:.4}; {} new entities",
            metric(r, "supervised.before")?,
            metric(r, "supervised.after")?,
            metric(r, "fresh.before")?,
            metric(r, "fresh.after")?,
            metric(r, "new_entities_count")?
        ),
    ))
}

fn c10_consolidation(m: &mut Main) -> Check {
    let r = m.report("consolidation-fidelity")?;
    let agree = metric(r, "agreement")?;
    let bits = metric(r, "bit_identical")?;
    let n = r.metrics.iter().find(|x| x.name == "agreement").map_or(0, |x| x.count);
    Ok((agree == 1.0 && bits == 1.0, format!("agreement {agree:.4} over {n} outputs, pre-existing parameters identical {bits:.4}")))
}

const CLI_CONFIG: &str = r#"{
  "world": {"entities": 60, "scenes": 16, "test_scenes": 4, "unlabeled_scenes": 4},
  "model": {"rank": 16, "hidden": 8},
  "train": {"epochs": 4, "batch_size": 32}
}"#;

fn cli(dir: &Path, out: &str, args: &[String]) -> Result<Vec<u8>, String> {
    let mut argv: Vec<String> = ["btn", "--config"].map(String::from).to_vec();
    argv.push(dir.join("config.json").display().to_string());
    argv.extend(["--seed".into(), "11".into(), "--out".into(), dir.join(out).display().to_string()]);
    argv.extend(args.iter().cloned());
    let parsed = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
    let mut stdout = vec![];
    run(&parsed, &mut stdout).map_err(|e| format!("{argv:?}: {e}"))?;
    Ok(stdout)
}

fn c11_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    fs::write(dir.join("config.json"), CLI_CONFIG).map_err(|e| e.to_string())?;
    let p = |s: &str| dir.join(s).display().to_string();
    let (w, m) = (p("gen.a"), p("train.a"));
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("gen", vec!["gen".into()]),
        ("train", vec!["train".into(), "--world".into(), w.clone()]),
        ("episodic", ["decode", "--checkpoint", &m, "--mode", "episodic", "--t", "scene000", "--n", "50"].map(String::from).to_vec()),
        ("semantic", ["decode", "--checkpoint", &m, "--mode", "semantic", "--n", "50"].map(String::from).to_vec()),
        ("fuse", ["decode", "--checkpoint", &m, "--mode", "fuse", "--t", "scene000", "--gamma", "2", "--n", "50", "--world", &w].map(String::from).to_vec()),
        ("perceive", ["decode", "--checkpoint", &m, "--mode", "perceive", "--world", &w, "--scene", "scene001"].map(String::from).to_vec()),
        ("eval", ["eval", "--checkpoint", &m, "--world", &w].map(String::from).to_vec()),
        ("ssl", ["ssl", "--checkpoint", &m, "--world", &w].map(String::from).to_vec()),
    ];
    let mut files = 0;
    let mut mismatches = vec![];
    for (name, args) in &commands {
        let a = cli(dir, &format!("{name}.a"), args)?;
        let b = cli(dir, &format!("{name}.b"), args)?;
        if a != b {
            mismatches.push(format!("{name} stdout"));
        }
        let (da, db) = (dir.join(format!("{name}.a")), dir.join(format!("{name}.b")));
        let ma = without_timestamps(&da.join("manifest.json")).map_err(|e| e.to_string())?;
        let mb = without_timestamps(&db.join("manifest.json")).map_err(|e| e.to_string())?;
        if ma != mb {
            mismatches.push(format!("{name} manifest"));
        }
        for o in &ma.outputs {
            files += 1;
            if fs::read(da.join(&o.path)).ok() != fs::read(db.join(&o.path)).ok() {
                mismatches.push(format!("{name}/{}", o.path));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{} commands, {files} artifacts byte-identical", commands.len())
    } else {
        format!("differences: {}", mismatches.join(", "))
    };
    Ok((mismatches.is_empty(), detail))
}

fn main() {
    let mut suite = Suite { results: vec![] };
    suite.criterion("C1", "counting models match brute-force enumeration", secs(1), c1_counting_models);
    suite.criterion("C2", "Dirichlet fusion special cases and source frequencies", secs(5), c2_fusion);
    suite.criterion("C3", "analytic gradients match central differences", secs(30), c3_gradients);
    suite.criterion("C4", "episodic recall on a 20-entity world", secs(180), c4_episodic_recall);

    // One model at r = 64 on the default world serves C5, C6 and C8 to C10.
    let mut main = train_main(WorldConfig::default(), 64);
    let mut shared = |suite: &mut Suite, id: &str, title: &str, scenario: &str, limit: u64, f: fn(&mut Main) -> Check| {
        let (outcome, elapsed) = match &mut main {
            Ok(m) => (f(m), m.elapsed(scenario)),
            Err(e) => (Err(e.clone()), Duration::ZERO),
        };
        suite.timed(id, title, secs(limit), elapsed, || outcome);
    };
    shared(&mut suite, "C5", "semantic recall given the entity", "semantic-recall", 300, c5_semantic);
    shared(&mut suite, "C6", "hidden label enrichment from semantic memory", "hidden-label-enrichment", 300, c6_hidden_label);

    // The perception comparison uses a world with weaker class signal and a
    // smaller model, where individual entities are harder to tell apart.
    let mut weak = train_main(WorldConfig { class_signal: 0.5, ..Default::default() }, 32);
    let (c7, elapsed) = match &mut weak {
        Ok(m) => (c7_known_entities(m), m.elapsed("perception-unary")),
        Err(e) => (Err(e.clone()), Duration::ZERO),
    };
    suite.timed("C7", "known-entity advantage in perception", secs(600), elapsed, || c7);

    shared(&mut suite, "C8", "zero-shot binary labeling", "zero-shot-binary", 300, c8_zero_shot);
    shared(&mut suite, "C9", "self-supervised learning stability", "ssl-before-after", 600, c9_ssl);
    shared(&mut suite, "C10", "consolidation fidelity", "consolidation-fidelity", 60, c10_consolidation);
    suite.criterion("C11", "CLI determinism under a fixed seed", secs(600), c11_determinism);

    let passed = suite.results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", suite.results.len());
    let strict = std::env::var("BTN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < suite.results.len() {
        std::process::exit(1);
    }
}
