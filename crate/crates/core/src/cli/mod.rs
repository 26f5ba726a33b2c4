//! The `btn` command line: world generation, training, decoding, evaluation
//! and self-supervised learning, each writing a run manifest next to its
//! artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::eval::experiments::{run_experiments, EvalConfig, EvalContext, ExperimentConfig};
use crate::eval::metrics::write_reports;
use crate::eval::zero_shot_split;
use crate::io::{read_json, sha256_bytes, sha256_file, write_json};
use crate::model::{decode, post_observation_sample, BtnParams, DecodeInput, DecodeTrace, IndexSets, ModelConfig, Source};
use crate::pipeline::{train_more, Modes};
use crate::store::TripleTensor;
use crate::train::trainer::write_loss_csv;
use crate::train::{ssl_step, ConsolidateConfig, EpochStats, SslConfig, TrainConfig};
use crate::vocab::Vocabulary;
use crate::world::export::{read_features, FEATURES_STEM, TRIPLES_FILE, VOCAB_FILE, WORLD_FILE, ZERO_SHOT_FILE};
use crate::world::gen::VIEW_TRAIN;
use crate::world::{export_world, gen_world, import_world, unlabeled_scenes, WorldConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const PSEUDO_FILE: &str = "pseudo_labels.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";

/// One configuration file for every command, in sections. Missing keys take
/// their defaults; unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub modes: Modes,
    pub ssl: SslConfig,
    pub consolidation: ConsolidateConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| BtnError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_slice(&bytes).map_err(|e| BtnError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// One seed for every random stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.ssl.seed = seed;
        self.eval.seed = seed;
        self
    }

    pub fn experiments(&self) -> ExperimentConfig {
        ExperimentConfig {
            eval: self.eval.clone(),
            train: self.train.clone(),
            modes: self.modes.clone(),
            ssl: self.ssl.clone(),
            consolidation: self.consolidation.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// Hash of the configuration file as read.
    pub config_hash: Option<String>,
    /// Hash of the configuration after defaults and flag overrides.
    pub resolved_config_hash: String,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    /// Relative to the run directory.
    pub outputs: Vec<Artifact>,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

#[derive(Parser, Debug)]
#[command(name = "btn", version, about = "Bilayer tensor network: perception and memory as decoding modes")]
pub struct Cli {
    /// JSON configuration with sections world, model, train, modes, ssl,
    /// consolidation, eval.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic world.
    Gen,
    /// Train a model on a generated world.
    Train {
        #[arg(long)]
        world: PathBuf,
        /// Continue from the checkpoint (and loss curve) in this run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Stream decoded triples as JSON lines on stdout.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: DecodeModeArg,
        /// Instance name (episodic, fuse).
        #[arg(long)]
        t: Option<String>,
        /// Subject name (semantic; optional).
        #[arg(long)]
        s: Option<String>,
        /// Prior strength of semantic memory (fuse).
        #[arg(long)]
        gamma: Option<f64>,
        /// Samples per query. One sample is winner-take-all; more are drawn
        /// at inverse temperature 1.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// World directory (perceive, fuse).
        #[arg(long)]
        world: Option<PathBuf>,
        /// Scene to perceive.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = VIEW_TRAIN)]
        view: u32,
    },
    /// Run named experiments and write reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
        /// Comma-separated experiment names, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        experiments: Vec<String>,
    },
    /// Self-supervised learning on the unlabeled scenes of a world.
    Ssl {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecodeModeArg {
    Perceive,
    Episodic,
    Semantic,
    Fuse,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train { .. } => "train",
            Command::Decode { .. } => "decode",
            Command::Eval { .. } => "eval",
            Command::Ssl { .. } => "ssl",
        }
    }
}

/// Files read from a world directory.
const WORLD_INPUTS: [&str; 4] = [WORLD_FILE, VOCAB_FILE, TRIPLES_FILE, ZERO_SHOT_FILE];
const CHECKPOINT_INPUTS: [&str; 3] = ["checkpoint.json", "checkpoint.bin", "vocab.json"];

fn hash_inputs(dir: &Path, files: &[&str], out: &mut Vec<Artifact>) -> Result<()> {
    for f in files {
        let p = dir.join(f);
        let sha256 = sha256_file(&p).map_err(|e| BtnError::Io(std::io::Error::other(format!("{}: {e}", p.display()))))?;
        out.push(Artifact { path: p.display().to_string(), sha256 });
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command, writing data lines to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.threads {
        // A pool that is already set up (tests, repeated calls) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let out = cli.out.clone().ok_or(BtnError::MissingInput("--out run directory"))?;
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let started = now_ms();
    let mut manifest = RunManifest {
        command: cli.command.name().into(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        config_hash: cli.config.as_ref().map(|p| sha256_file(p)).transpose()?,
        resolved_config_hash: sha256_bytes(&serde_json::to_vec(&config)?),
        seed: config.world.seed,
        inputs: vec![],
        outputs: vec![],
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix_ms: started,
        finished_unix_ms: started,
        status: "running".into(),
        error: None,
    };
    fs::create_dir_all(&out)?;
    let result = (|| -> Result<Vec<String>> {
        match &cli.command {
            Command::Gen => {}
            Command::Train { world, resume } => {
                hash_inputs(world, &WORLD_INPUTS, &mut manifest.inputs)?;
                if let Some(r) = resume {
                    hash_inputs(r, &CHECKPOINT_INPUTS, &mut manifest.inputs)?;
                }
            }
            Command::Decode { checkpoint, world, .. } => {
                hash_inputs(checkpoint, &CHECKPOINT_INPUTS, &mut manifest.inputs)?;
                if let Some(w) = world {
                    hash_inputs(w, &WORLD_INPUTS, &mut manifest.inputs)?;
                    let (j, b) = (format!("{FEATURES_STEM}.json"), format!("{FEATURES_STEM}.bin"));
                    hash_inputs(w, &[&j, &b], &mut manifest.inputs)?;
                }
            }
            Command::Eval { checkpoint, world, .. } | Command::Ssl { checkpoint, world } => {
                hash_inputs(checkpoint, &CHECKPOINT_INPUTS, &mut manifest.inputs)?;
                hash_inputs(world, &WORLD_INPUTS, &mut manifest.inputs)?;
            }
        }
        write_json(&out.join(CONFIG_ECHO), &config)?;
        let mut files = vec![CONFIG_ECHO.to_string()];
        files.extend(match &cli.command {
            Command::Gen => cmd_gen(&config, &out, stdout)?,
            Command::Train { world, resume } => cmd_train(&config, world, resume.as_deref(), &out, stdout)?,
            Command::Decode { checkpoint, mode, t, s, gamma, n, world, scene, view } => {
                let q = DecodeQuery {
                    mode: *mode,
                    t: t.clone(),
                    s: s.clone(),
                    gamma: *gamma,
                    n: *n,
                    world: world.clone(),
                    scene: scene.clone(),
                    view: *view,
                    seed: config.eval.seed,
                };
                cmd_decode(checkpoint, &q, &out, stdout)?
            }
            Command::Eval { checkpoint, world, experiments } => {
                cmd_eval(&config, checkpoint, world, experiments, &out, stdout)?
            }
            Command::Ssl { checkpoint, world } => cmd_ssl(&config, checkpoint, world, &out, stdout)?,
        });
        Ok(files)
    })();
    manifest.finished_unix_ms = now_ms();
    match &result {
        Ok(files) => {
            for f in files {
                manifest.outputs.push(Artifact { path: f.clone(), sha256: sha256_file(&out.join(f))? });
            }
            manifest.status = "ok".into();
        }
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
        }
    }
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    result.map(|_| ())
}

fn json_line(w: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn cmd_gen(config: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<Vec<String>> {
    config.world.validate()?;
    let world = gen_world(&config.world)?;
    let zs = zero_shot_split(&world)?;
    let summary = export_world(&world, &zs, out)?;
    log::info!(
        "world: {} entities, {} scenes, {} training positives, {} feature tensors",
        world.entities.len(),
        world.scenes.len(),
        summary.positives,
        summary.feature_tensors
    );
    json_line(
        stdout,
        &serde_json::json!({
            "positives": summary.positives,
            "feature_tensors": summary.feature_tensors,
            "entities": world.entities.len(),
            "scenes": world.scenes.len(),
            "held_out_combos": zs.held_out.len(),
        }),
    )?;
    Ok(summary.files)
}

/// The training store of a world directory, read over `vocab`.
fn read_store(world_dir: &Path, vocab: Vocabulary) -> Result<TripleTensor> {
    let mut store = TripleTensor::new(vocab);
    let f = fs::File::open(world_dir.join(TRIPLES_FILE))?;
    store.read_jsonl(BufReader::new(f))?;
    Ok(store)
}

fn read_loss_csv(path: &Path) -> Result<Vec<EpochStats>> {
    let mut out = vec![];
    if !path.exists() {
        return Ok(out);
    }
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || BtnError::Format(format!("{}: line {}", path.display(), i + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        out.push(EpochStats {
            epoch: parts[0].parse().map_err(|_| bad())?,
            split: parts[1].to_string(),
            loss: parts[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

fn cmd_train(
    config: &RunConfig,
    world_dir: &Path,
    resume: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<Vec<String>> {
    let imported = import_world(world_dir)?;
    let (world, zs) = (imported.world, imported.zero_shot);
    let (mut params, store, mut losses) = match resume {
        Some(dir) => {
            let (params, vocab) = BtnParams::load(dir)?;
            let prior = read_loss_csv(&dir.join(LOSS_FILE))?;
            log::info!("resuming after {} epochs from {}", prior.len(), dir.display());
            (params, read_store(world_dir, vocab)?, prior)
        }
        None => {
            let mc = ModelConfig { feature_dim: world.config.feature_dim, ..config.model.clone() };
            let params = BtnParams::init(mc, imported.store.vocab().len());
            (params, imported.store, vec![])
        }
    };
    let start = losses.len();
    let new = train_more(&world, &zs, &store, &mut params, &config.train, &config.modes, start, |s| {
        log::info!("epoch {} loss {:.6}", s.epoch, s.loss);
    })?;
    for s in &new {
        json_line(stdout, s)?;
    }
    losses.extend(new);
    params.save(out, store.vocab())?;
    let mut w = BufWriter::new(fs::File::create(out.join(LOSS_FILE))?);
    write_loss_csv(&mut w, &losses)?;
    w.flush()?;
    Ok(vec![
        "checkpoint.json".into(),
        "checkpoint.bin".into(),
        "vocab.json".into(),
        LOSS_FILE.into(),
    ])
}

/// Inputs of the decode command.
#[derive(Clone, Debug)]
pub struct DecodeQuery {
    pub mode: DecodeModeArg,
    pub t: Option<String>,
    pub s: Option<String>,
    pub gamma: Option<f64>,
    pub n: usize,
    pub world: Option<PathBuf>,
    pub scene: Option<String>,
    pub view: u32,
    pub seed: u64,
}

/// One decoded line: the pass's subject with its unary labels and, for a
/// full pass, its object and predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeLine {
    pub mode: String,
    pub sample: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<String>,
    pub labels: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<String>,
    /// Boxes of a perceived scene, by the keys of the feature archive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_box: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_box: Option<String>,
}

impl DecodeLine {
    fn from_trace(mode: &str, sample: usize, tr: &DecodeTrace, vocab: &Vocabulary, t: Option<String>) -> Self {
        let name = |id: Option<crate::vocab::VocabId>| id.map(|i| vocab.name(i).to_string());
        DecodeLine {
            mode: mode.into(),
            sample,
            source: None,
            t: t.or_else(|| name(tr.t_star)),
            s: name(tr.s_star),
            labels: tr.c_stars.iter().map(|(f, c)| (f.clone(), vocab.name(*c).to_string())).collect(),
            p: name(tr.p_star),
            o: name(tr.o_star),
            subject_box: None,
            object_box: None,
        }
    }
}

fn beta_for(n: usize) -> f64 {
    if n <= 1 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Decodes according to `q` and returns the lines.
pub fn decode_lines(params: &BtnParams, vocab: &Vocabulary, q: &DecodeQuery) -> Result<Vec<DecodeLine>> {
    if q.n == 0 {
        return Err(BtnError::InvalidInput("--n must be at least 1".into()));
    }
    let sets = IndexSets::from_vocab(vocab);
    let beta = beta_for(q.n);
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let mut out = vec![];
    match q.mode {
        DecodeModeArg::Episodic => {
            let t_name = q.t.clone().ok_or(BtnError::MissingInput("--t instance for episodic decoding"))?;
            let t = vocab.id(&t_name)?;
            for i in 0..q.n {
                let input = DecodeInput::episodic(t).with_beta(beta).with_seed(rng.random());
                let tr = decode(&input, params, vocab, &sets)?;
                out.push(DecodeLine::from_trace("episodic", i, &tr, vocab, Some(t_name.clone())));
            }
        }
        DecodeModeArg::Semantic => {
            let s = q.s.as_deref().map(|n| vocab.id(n)).transpose()?;
            for i in 0..q.n {
                let input = DecodeInput::semantic(s).with_beta(beta).with_seed(rng.random());
                let tr = decode(&input, params, vocab, &sets)?;
                out.push(DecodeLine::from_trace("semantic", i, &tr, vocab, None));
            }
        }
        DecodeModeArg::Fuse => {
            let t_name = q.t.clone().ok_or(BtnError::MissingInput("--t instance for fused sampling"))?;
            let gamma = q.gamma.ok_or(BtnError::MissingInput("--gamma for fused sampling"))?;
            let world = q.world.as_deref().ok_or(BtnError::MissingInput("--world for the instance's statement count"))?;
            let t = vocab.id(&t_name)?;
            let n_t = read_store(world, vocab.clone())?.n_t(t) as u64;
            let mut k = 0usize;
            let samples = post_observation_sample(
                |r: &mut ChaCha8Rng| {
                    decode(&DecodeInput::semantic(None).with_beta(1.0).with_seed(r.random()), params, vocab, &sets)
                },
                |r: &mut ChaCha8Rng| {
                    decode(&DecodeInput::episodic(t).with_beta(1.0).with_seed(r.random()), params, vocab, &sets)
                },
                gamma,
                n_t,
                q.n,
                &mut rng,
            )?;
            for (src, tr) in samples {
                let t = (src == Source::Episodic).then(|| t_name.clone());
                let mut line = DecodeLine::from_trace("fuse", k, &tr, vocab, t);
                line.source = Some(src);
                out.push(line);
                k += 1;
            }
        }
        DecodeModeArg::Perceive => {
            let world = q.world.as_deref().ok_or(BtnError::MissingInput("--world with the feature archive"))?;
            let scene = q.scene.as_deref().ok_or(BtnError::MissingInput("--scene to perceive"))?;
            let feats = read_features(world)?;
            let prefix = format!("{scene}/{}/", q.view);
            let scene_f = feats
                .get(&format!("{prefix}scene"))
                .ok_or_else(|| BtnError::UnknownId(format!("{prefix}scene")))?;
            let box_prefix = format!("{prefix}box/");
            let boxes: Vec<(&str, &Vec<f64>)> = feats
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&box_prefix).map(|b| (b, v)))
                .collect();
            let pair_prefix = format!("{prefix}pair/");
            let pairs: Vec<(&str, &str, &Vec<f64>)> = feats
                .iter()
                .filter_map(|(k, v)| {
                    let rest = k.strip_prefix(&pair_prefix)?;
                    let (a, b) = rest.split_once('/')?;
                    Some((a, b, v))
                })
                .collect();
            let get_box = |b: &str| {
                feats.get(&format!("{box_prefix}{b}")).ok_or_else(|| BtnError::UnknownId(format!("{box_prefix}{b}")))
            };
            for (b, f) in &boxes {
                for i in 0..q.n {
                    let input = DecodeInput::perception(scene_f.clone(), (*f).clone(), None)
                        .with_beta(beta)
                        .with_seed(rng.random());
                    let tr = decode(&input, params, vocab, &sets)?;
                    let mut line = DecodeLine::from_trace("perceive", i, &tr, vocab, None);
                    line.subject_box = Some(b.to_string());
                    out.push(line);
                }
            }
            for (a, b, f) in &pairs {
                let (fa, fb) = (get_box(a)?, get_box(b)?);
                for i in 0..q.n {
                    let input = DecodeInput::perception(scene_f.clone(), fa.clone(), Some((fb.clone(), (*f).clone())))
                        .with_beta(beta)
                        .with_seed(rng.random());
                    let tr = decode(&input, params, vocab, &sets)?;
                    let mut line = DecodeLine::from_trace("perceive", i, &tr, vocab, None);
                    line.subject_box = Some(a.to_string());
                    line.object_box = Some(b.to_string());
                    out.push(line);
                }
            }
            if boxes.is_empty() {
                return Err(BtnError::UnknownId(format!("no boxes under {box_prefix}")));
            }
        }
    }
    Ok(out)
}

fn cmd_decode(checkpoint: &Path, q: &DecodeQuery, out: &Path, stdout: &mut dyn Write) -> Result<Vec<String>> {
    let (params, vocab) = BtnParams::load(checkpoint)?;
    let lines = decode_lines(&params, &vocab, q)?;
    let mut f = BufWriter::new(fs::File::create(out.join(SAMPLES_FILE))?);
    for l in &lines {
        json_line(stdout, l)?;
        json_line(&mut f, l)?;
    }
    f.flush()?;
    log::info!("{} lines decoded", lines.len());
    Ok(vec![SAMPLES_FILE.into()])
}

fn cmd_eval(
    config: &RunConfig,
    checkpoint: &Path,
    world_dir: &Path,
    names: &[String],
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<Vec<String>> {
    // Unknown names fail before anything is loaded.
    crate::eval::experiments::resolve_names(names)?;
    let (params, vocab) = BtnParams::load(checkpoint)?;
    let imported = import_world(world_dir)?;
    let ec = config.experiments();
    let ctx = EvalContext { world: &imported.world, zero_shot: &imported.zero_shot, params: &params, vocab: &vocab, config: &ec };
    let reports = run_experiments(names, &ctx)?;
    for r in &reports {
        log::info!("{}: {} metrics in {:.1}s", r.experiment, r.metrics.len(), r.wall_clock_s);
        for m in &r.metrics {
            json_line(stdout, &serde_json::json!({ "experiment": r.experiment, "metric": m.name, "value": m.value, "count": m.count }))?;
        }
    }
    write_reports(out, &reports)
}

fn cmd_ssl(config: &RunConfig, checkpoint: &Path, world_dir: &Path, out: &Path, stdout: &mut dyn Write) -> Result<Vec<String>> {
    let (mut params, mut vocab) = BtnParams::load(checkpoint)?;
    let imported = import_world(world_dir)?;
    let (scenes, _) = unlabeled_scenes(&imported.world, VIEW_TRAIN);
    if scenes.is_empty() {
        return Err(BtnError::InvalidInput("world has no unlabeled scenes".into()));
    }
    let before = vocab.len();
    let outcome = ssl_step(&scenes, &mut params, &mut vocab, &config.ssl, &config.train.loss)?;
    params.check_finite()?;
    log::info!(
        "vocabulary grew from {before} to {} ids: {} instances, {} entities ({} novelty triggers)",
        vocab.len(),
        outcome.new_instances.len(),
        outcome.new_entities.len(),
        outcome.novelty_triggers
    );
    params.save(out, &vocab)?;
    let mut f = BufWriter::new(fs::File::create(out.join(PSEUDO_FILE))?);
    for l in &outcome.pseudo {
        json_line(&mut f, l)?;
    }
    f.flush()?;
    let mut w = BufWriter::new(fs::File::create(out.join(LOSS_FILE))?);
    write_loss_csv(&mut w, &outcome.losses)?;
    w.flush()?;
    json_line(
        stdout,
        &serde_json::json!({
            "scenes": scenes.len(),
            "pseudo_labels": outcome.pseudo.len(),
            "vocab_before": before,
            "vocab_after": vocab.len(),
            "new_instances": outcome.new_instances.len(),
            "new_entities": outcome.new_entities.len(),
            "novelty_triggers": outcome.novelty_triggers,
        }),
    )?;
    Ok(vec![
        "checkpoint.json".into(),
        "checkpoint.bin".into(),
        "vocab.json".into(),
        PSEUDO_FILE.into(),
        LOSS_FILE.into(),
    ])
}

/// A manifest with its timestamps cleared, for comparing reruns.
pub fn without_timestamps(path: &Path) -> Result<RunManifest> {
    let mut m: RunManifest = read_json(path)?;
    m.started_unix_ms = 0;
    m.finished_unix_ms = 0;
    Ok(m)
}
