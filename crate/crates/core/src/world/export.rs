//! World files: `world.json` (the ground truth), `vocab.json`,
//! `triples.jsonl` (training positives), `zero_shot.json` and the feature
//! archive `features.json` + `features.bin`.
//!
//! Feature tensors are named `<scene>/<view>/scene`, `<scene>/<view>/box/<entity>`
//! and `<scene>/<view>/pair/<subject>/<object>`.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{BtnError, Result};
use crate::eval::metrics::ZeroShotSplit;
use crate::io::{read_archive, read_json, write_archive, write_json, NamedTensor};
use crate::store::TripleTensor;
use crate::world::features::{encode_features, FeatureTarget};
use crate::world::gen::{GroundTruthWorld, Split, VIEW_DUPLICATE, VIEW_TEST, VIEW_TRAIN};

pub const WORLD_FILE: &str = "world.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const TRIPLES_FILE: &str = "triples.jsonl";
pub const ZERO_SHOT_FILE: &str = "zero_shot.json";
pub const FEATURES_STEM: &str = "features";

#[derive(Clone, Debug, PartialEq)]
pub struct ExportSummary {
    pub positives: usize,
    pub feature_tensors: usize,
    /// Written files, relative to the output directory.
    pub files: Vec<String>,
}

/// Views stored for a scene of the given split.
pub fn scene_views(world: &GroundTruthWorld, split: Split) -> Vec<u32> {
    match split {
        Split::Train if world.config.ex_duplicates => vec![VIEW_TRAIN, VIEW_DUPLICATE, VIEW_TEST],
        Split::Train => vec![VIEW_TRAIN, VIEW_TEST],
        _ => vec![VIEW_TRAIN, VIEW_DUPLICATE],
    }
}

pub fn box_key(world: &GroundTruthWorld, scene: usize, view: u32, entity: usize) -> String {
    format!("{}/{}/box/{}", world.scenes[scene].name, view, world.entities[entity].name)
}

pub fn pair_key(world: &GroundTruthWorld, scene: usize, view: u32, s: usize, o: usize) -> String {
    format!("{}/{}/pair/{}/{}", world.scenes[scene].name, view, world.entities[s].name, world.entities[o].name)
}

pub fn scene_key(world: &GroundTruthWorld, scene: usize, view: u32) -> String {
    format!("{}/{}/scene", world.scenes[scene].name, view)
}

fn feature_tensors(world: &GroundTruthWorld) -> Vec<NamedTensor> {
    let rf = world.config.feature_dim;
    let mut out = vec![];
    for (i, sc) in world.scenes.iter().enumerate() {
        for view in scene_views(world, sc.split) {
            let f = encode_features(&FeatureTarget::Scene { scene: i, view }, world);
            out.push(NamedTensor::new(scene_key(world, i, view), vec![rf], f));
            for &m in &sc.members {
                let f = encode_features(&FeatureTarget::Entity { entity: m, scene: i, view }, world);
                out.push(NamedTensor::new(box_key(world, i, view, m), vec![rf], f));
            }
            for st in &sc.binary {
                let t = FeatureTarget::Pair { s: st.s, p: &st.p, o: st.o, scene: i, view };
                out.push(NamedTensor::new(pair_key(world, i, view, st.s, st.o), vec![rf], encode_features(&t, world)));
            }
        }
    }
    out
}

/// Writes every world file into `dir`.
pub fn export_world(world: &GroundTruthWorld, zero_shot: &ZeroShotSplit, dir: &Path) -> Result<ExportSummary> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(WORLD_FILE), world)?;
    write_json(&dir.join(ZERO_SHOT_FILE), zero_shot)?;
    let store = world.training_store(&zero_shot.held_out_set())?;
    write_json(&dir.join(VOCAB_FILE), &store.vocab().to_file())?;
    let mut w = BufWriter::new(fs::File::create(dir.join(TRIPLES_FILE))?);
    let positives = store.write_jsonl(&mut w, true)?;
    w.flush()?;
    let tensors = feature_tensors(world);
    let meta = serde_json::json!({ "kind": "features", "world_seed": world.config.seed });
    write_archive(dir, FEATURES_STEM, world.config.feature_dim, 0, &store.vocab().fingerprint(), meta, &tensors)?;
    Ok(ExportSummary {
        positives,
        feature_tensors: tensors.len(),
        files: vec![
            WORLD_FILE.into(),
            ZERO_SHOT_FILE.into(),
            VOCAB_FILE.into(),
            TRIPLES_FILE.into(),
            format!("{FEATURES_STEM}.json"),
            format!("{FEATURES_STEM}.bin"),
        ],
    })
}

/// A world directory read back.
pub struct ImportedWorld {
    pub world: GroundTruthWorld,
    pub zero_shot: ZeroShotSplit,
    /// The training store as read from `triples.jsonl` over `vocab.json`.
    pub store: TripleTensor,
}

pub fn import_world(dir: &Path) -> Result<ImportedWorld> {
    let world: GroundTruthWorld = read_json(&dir.join(WORLD_FILE))?;
    let zero_shot: ZeroShotSplit = read_json(&dir.join(ZERO_SHOT_FILE))?;
    let vf = read_json(&dir.join(VOCAB_FILE))?;
    let vocab = crate::vocab::Vocabulary::from_file(&vf)?;
    let mut store = TripleTensor::new(vocab);
    store.read_jsonl(BufReader::new(fs::File::open(dir.join(TRIPLES_FILE)).map_err(|e| {
        BtnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(TRIPLES_FILE).display())))
    })?))?;
    Ok(ImportedWorld { world, zero_shot, store })
}

/// Feature vectors by key from the archive in `dir`.
pub fn read_features(dir: &Path) -> Result<std::collections::BTreeMap<String, Vec<f64>>> {
    let (_, tensors) = read_archive(dir, FEATURES_STEM)?;
    Ok(tensors.into_iter().map(|t| (t.name, t.data)).collect())
}

/// Names of the held-out combos' statements are absent from `store`.
pub fn check_holdout(world: &GroundTruthWorld, store: &TripleTensor, zero_shot: &ZeroShotSplit) -> Result<()> {
    let held = zero_shot.held_out_set();
    let v = store.vocab();
    let names: BTreeSet<&str> = world.ontology.visual_predicates.iter().map(String::as_str).collect();
    for q in store.positives() {
        if !names.contains(v.name(q.p)) {
            continue;
        }
        let (Some(s), Some(o)) = (world.entity_index(v.name(q.s)), world.entity_index(v.name(q.o))) else {
            continue;
        };
        let c = crate::world::Combo { s_class: world.class_of(s).into(), p: v.name(q.p).into(), o_class: world.class_of(o).into() };
        if held.contains(&c) {
            return Err(BtnError::Format(format!("held-out combo {c:?} occurs in the training store")));
        }
    }
    Ok(())
}
