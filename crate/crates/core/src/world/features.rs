//! Synthetic feature vectors standing in for an image backbone.
//!
//! An entity box is a fixed random projection of its class prototype
//! concatenated with its latent appearance, plus noise. A scene is the mean
//! of its member boxes plus scene noise. A predicate box projects the two
//! class prototypes and the predicate prototype. Noise is a deterministic
//! function of the target and the view, so a view always looks the same and
//! different views of one entity differ.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::linalg::{axpy, Mat};
use crate::world::config::WorldConfig;
use crate::world::gen::GroundTruthWorld;
use crate::world::ontology::{Ontology, ACTIVITY, B_CLASS, COLOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub noise_seed: u64,
    pub individuality: f64,
    pub class_protos: BTreeMap<String, Vec<f64>>,
    pub appearance_protos: BTreeMap<String, Vec<f64>>,
    pub predicate_protos: BTreeMap<String, Vec<f64>>,
    pub entity_proj: Mat,
    pub pair_proj: Mat,
}

fn gaussian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n).map(|_| scale * d.sample(rng)).collect()
}

/// Deterministic stream for one (target, view).
fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    // splitmix64 folding
    let mut x = seed;
    for &p in parts {
        x = x.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    ChaCha8Rng::seed_from_u64(x)
}

fn name_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

impl FeatureModel {
    pub fn new(config: &WorldConfig, ontology: &Ontology, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (pd, ld, rf) = (config.prototype_dim, config.latent_dim, config.feature_dim);
        let mut class_protos = BTreeMap::new();
        for c in ontology.basic_classes() {
            class_protos.insert(c.clone(), gaussian(rng, pd, config.class_signal));
        }
        let mut appearance_protos = BTreeMap::new();
        for fam in [COLOR, ACTIVITY] {
            let f = ontology
                .family(fam)
                .ok_or_else(|| BtnError::Infeasible(format!("ontology lacks family {fam}")))?;
            for m in &f.members {
                appearance_protos.insert(m.clone(), gaussian(rng, ld, 1.0));
            }
        }
        let mut predicate_protos = BTreeMap::new();
        for p in ontology.binary_labels() {
            predicate_protos.insert(p, gaussian(rng, pd, 1.0));
        }
        let ein = pd + ld;
        let entity_proj = Mat { rows: rf, cols: ein, data: gaussian(rng, rf * ein, (1.0 / ein as f64).sqrt()) };
        let pin = 3 * pd;
        let pair_proj = Mat { rows: rf, cols: pin, data: gaussian(rng, rf * pin, (1.0 / pin as f64).sqrt()) };
        Ok(FeatureModel {
            noise_seed: rng.random(),
            individuality: config.individuality,
            class_protos,
            appearance_protos,
            predicate_protos,
            entity_proj,
            pair_proj,
        })
    }

    /// Latent appearance: color and activity prototypes plus an individual part.
    pub fn latent(&self, ontology: &Ontology, labels: &[String], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let ld = self.appearance_protos.values().next().map_or(0, |v| v.len());
        let mut v = gaussian(rng, ld, self.individuality);
        for fam in [COLOR, ACTIVITY] {
            let i = ontology.families.iter().position(|f| f.name == fam).expect("validated");
            axpy(1.0, &self.appearance_protos[&labels[i]], &mut v);
        }
        v
    }
}

/// What to encode.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureTarget<'a> {
    Entity { entity: usize, scene: usize, view: u32 },
    Scene { scene: usize, view: u32 },
    Pair { s: usize, p: &'a str, o: usize, scene: usize, view: u32 },
}

fn noisy(mut x: Vec<f64>, sigma: f64, mut rng: ChaCha8Rng) -> Vec<f64> {
    if sigma > 0.0 {
        let d = Normal::new(0.0, sigma).expect("nonnegative sigma");
        x.iter_mut().for_each(|v| *v += d.sample(&mut rng));
    }
    x
}

pub fn encode_features(target: &FeatureTarget, world: &GroundTruthWorld) -> Vec<f64> {
    let fm = &world.features;
    let cfg = &world.config;
    let bi = world.family_index(B_CLASS);
    match *target {
        FeatureTarget::Entity { entity, scene, view } => {
            let e = &world.entities[entity];
            let mut input = fm.class_protos[&e.labels[bi]].clone();
            input.extend_from_slice(&e.latent);
            let rng = stream(fm.noise_seed, &[1, entity as u64, scene as u64, view as u64]);
            noisy(fm.entity_proj.matvec(&input), cfg.noise, rng)
        }
        FeatureTarget::Scene { scene, view } => {
            let members = &world.scenes[scene].members;
            let mut mean = vec![0.0; cfg.feature_dim];
            for &m in members {
                let f = encode_features(&FeatureTarget::Entity { entity: m, scene, view }, world);
                axpy(1.0 / members.len() as f64, &f, &mut mean);
            }
            let rng = stream(fm.noise_seed, &[2, scene as u64, view as u64]);
            noisy(mean, cfg.scene_noise, rng)
        }
        FeatureTarget::Pair { s, p, o, scene, view } => {
            let mut input = fm.class_protos[&world.entities[s].labels[bi]].clone();
            input.extend_from_slice(&fm.class_protos[&world.entities[o].labels[bi]]);
            input.extend_from_slice(&fm.predicate_protos[p]);
            let rng = stream(fm.noise_seed, &[3, s as u64, o as u64, name_hash(p), scene as u64, view as u64]);
            noisy(fm.pair_proj.matvec(&input), cfg.noise, rng)
        }
    }
}
