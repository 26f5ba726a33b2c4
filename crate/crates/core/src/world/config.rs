use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};

/// Flat configuration of a generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    /// Visual entities over all splits.
    pub entities: usize,
    /// Training scenes.
    pub scenes: usize,
    /// Scenes made of held-out (novel) entities.
    pub test_scenes: usize,
    /// Scenes made of unlabeled entities, the self-supervised shard.
    pub unlabeled_scenes: usize,
    pub test_fraction: f64,
    pub unlabeled_fraction: f64,
    pub entities_per_scene: f64,
    pub binary_per_scene: f64,
    pub feature_dim: usize,
    /// Width of the latent appearance vector.
    pub latent_dim: usize,
    /// Width of class and predicate prototypes.
    pub prototype_dim: usize,
    /// Scale of the class prototypes in an entity's appearance.
    pub class_signal: f64,
    /// Scale of the individual part of an entity's appearance.
    pub individuality: f64,
    /// Feature noise σ per view.
    pub noise: f64,
    pub scene_noise: f64,
    /// Re-noised duplicate of every training scene as a second instance.
    pub ex_duplicates: bool,
    /// One background instance per entity stating all its labels, including
    /// hidden ones, plus its ownedBy/lovedBy statements.
    pub background: bool,
    /// Owners and lovers that never appear in a scene.
    pub nonvisual: bool,
    pub social: bool,
    pub social_k: usize,
    pub social_beta: f64,
    pub zero_shot_fraction: f64,
    pub ontology: String,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            entities: 300,
            scenes: 120,
            test_scenes: 40,
            unlabeled_scenes: 40,
            test_fraction: 0.2,
            unlabeled_fraction: 0.2,
            entities_per_scene: 4.0,
            binary_per_scene: 3.0,
            feature_dim: 48,
            latent_dim: 16,
            prototype_dim: 16,
            class_signal: 1.0,
            individuality: 0.7,
            noise: 0.3,
            scene_noise: 0.3,
            ex_duplicates: true,
            background: true,
            nonvisual: true,
            social: true,
            social_k: 5,
            social_beta: 1.0,
            zero_shot_fraction: 0.1,
            ontology: "default".into(),
        }
    }
}

impl WorldConfig {
    /// A small world without auxiliary instances: `entities` entities seen in
    /// `scenes` scenes and nothing else.
    pub fn tiny(entities: usize, scenes: usize, seed: u64) -> Self {
        WorldConfig {
            seed,
            entities,
            scenes,
            test_scenes: 0,
            unlabeled_scenes: 0,
            test_fraction: 0.0,
            unlabeled_fraction: 0.0,
            ex_duplicates: false,
            background: false,
            nonvisual: false,
            social: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BtnError::Config(m.to_string()));
        if self.entities == 0 || self.scenes == 0 {
            return bad("entities and scenes must be at least 1");
        }
        if self.feature_dim == 0 || self.latent_dim == 0 || self.prototype_dim == 0 {
            return bad("dimensions must be at least 1");
        }
        if !(self.noise >= 0.0 && self.scene_noise >= 0.0 && self.individuality >= 0.0 && self.class_signal >= 0.0) {
            return bad("noise scales must be nonnegative");
        }
        if !(self.entities_per_scene >= 1.0) || !(self.binary_per_scene >= 0.0) {
            return bad("entities_per_scene must be at least 1 and binary_per_scene nonnegative");
        }
        let (t, u) = (self.test_fraction, self.unlabeled_fraction);
        if !(0.0..1.0).contains(&t) || !(0.0..1.0).contains(&u) || t + u >= 1.0 {
            return bad("split fractions must be in [0, 1) and leave training entities");
        }
        if !(0.0..1.0).contains(&self.zero_shot_fraction) {
            return bad("zero_shot_fraction must be in [0, 1)");
        }
        Ok(())
    }
}
