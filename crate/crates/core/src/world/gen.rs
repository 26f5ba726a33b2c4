//! Ground-truth world generation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::store::TripleTensor;
use crate::vocab::{VocabId, Vocabulary};
use crate::world::config::WorldConfig;
use crate::world::features::FeatureModel;
use crate::world::ontology::{Ontology, B_CLASS, G_CLASS, P_CLASS, RISK};
use crate::world::social::gen_social_network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    /// Novel entities, never trained on.
    Test,
    /// Entities only seen without labels.
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub name: String,
    pub split: Split,
    pub visual: bool,
    /// One label per ontology family, in ontology order.
    pub labels: Vec<String>,
    pub latent: Vec<f64>,
}

/// A binary statement between two entity indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Statement {
    pub s: usize,
    pub p: String,
    pub o: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub name: String,
    pub split: Split,
    pub members: Vec<usize>,
    pub binary: Vec<Statement>,
}

/// Instances without features: background knowledge and social links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxInstance {
    pub name: String,
    pub split: Split,
    /// Entities whose labels are stated, with all families or visible ones.
    pub labeled: Vec<usize>,
    pub all_families: bool,
    pub binary: Vec<Statement>,
}

/// Views of a scene: two training views and one test view for training
/// scenes, two views otherwise.
pub const VIEW_TRAIN: u32 = 0;
pub const VIEW_DUPLICATE: u32 = 1;
pub const VIEW_TEST: u32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthWorld {
    pub config: WorldConfig,
    pub ontology: Ontology,
    pub entities: Vec<EntityRecord>,
    pub scenes: Vec<SceneRecord>,
    pub background: Vec<AuxInstance>,
    pub social: Vec<AuxInstance>,
    pub features: FeatureModel,
}

impl GroundTruthWorld {
    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.name == name)
    }

    pub fn family_index(&self, name: &str) -> usize {
        self.ontology.families.iter().position(|f| f.name == name).expect("ontology family")
    }

    pub fn label(&self, entity: usize, family: &str) -> &str {
        &self.entities[entity].labels[self.family_index(family)]
    }

    pub fn class_of(&self, entity: usize) -> &str {
        self.label(entity, B_CLASS)
    }

    pub fn scenes_in(&self, split: Split) -> impl Iterator<Item = (usize, &SceneRecord)> {
        self.scenes.iter().enumerate().filter(move |(_, s)| s.split == split)
    }

    /// Instance name of a scene view; `None` for views that are not
    /// instances of the trained model (test views and other splits).
    pub fn view_instance(&self, scene: usize, view: u32) -> Option<String> {
        let sc = &self.scenes[scene];
        match (sc.split, view) {
            (Split::Train, VIEW_TRAIN) => Some(sc.name.clone()),
            (Split::Train, VIEW_DUPLICATE) if self.config.ex_duplicates => Some(format!("{}_dup", sc.name)),
            _ => None,
        }
    }

    /// Training views of a training scene.
    pub fn training_views(&self) -> Vec<u32> {
        if self.config.ex_duplicates {
            vec![VIEW_TRAIN, VIEW_DUPLICATE]
        } else {
            vec![VIEW_TRAIN]
        }
    }

    /// `(B-Class of s, p, B-Class of o)` of a statement.
    pub fn combo(&self, st: &Statement) -> Combo {
        Combo {
            s_class: self.class_of(st.s).to_string(),
            p: st.p.clone(),
            o_class: self.class_of(st.o).to_string(),
        }
    }

    /// Vocabulary of the trained model: training-split entities, every label,
    /// every binary label and the training instances.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let mut v = Vocabulary::new();
        for e in self.entities.iter().filter(|e| e.split == Split::Train) {
            v.add_entity(&e.name)?;
        }
        for f in &self.ontology.families {
            for m in &f.members {
                if f.is_class {
                    v.add_class(m)?;
                } else {
                    v.add_attribute(m)?;
                }
            }
        }
        for p in self.ontology.binary_labels() {
            v.add_predicate(&p)?;
        }
        for t in self.training_instances() {
            v.add_instance(&t)?;
        }
        for f in &self.ontology.families {
            let members: Vec<&str> = f.members.iter().map(String::as_str).collect();
            v.add_family(&f.name, &members)?;
        }
        Ok(v)
    }

    pub fn training_instances(&self) -> Vec<String> {
        let mut out = vec![];
        for (i, _) in self.scenes_in(Split::Train) {
            for view in self.training_views() {
                out.extend(self.view_instance(i, view));
            }
        }
        for a in self.background.iter().chain(&self.social) {
            if a.split == Split::Train {
                out.push(a.name.clone());
            }
        }
        out
    }

    /// Positive statements of one entity's labels.
    fn label_quads(&self, entity: usize, all_families: bool) -> Vec<(String, String)> {
        let e = &self.entities[entity];
        self.ontology
            .families
            .iter()
            .zip(&e.labels)
            .filter(|(f, _)| all_families || f.visible)
            .map(|(_, l)| (e.name.clone(), l.clone()))
            .collect()
    }

    /// Every positive quadruple of a split as `(s, p, o, t)` names, with
    /// scenes stated once per instance view. Statements whose combo is in
    /// `holdout` are dropped.
    pub fn positive_quads(&self, split: Split, holdout: &BTreeSet<Combo>) -> Vec<[String; 4]> {
        let ha = crate::vocab::HAS_ATTRIBUTE.to_string();
        let mut out = vec![];
        for (i, sc) in self.scenes_in(split) {
            let views: Vec<String> = match split {
                Split::Train => self.training_views().into_iter().filter_map(|v| self.view_instance(i, v)).collect(),
                _ => vec![sc.name.clone()],
            };
            for t in views {
                for &m in &sc.members {
                    for (s, l) in self.label_quads(m, false) {
                        out.push([s, ha.clone(), l, t.clone()]);
                    }
                }
                for st in &sc.binary {
                    if holdout.contains(&self.combo(st)) {
                        continue;
                    }
                    out.push([self.entities[st.s].name.clone(), st.p.clone(), self.entities[st.o].name.clone(), t.clone()]);
                }
            }
        }
        for a in self.background.iter().chain(&self.social).filter(|a| a.split == split) {
            for &m in &a.labeled {
                for (s, l) in self.label_quads(m, a.all_families) {
                    out.push([s, ha.clone(), l, a.name.clone()]);
                }
            }
            for st in &a.binary {
                out.push([self.entities[st.s].name.clone(), st.p.clone(), self.entities[st.o].name.clone(), a.name.clone()]);
            }
        }
        out
    }

    /// The training store over [`Self::vocabulary`].
    pub fn training_store(&self, holdout: &BTreeSet<Combo>) -> Result<TripleTensor> {
        self.training_store_over(holdout, self.vocabulary()?)
    }

    /// The training store over a given vocabulary, such as a checkpoint's.
    pub fn training_store_over(&self, holdout: &BTreeSet<Combo>, vocab: Vocabulary) -> Result<TripleTensor> {
        let mut store = TripleTensor::new(vocab);
        for [s, p, o, t] in self.positive_quads(Split::Train, holdout) {
            store.observe(&s, &p, &o, &t, true)?;
        }
        Ok(store)
    }

    /// Resolves an entity index to its model id, if it has one.
    pub fn entity_id(&self, vocab: &Vocabulary, entity: usize) -> Option<VocabId> {
        vocab.get(&self.entities[entity].name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Combo {
    pub s_class: String,
    pub p: String,
    pub o_class: String,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a String {
    &xs[rng.random_range(0..xs.len())]
}

pub fn gen_world(config: &WorldConfig) -> Result<GroundTruthWorld> {
    config.validate()?;
    let ontology = Ontology::preset(&config.ontology)?;
    ontology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let features = FeatureModel::new(config, &ontology, &mut rng)?;

    // Visual entities with their split.
    let n = config.entities;
    let n_test = (n as f64 * config.test_fraction).round() as usize;
    let n_unl = (n as f64 * config.unlabeled_fraction).round() as usize;
    if n_test + n_unl >= n {
        return Err(BtnError::Infeasible("no training entities left".into()));
    }
    let mut splits: Vec<Split> = (0..n)
        .map(|i| {
            if i < n_test {
                Split::Test
            } else if i < n_test + n_unl {
                Split::Unlabeled
            } else {
                Split::Train
            }
        })
        .collect();
    splits.shuffle(&mut rng);

    let fam_idx = |name: &str| ontology.families.iter().position(|f| f.name == name).expect("validated");
    let (bi, pi, gi, ri) = (fam_idx(B_CLASS), fam_idx(P_CLASS), fam_idx(G_CLASS), fam_idx(RISK));
    let make_entity = |name: String, split: Split, visual: bool, class: Option<&str>, rng: &mut ChaCha8Rng| {
        let mut labels: Vec<String> = ontology.families.iter().map(|f| pick(rng, &f.members).clone()).collect();
        if let Some(c) = class {
            labels[bi] = c.to_string();
        }
        let anc = ontology.ancestors(&labels[bi]);
        labels[pi] = anc[0].clone();
        labels[gi] = anc[1].clone();
        labels[ri] = ontology.hidden_rule[&anc[1]].clone();
        let latent = features.latent(&ontology, &labels, rng);
        EntityRecord { name, split, visual, labels, latent }
    };
    let mut entities: Vec<EntityRecord> = (0..n)
        .map(|i| make_entity(format!("e{i:03}"), splits[i], true, None, &mut rng))
        .collect();

    // Nonvisual owners and lovers.
    let mut background_binary: BTreeMap<usize, Vec<Statement>> = BTreeMap::new();
    if config.nonvisual {
        for i in 0..n {
            let class = entities[i].labels[bi].clone();
            let rel = if ontology.owned_classes.contains(&class) {
                Some((&ontology.owned_by, "owner"))
            } else if ontology.loved_classes.contains(&class) {
                Some((&ontology.loved_by, "lover"))
            } else {
                None
            };
            if let Some((p, tag)) = rel {
                let j = entities.len();
                let name = format!("{tag}_{}", entities[i].name);
                let rec = make_entity(name, entities[i].split, false, Some(&ontology.person), &mut rng);
                entities.push(rec);
                background_binary.entry(i).or_default().push(Statement { s: i, p: p.clone(), o: j });
            }
        }
    }

    // Scenes per split, cycling through shuffled entity pools so every
    // entity is seen.
    let mut scenes = vec![];
    for (split, count, prefix) in [
        (Split::Train, config.scenes, "scene"),
        (Split::Test, config.test_scenes, "test"),
        (Split::Unlabeled, config.unlabeled_scenes, "unl"),
    ] {
        let pool: Vec<usize> = (0..n).filter(|&i| entities[i].split == split && entities[i].visual).collect();
        if pool.is_empty() {
            if count > 0 && split == Split::Train {
                return Err(BtnError::Infeasible("no training entities for scenes".into()));
            }
            continue;
        }
        let mut cycle = pool.clone();
        cycle.shuffle(&mut rng);
        let mut cursor = 0;
        let n_bin = Poisson::new(config.binary_per_scene.max(1e-9)).expect("positive rate");
        for k in 0..count {
            // Uniform on [m - 1, m + 1] with stochastic rounding keeps the mean at m.
            let x = config.entities_per_scene - 1.0 + 2.0 * rng.random::<f64>();
            let whole = x.floor();
            let size = (whole as usize + usize::from(rng.random::<f64>() < x - whole)).clamp(1, pool.len());
            let mut members: Vec<usize> = Vec::with_capacity(size);
            while members.len() < size {
                if cursor == cycle.len() {
                    cycle.shuffle(&mut rng);
                    cursor = 0;
                }
                let e = cycle[cursor];
                cursor += 1;
                if !members.contains(&e) {
                    members.push(e);
                }
            }
            let want = if config.binary_per_scene > 0.0 { n_bin.sample(&mut rng) as usize } else { 0 };
            let mut binary: Vec<Statement> = vec![];
            let mut used = BTreeSet::new();
            let mut attempts = 0;
            while binary.len() < want && attempts < 20 * want.max(1) && members.len() > 1 {
                attempts += 1;
                let s = members[rng.random_range(0..members.len())];
                let o = members[rng.random_range(0..members.len())];
                if s == o || used.contains(&(s, o)) {
                    continue;
                }
                let w = ontology.predicate_weights(&entities[s].labels[bi], &entities[o].labels[bi]);
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    continue;
                }
                let mut u = rng.random::<f64>() * total;
                let mut chosen = w.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        chosen = i;
                        break;
                    }
                    u -= wi;
                }
                used.insert((s, o));
                binary.push(Statement { s, p: ontology.visual_predicates[chosen].clone(), o });
            }
            binary.sort();
            scenes.push(SceneRecord { name: format!("{prefix}{k:03}"), split, members, binary });
        }
    }

    let background = if config.background {
        (0..entities.len())
            .map(|i| AuxInstance {
                name: format!("bg_{}", entities[i].name),
                split: entities[i].split,
                labeled: vec![i],
                all_families: true,
                binary: background_binary.remove(&i).unwrap_or_default(),
            })
            .collect()
    } else {
        vec![]
    };

    let mut social = vec![];
    if config.social {
        let persons: Vec<usize> = (0..entities.len())
            .filter(|&i| entities[i].split == Split::Train && entities[i].labels[bi] == ontology.person)
            .collect();
        let latents: Vec<Vec<f64>> = persons.iter().map(|&i| entities[i].latent.clone()).collect();
        // Small worlds may not have k+1 persons; link to everyone then.
        let k = config.social_k.min(persons.len().saturating_sub(1));
        let edges = if k == 0 {
            vec![]
        } else {
            gen_social_network(&latents, k, config.social_beta, &mut rng)?
        };
        for (pi_, &person) in persons.iter().enumerate() {
            let binary: Vec<Statement> = edges
                .iter()
                .filter(|&&(a, b)| a == pi_ || b == pi_)
                .map(|&(a, b)| Statement { s: persons[a], p: ontology.knows.clone(), o: persons[b] })
                .collect();
            social.push(AuxInstance {
                name: format!("soc_{}", entities[person].name),
                split: Split::Train,
                labeled: vec![],
                all_families: false,
                binary,
            });
        }
    }

    Ok(GroundTruthWorld { config: config.clone(), ontology, entities, scenes, background, social, features })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_respect_the_ontology() {
        let w = gen_world(&WorldConfig::default()).unwrap();
        let o = &w.ontology;
        for (i, e) in w.entities.iter().enumerate() {
            assert_eq!(e.labels.len(), 7);
            for (f, l) in o.families.iter().zip(&e.labels) {
                assert!(f.members.contains(l), "{} not in {}", l, f.name);
            }
            let anc = o.ancestors(w.class_of(i));
            assert_eq!(w.label(i, P_CLASS), anc[0]);
            assert_eq!(w.label(i, G_CLASS), anc[1]);
            let want = if anc[1] == "LivingBeing" { "Dangerous" } else { "Harmless" };
            assert_eq!(w.label(i, RISK), want);
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_the_config() {
        let c = WorldConfig { seed: 9, ..Default::default() };
        assert_eq!(gen_world(&c).unwrap(), gen_world(&c).unwrap());
        let d = WorldConfig { seed: 10, ..Default::default() };
        assert_ne!(gen_world(&c).unwrap().scenes, gen_world(&d).unwrap().scenes);
    }

    #[test]
    fn scene_size_mean_is_close_to_configured() {
        let c = WorldConfig { scenes: 100, test_scenes: 0, unlabeled_scenes: 0, ..Default::default() };
        let w = gen_world(&c).unwrap();
        let mean = w.scenes.iter().map(|s| s.members.len()).sum::<usize>() as f64 / 100.0;
        assert!((mean - 4.0).abs() < 0.4, "mean {mean}");
    }

    #[test]
    fn dogs_are_owned_by_people_outside_scenes() {
        let w = gen_world(&WorldConfig::default()).unwrap();
        let in_scene: BTreeSet<usize> = w.scenes.iter().flat_map(|s| s.members.iter().copied()).collect();
        let mut dogs = 0;
        for bg in &w.background {
            for st in bg.binary.iter().filter(|st| st.p == "ownedBy") {
                assert_eq!(w.class_of(st.s), "Dog");
                assert_eq!(w.class_of(st.o), "Person");
                assert!(!w.entities[st.o].visual && !in_scene.contains(&st.o));
                dogs += 1;
            }
        }
        let visual_dogs = (0..w.entities.len()).filter(|&i| w.entities[i].visual && w.class_of(i) == "Dog").count();
        assert_eq!(dogs, visual_dogs);
    }

    #[test]
    fn tiny_world_has_only_scene_instances() {
        let w = gen_world(&WorldConfig::tiny(20, 10, 1)).unwrap();
        let v = w.vocabulary().unwrap();
        assert_eq!(v.instances().len(), 10);
        assert_eq!(v.entities().len(), 20);
        let store = w.training_store(&BTreeSet::new()).unwrap();
        assert!(store.n_total() > 0);
    }
}
