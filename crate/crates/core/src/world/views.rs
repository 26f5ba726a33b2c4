//! Scene views turned into training examples and evaluation items.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{BtnError, Result};
use crate::train::examples::{Context, Example, Features, ObjectTarget};
use crate::vocab::{VocabId, Vocabulary};
use crate::world::features::{encode_features, FeatureTarget};
use crate::world::gen::{Combo, GroundTruthWorld, Split, Statement};

fn arc(v: Vec<f64>) -> Features {
    Arc::from(v)
}

/// Features of one scene view, computed once.
pub struct SceneView<'w> {
    pub world: &'w GroundTruthWorld,
    pub scene: usize,
    pub view: u32,
    pub scene_features: Features,
    entity: BTreeMap<usize, Features>,
}

impl<'w> SceneView<'w> {
    pub fn new(world: &'w GroundTruthWorld, scene: usize, view: u32) -> Self {
        let scene_features = arc(encode_features(&FeatureTarget::Scene { scene, view }, world));
        let entity = world.scenes[scene]
            .members
            .iter()
            .map(|&m| (m, arc(encode_features(&FeatureTarget::Entity { entity: m, scene, view }, world))))
            .collect();
        SceneView { world, scene, view, scene_features, entity }
    }

    pub fn entity(&self, e: usize) -> Features {
        self.entity[&e].clone()
    }

    pub fn pair(&self, st: &Statement) -> Features {
        arc(encode_features(
            &FeatureTarget::Pair { s: st.s, p: &st.p, o: st.o, scene: self.scene, view: self.view },
            self.world,
        ))
    }

    /// Raw feature key of this view, as used in the feature archive.
    pub fn key(&self) -> String {
        format!("{}/{}", self.world.scenes[self.scene].name, self.view)
    }
}

/// Perception (or direct) examples from every training view of every
/// training scene. Statements with a held-out combo and labels of excluded
/// families are left out.
pub fn perception_examples(
    world: &GroundTruthWorld,
    vocab: &Vocabulary,
    holdout: &BTreeSet<Combo>,
    excluded: &BTreeSet<String>,
    direct: bool,
) -> Result<Vec<Example>> {
    let mut out = vec![];
    for (i, sc) in world.scenes_in(Split::Train) {
        for view in world.training_views() {
            let t_name = world.view_instance(i, view).expect("training view");
            let t = vocab.id(&t_name)?;
            let sv = SceneView::new(world, i, view);
            for &m in &sc.members {
                let s = world
                    .entity_id(vocab, m)
                    .ok_or_else(|| BtnError::UnknownId(world.entities[m].name.clone()))?;
                let mut unary = vec![];
                for (f, label) in world.ontology.families.iter().zip(&world.entities[m].labels) {
                    if !f.visible || excluded.contains(&f.name) {
                        continue;
                    }
                    let fi = vocab.family_index(&f.name).ok_or_else(|| BtnError::UnknownId(f.name.clone()))?;
                    unary.push((fi, vocab.id(label)?));
                }
                let mut objects = vec![];
                for st in sc.binary.iter().filter(|st| st.s == m) {
                    if holdout.contains(&world.combo(st)) {
                        continue;
                    }
                    let o = world
                        .entity_id(vocab, st.o)
                        .ok_or_else(|| BtnError::UnknownId(world.entities[st.o].name.clone()))?;
                    objects.push(ObjectTarget {
                        o,
                        preds: vec![vocab.id(&st.p)?],
                        bb_obj: Some(sv.entity(st.o)),
                        bb_pred: Some(sv.pair(st)),
                    });
                }
                let context = if direct {
                    Context::Direct
                } else {
                    Context::Perception { t, scene: sv.scene_features.clone() }
                };
                out.push(Example {
                    context,
                    s,
                    bb_sub: Some(sv.entity(m)),
                    unary,
                    objects,
                    inject: None,
                    dropout_seed: None,
                });
            }
        }
    }
    Ok(out)
}

/// One entity seen in one scene view.
#[derive(Clone, Debug)]
pub struct UnaryItem {
    pub scene: usize,
    pub view: u32,
    pub entity: usize,
    pub scene_features: Features,
    pub features: Features,
}

/// One binary statement seen in one scene view.
#[derive(Clone, Debug)]
pub struct BinaryItem {
    pub scene: usize,
    pub view: u32,
    pub statement: Statement,
    pub scene_features: Features,
    pub sub: Features,
    pub obj: Features,
    pub pred: Features,
}

pub fn unary_items(world: &GroundTruthWorld, split: Split, view: u32) -> Vec<UnaryItem> {
    let mut out = vec![];
    for (i, sc) in world.scenes_in(split) {
        let sv = SceneView::new(world, i, view);
        for &m in &sc.members {
            out.push(UnaryItem {
                scene: i,
                view,
                entity: m,
                scene_features: sv.scene_features.clone(),
                features: sv.entity(m),
            });
        }
    }
    out
}

/// Statements of a split seen in `view`, filtered by `keep`.
pub fn binary_items(
    world: &GroundTruthWorld,
    split: Split,
    view: u32,
    mut keep: impl FnMut(&Statement) -> bool,
) -> Vec<BinaryItem> {
    let mut out = vec![];
    for (i, sc) in world.scenes_in(split) {
        if !sc.binary.iter().any(&mut keep) {
            continue;
        }
        let sv = SceneView::new(world, i, view);
        for st in sc.binary.iter().filter(|st| keep(st)) {
            out.push(BinaryItem {
                scene: i,
                view,
                statement: st.clone(),
                scene_features: sv.scene_features.clone(),
                sub: sv.entity(st.s),
                obj: sv.entity(st.o),
                pred: sv.pair(st),
            });
        }
    }
    out
}

/// Model ids of an entity's labels, family by family, for the families in
/// `families` (vocabulary family names).
pub fn label_ids(world: &GroundTruthWorld, vocab: &Vocabulary, entity: usize) -> Result<BTreeMap<String, VocabId>> {
    world
        .ontology
        .families
        .iter()
        .zip(&world.entities[entity].labels)
        .map(|(f, l)| Ok((f.name.clone(), vocab.id(l)?)))
        .collect()
}

/// Scenes of the unlabeled split seen in `view`, as feature-only input for
/// self-supervised learning. Boxes get opaque names `b<k>`; the second value
/// maps `(scene name, box name)` back to the world's entity index.
pub fn unlabeled_scenes(
    world: &GroundTruthWorld,
    view: u32,
) -> (Vec<crate::train::UnlabeledScene>, BTreeMap<(String, String), usize>) {
    let mut scenes = vec![];
    let mut truth = BTreeMap::new();
    for (i, sc) in world.scenes_in(Split::Unlabeled) {
        let sv = SceneView::new(world, i, view);
        let boxes: Vec<(String, Features)> = sc
            .members
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                truth.insert((sc.name.clone(), format!("b{k}")), m);
                (format!("b{k}"), sv.entity(m))
            })
            .collect();
        let pos = |e: usize| sc.members.iter().position(|&m| m == e).expect("statement member");
        let pairs = sc.binary.iter().map(|st| (pos(st.s), pos(st.o), sv.pair(st))).collect();
        scenes.push(crate::train::UnlabeledScene {
            name: sc.name.clone(),
            scene: sv.scene_features.clone(),
            boxes,
            pairs,
        });
    }
    (scenes, truth)
}
