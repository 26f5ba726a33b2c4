//! Synthetic world: an ontology of classes and attributes, entities with one
//! label per family, scenes with binary statements, feature vectors for every
//! view, nonvisual entities, background knowledge and a social network.

pub mod config;
pub mod export;
pub mod features;
pub mod gen;
pub mod ontology;
pub mod social;
pub mod views;

pub use config::WorldConfig;
pub use export::{export_world, import_world, ImportedWorld};
pub use features::{encode_features, FeatureTarget};
pub use gen::{gen_world, Combo, GroundTruthWorld, Split, Statement};
pub use ontology::Ontology;
pub use views::{perception_examples, unlabeled_scenes, SceneView};
