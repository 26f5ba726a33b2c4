//! Bilayer tensor network (BTN).
//!
//! A symbolic index layer and a subsymbolic representation layer share one
//! embedding matrix. Perception, episodic memory, semantic memory and
//! post-observation fusion are operational modes of the same decoder.
//!
//! Module map:
//! - [`store`]: the observed triple tensor and its count-based models, which
//!   double as brute-force oracles for the learned network.
//! - [`model`]: parameters, layer operations, sequential decoding, attention.
//! - [`train`]: losses with hand-derived gradients, Adam, self-supervised
//!   learning, consolidation by replay.
//! - [`world`]: synthetic ontology world with feature vectors standing in for
//!   a vision backbone.
//! - [`eval`]: metrics and named experiment scenarios.
//! - [`cli`]: run manifests and the subcommands behind the `btn` binary.

pub mod cli;
pub mod dist;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod store;
pub mod train;
pub mod vocab;
pub mod world;

pub use dist::CategoricalDist;
pub use error::{BtnError, Result};
pub use model::{BtnParams, DecodeInput, DecodeMode, DecodeTrace, ModelConfig};
pub use store::{Estimate, Quad, TripleTensor};
pub use vocab::{Kind, VocabId, Vocabulary};
