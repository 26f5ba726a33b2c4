//! Losses, gradients, optimization and the learning procedures built on them.

pub mod adam;
pub mod consolidate;
pub mod examples;
pub mod forgetting;
pub mod loss;
pub mod ssl;
pub mod trainer;

pub use adam::{AdamConfig, AdamState, UpdateMask};
pub use consolidate::{consolidate, ConsolidateConfig};
pub use examples::{Context, Example, ObjectTarget};
pub use forgetting::{forgetting_probe, ForgettingReport};
pub use loss::{batch_loss, gradients, LossConfig, LossWeights};
pub use ssl::{detect_novel_entity, ssl_step, SslConfig, SslOutcome, UnlabeledScene};
pub use trainer::{train, EpochStats, TrainConfig, Trainer};
