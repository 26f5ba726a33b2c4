//! Metrics, recall measurements and the named experiment scenarios.

pub mod experiments;
pub mod metrics;
pub mod recall;
pub mod zero_shot;

pub use metrics::{hits_at_k, top1_accuracy, Metric, MetricReport, Tallies, Tally, ZeroShotSplit};
pub use zero_shot::zero_shot_split;
pub use experiments::{run_experiment, run_experiments, EvalConfig, EvalContext, ExperimentConfig, EXPERIMENTS};
