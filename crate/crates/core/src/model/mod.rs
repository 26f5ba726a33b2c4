//! The bilayer network: parameters, primitive operations and decoding.

pub mod decode;
pub mod ops;
pub mod params;

pub use decode::{decode, post_observation_sample, Attention, DecodeInput, DecodeMode, DecodeTrace, Source};
pub use ops::IndexSets;
pub use params::{Block, BtnParams, GradientBundle, ModelConfig, Tensors};
