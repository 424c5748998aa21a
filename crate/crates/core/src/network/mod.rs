//! Hierarchical point-set network: grouping, shared layers, propagation and
//! the per-point two-way classifier.

pub mod checkpoint;
pub mod config;
pub mod hierarchy;
pub mod layers;
pub mod loss;
pub mod model;

pub use checkpoint::{Checkpoint, CheckpointMetadata};
pub use config::NetworkConfig;
pub use hierarchy::Hierarchy;
pub use layers::Real;
pub use loss::{cross_entropy, weighted_cross_entropy, ClassWeights};
pub use model::{ModelParameters, Network, Prediction, Trace};
