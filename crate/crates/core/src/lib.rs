//! Lasso selection for 3D point clouds.

pub mod corpus;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod network;
pub mod predict;
pub mod training;

pub use error::{Error, Result};
