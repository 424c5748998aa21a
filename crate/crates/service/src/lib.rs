//! HTTP service and command-line driver for lasso selection.

pub mod api;
pub mod cli;
