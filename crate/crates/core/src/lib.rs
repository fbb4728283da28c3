//! Conceptual clustering over nominal data with probabilistic categorization
//! trees: hierarchical sorting builds a tree incrementally, three iterative
//! optimization strategies improve it, holdout validation identifies
//! per-variable prediction frontiers for pruning, and the evaluation layer
//! scores pattern completion and structural cost.

pub mod dataset;
pub mod error;
pub mod tree;

pub mod objective;

pub mod construct;
pub mod optimize;

pub mod evaluate;
pub mod frontier;

pub mod experiment;
pub mod synth;

pub use error::{Error, Result};
