//! Temporal knowledge-graph reasoning over query-specific path frontiers:
//! data loading, relative time encoding, frontier collection, a recursive
//! attention encoder with hand-derived gradients, training, filtered-ranking
//! evaluation, path explanations, and a two-stage completion pipeline.

pub mod adam;
pub mod config;
pub mod data;
pub mod encode;
pub mod error;
pub mod eval;
pub mod explain;
pub mod frontier;
pub mod grad;
pub mod linalg;
pub mod params;
pub mod pipeline;
pub mod synth;
pub mod timeenc;
pub mod train;

pub use error::{Error, Result};
