//! Noisy-OR Bayesian networks for comparing mechanistic models of bacterial
//! conjugation against single-cell tracking data.
//!
//! The pipeline runs ingest, network construction, per-event queries and
//! model ranking. See `examples/` for one runnable program per stage.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cpd;
pub mod geometry;
pub mod graph;
pub mod inference;
pub mod ingest;
pub mod logspace;
pub mod ranking;
pub mod synth;
pub mod pipeline;
