//! Calibrated uncertainty intervals for unknown edge weights of a directed
//! road graph, and risk-sensitive robust shortest paths planned on top of
//! them.
//!
//! The pipeline: ingest a road graph with partially observed traffic
//! volumes ([`graph`]), train a quantile-headed graph autoencoder on the
//! observed edges ([`gae`]), calibrate its raw quantile intervals with a
//! split-conformal correction ([`conformal`]), plan routes against the
//! calibrated upper bounds ([`planner`]), and reproduce the coverage/cost
//! experiment protocol ([`evaluate`]).

pub mod conformal;
pub mod error;
pub mod evaluate;
pub mod gae;
pub mod graph;
pub mod numerics;
pub mod planner;
pub mod synth;

pub use error::{CoreError, Result};
