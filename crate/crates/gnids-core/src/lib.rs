//! Graph-based network intrusion detection toolkit.
//!
//! Builds host-connection graphs from flow records, trains a heterogeneous
//! message-passing GNN to classify flows, trains classical flow-level
//! baselines, and measures robustness of all models under packet-size and
//! inter-arrival-time perturbations of attack traffic.

pub mod adversarial;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod normalize;
pub mod pipeline;
pub mod record;
pub mod schema;
pub mod synth;
pub mod train;
pub mod util;

pub use error::{Error, Result};
