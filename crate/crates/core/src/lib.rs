//! Deterministic simulator for gradient ("Slide") end-to-end routing with
//! Byzantine fault detection and localization.
//!
//! The Sender splits each message into erasure-coded parcels and pushes them
//! down height gradients toward the Receiver. Every node signs the state of
//! each transfer; the Sender audits signed testimonies after a failed
//! transmission and eliminates a node proven to have deviated.
//!
//! [`sim::run`] drives a [`sim::Scenario`] round by round and returns
//! [`sim::RunMetrics`] together with a digest of the trace.

pub mod adversary;
pub mod analysis;
pub mod coding;
pub mod crypto;
pub mod endpoints;
pub mod model;
pub mod node;
pub mod sim;

pub use model::{NodeId, Outcome, Params};
pub use sim::{run, RunMetrics, RunOptions, Scenario};
