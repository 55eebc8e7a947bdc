//! Predicting and verifying single-node revival of networked two-variable
//! dynamical systems.
//!
//! The pipeline: build or load a graph ([`network`]), reduce it to a short
//! chain of shortest-path layers ([`layer_model`]), integrate the layer chain
//! for a given clamp to predict activation ([`reduced`]), and check against
//! Monte Carlo simulation of the full network ([`simulate`]).

pub mod compare;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod layer_model;
pub mod network;
pub mod ode;
pub mod reduced;
pub mod simulate;

pub use dynamics::{ModelSpec, NodeState};
pub use error::{Error, Result};
pub use network::Graph;

/// Activation threshold as a fraction of the high homogeneous `u` state.
pub const ACTIVATION_THETA: f64 = 0.5;
