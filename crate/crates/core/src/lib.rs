//! Calibration of water distribution network models.
//!
//! Network descriptions are parsed from INP text, simulated with a
//! global-gradient hydraulic solver, and calibrated by evolving two small
//! neural networks (one for flow-driving parameters, one for
//! pressure-driving parameters) whose outputs are confined to bounds
//! compiled from expert rules.

pub mod archive;
pub mod calibration;
pub mod config;
pub mod hydraulics;
pub mod neat;
pub mod network;
pub mod optimizers;
pub mod rng;
pub mod rules;
pub mod space;
pub mod synth;

pub use network::NetworkModel;
pub use space::{ParameterSpace, ParameterSpec, ParameterVector};
