//! Demand-driven hydraulic simulation.
//!
//! Each time step is an independent steady-state solve: there are no tanks,
//! so the state at time `t` depends only on the demands and source heads at
//! `t`. The solver starts every step from the same initial guess, which
//! makes results independent of which time steps are requested.

mod headloss;
mod sensors;
mod solver;
pub mod sparse;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::network::NetworkModel;

pub use headloss::{emitter_flow, headloss, LinkLoss, GRAVITY, KINEMATIC_VISCOSITY};
pub use sensors::{
    extract_observations, parse_sensor_file, write_sensor_file, Quantity, SensorError,
    SensorId, SensorSet, Series,
};
pub use solver::{
    solve_steady, HydraulicSolver, Loading, DERIVATIVE_FLOOR, ENERGY_TOLERANCE, FLOW_TOLERANCE,
    MASS_TOLERANCE, MAX_ITERATIONS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicError {
    #[error("link {0} has nonpositive length or diameter")]
    Geometry(String),
    #[error("network has no fixed-head source")]
    NoSource,
    #[error("junction {0} has no open path to a source")]
    Disconnected(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("singular head system at junction {0}")]
    Singular(String),
    #[error("solve at t={time}s did not converge (max mass residual {mass_residual} L/s, max energy residual {energy_residual} m)")]
    NonConvergence {
        time: u64,
        mass_residual: f64,
        mean_mass_residual: f64,
        energy_residual: f64,
    },
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error("at t={time}s: {source}")]
    AtTime {
        time: u64,
        #[source]
        source: Box<HydraulicError>,
    },
}

/// Element identifiers in model order, shared by every state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementIds {
    pub junctions: Vec<String>,
    pub reservoirs: Vec<String>,
    /// Pipes first, then valves.
    pub links: Vec<String>,
    pub n_pipes: usize,
    junction_lookup: HashMap<String, usize>,
    link_lookup: HashMap<String, usize>,
}

impl ElementIds {
    pub fn from_model(model: &NetworkModel) -> Self {
        let junctions: Vec<String> = model.junctions.iter().map(|j| j.id.clone()).collect();
        let links: Vec<String> = model
            .pipes
            .iter()
            .map(|p| p.id.clone())
            .chain(model.valves.iter().map(|v| v.id.clone()))
            .collect();
        Self {
            junction_lookup: junctions.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect(),
            link_lookup: links.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect(),
            junctions,
            reservoirs: model.reservoirs.iter().map(|r| r.id.clone()).collect(),
            links,
            n_pipes: model.pipes.len(),
        }
    }

    pub fn junction(&self, id: &str) -> Option<usize> {
        self.junction_lookup.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<usize> {
        self.link_lookup.get(id).copied()
    }
}

/// Heads, pressures and flows of one steady-state solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    pub ids: Arc<ElementIds>,
    /// m, per junction.
    pub junction_heads: Vec<f64>,
    /// m, per reservoir.
    pub reservoir_heads: Vec<f64>,
    /// m of head above elevation, per junction.
    pub junction_pressures: Vec<f64>,
    /// L/s, positive in the link's from→to direction; closed links carry 0.
    pub link_flows: Vec<f64>,
    /// L/s, per junction.
    pub emitter_flows: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// L/s
    pub max_mass_residual: f64,
    pub mean_mass_residual: f64,
    /// m
    pub max_energy_residual: f64,
}

impl HydraulicState {
    pub fn pressure(&self, junction: &str) -> Option<f64> {
        self.ids.junction(junction).map(|i| self.junction_pressures[i])
    }

    pub fn head(&self, node: &str) -> Option<f64> {
        self.ids
            .junction(node)
            .map(|i| self.junction_heads[i])
            .or_else(|| {
                self.ids
                    .reservoirs
                    .iter()
                    .position(|r| r == node)
                    .map(|i| self.reservoir_heads[i])
            })
    }

    pub fn flow(&self, link: &str) -> Option<f64> {
        self.ids.link(link).map(|i| self.link_flows[i])
    }

    pub fn emitter(&self, junction: &str) -> Option<f64> {
        self.ids.junction(junction).map(|i| self.emitter_flows[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// s, strictly increasing.
    pub timestamps: Vec<u64>,
    pub states: Vec<HydraulicState>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Long-format CSV: `time_s,element_kind,element_id,quantity,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,element_kind,element_id,quantity,value\n");
        for (t, state) in self.timestamps.iter().zip(&self.states) {
            let ids = &state.ids;
            for (i, id) in ids.junctions.iter().enumerate() {
                let _ = writeln!(out, "{t},junction,{id},pressure_m,{}", state.junction_pressures[i]);
                let _ = writeln!(out, "{t},junction,{id},head_m,{}", state.junction_heads[i]);
            }
            for (i, id) in ids.reservoirs.iter().enumerate() {
                let _ = writeln!(out, "{t},reservoir,{id},head_m,{}", state.reservoir_heads[i]);
            }
            for (i, id) in ids.links.iter().enumerate() {
                let kind = if i < ids.n_pipes { "pipe" } else { "valve" };
                let _ = writeln!(out, "{t},{kind},{id},flow_lps,{}", state.link_flows[i]);
            }
        }
        out
    }
}

fn solve_at(solver: &HydraulicSolver, model: &NetworkModel, t: u64) -> Result<HydraulicState, HydraulicError> {
    let state = solver
        .solve(&Loading::at_time(model, t))
        .map_err(|e| HydraulicError::AtTime {
            time: t,
            source: Box::new(e),
        })?;
    if !state.converged {
        return Err(HydraulicError::NonConvergence {
            time: t,
            mass_residual: state.max_mass_residual,
            mean_mass_residual: state.mean_mass_residual,
            energy_residual: state.max_energy_residual,
        });
    }
    Ok(state)
}

/// Quasi-static run over `[0, duration)` at `step` spacing.
pub fn simulate_eps(model: &NetworkModel, duration: u64, step: u64) -> Result<SimulationResult, HydraulicError> {
    if step == 0 || duration < step || duration % step != 0 {
        return Err(HydraulicError::TimeGrid(format!(
            "duration {duration}s must be a positive multiple of step {step}s"
        )));
    }
    let times: Vec<u64> = (0..duration / step).map(|k| k * step).collect();
    simulate_times(model, &times)
}

/// Solves at each requested time (strictly increasing).
pub fn simulate_times(model: &NetworkModel, times: &[u64]) -> Result<SimulationResult, HydraulicError> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HydraulicError::TimeGrid("timestamps must be strictly increasing".into()));
    }
    let solver = HydraulicSolver::new(model)?;
    let states = times
        .iter()
        .map(|&t| solve_at(&solver, model, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimulationResult {
        timestamps: times.to_vec(),
        states,
    })
}

#[cfg(test)]
mod tests;
