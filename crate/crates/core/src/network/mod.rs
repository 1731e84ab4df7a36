//! Network description: junctions, reservoirs, pipes and valves plus the
//! demand patterns and hydraulic options that drive a simulation.

mod inp;
pub(crate) mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::space::{ElementKind, ParameterKind, ParameterSpace, ParameterVector};

pub use inp::{parse_inp, write_inp, InpError};
pub use validate::validate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadlossFormula {
    DarcyWeisbach,
    HazenWilliams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicOptions {
    pub headloss: HeadlossFormula,
    /// Simulation horizon, seconds.
    pub duration: u64,
    pub hydraulic_step: u64,
    pub pattern_step: u64,
    pub emitter_exponent: f64,
}

impl Default for HydraulicOptions {
    fn default() -> Self {
        Self {
            headloss: HeadlossFormula::DarcyWeisbach,
            duration: 0,
            hydraulic_step: 3600,
            pattern_step: 3600,
            emitter_exponent: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    /// m
    pub elevation: f64,
    /// L/s
    pub base_demand: f64,
    pub pattern_id: Option<String>,
    /// L/s per m^exponent
    pub emitter_coeff: f64,
    pub zone: Option<String>,
    pub age_years: Option<f64>,
}

impl Junction {
    pub fn new(id: impl Into<String>, elevation: f64, base_demand: f64) -> Self {
        Self {
            id: id.into(),
            elevation,
            base_demand,
            pattern_id: None,
            emitter_coeff: 0.0,
            zone: None,
            age_years: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub id: String,
    /// m
    pub head: f64,
    pub head_pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// m
    pub length: f64,
    /// mm
    pub diameter: f64,
    /// mm for Darcy-Weisbach, dimensionless C for Hazen-Williams.
    pub roughness: f64,
    pub minor_loss_k: f64,
    pub status: LinkStatus,
    pub material: Option<String>,
    pub age_years: Option<f64>,
}

impl Pipe {
    pub fn new(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        length: f64,
        diameter: f64,
        roughness: f64,
    ) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length,
            diameter,
            roughness,
            minor_loss_k: 0.0,
            status: LinkStatus::Open,
            material: None,
            age_years: None,
        }
    }
}

/// Any valve type is simulated as a throttle with loss coefficient `loss_coeff_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Valve {
    pub id: String,
    pub from: String,
    pub to: String,
    /// mm
    pub diameter: f64,
    pub kind: String,
    pub loss_coeff_k: f64,
    pub status: LinkStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkModel {
    pub title: String,
    pub junctions: Vec<Junction>,
    pub reservoirs: Vec<Reservoir>,
    pub pipes: Vec<Pipe>,
    pub valves: Vec<Valve>,
    pub patterns: BTreeMap<String, Vec<f64>>,
    pub options: HydraulicOptions,
    pub coordinates: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("WARNING"),
            Severity::Error => f.write_str("ERROR"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(element: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            element: element.into(),
            message: message.into(),
        }
    }

    pub fn warning(element: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            element: element.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.severity, self.element, self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OverlayError {
    #[error("parameter vector has {got} values but the space has {expected}")]
    Length { expected: usize, got: usize },
    #[error("{0} does not exist in the model")]
    MissingElement(String),
    #[error("value {value} for {label} is outside [{lo}, {hi}]")]
    OutOfBounds {
        label: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("parameter {0} cannot be applied")]
    Unsupported(String),
}

impl NetworkModel {
    pub fn junction_index(&self) -> HashMap<&str, usize> {
        self.junctions
            .iter()
            .enumerate()
            .map(|(i, j)| (j.id.as_str(), i))
            .collect()
    }

    pub fn pipe_index(&self) -> HashMap<&str, usize> {
        self.pipes
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    pub fn valve_index(&self) -> HashMap<&str, usize> {
        self.valves
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect()
    }

    pub fn junction(&self, id: &str) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.id == id)
    }

    pub fn pipe(&self, id: &str) -> Option<&Pipe> {
        self.pipes.iter().find(|p| p.id == id)
    }

    pub fn valve(&self, id: &str) -> Option<&Valve> {
        self.valves.iter().find(|v| v.id == id)
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.junctions.iter().any(|j| j.id == id) || self.reservoirs.iter().any(|r| r.id == id)
    }

    /// Elevation of a junction, or the head of a reservoir.
    pub fn node_elevation(&self, id: &str) -> Option<f64> {
        self.junction(id)
            .map(|j| j.elevation)
            .or_else(|| self.reservoirs.iter().find(|r| r.id == id).map(|r| r.head))
    }

    /// Number of links (open or closed) touching each node.
    pub fn node_degrees(&self) -> HashMap<&str, usize> {
        let mut degree: HashMap<&str, usize> = HashMap::new();
        for j in &self.junctions {
            degree.insert(&j.id, 0);
        }
        for r in &self.reservoirs {
            degree.insert(&r.id, 0);
        }
        let ends = self
            .pipes
            .iter()
            .map(|p| (p.from.as_str(), p.to.as_str()))
            .chain(self.valves.iter().map(|v| (v.from.as_str(), v.to.as_str())));
        for (a, b) in ends {
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        degree
    }

    /// Current value of a calibratable attribute.
    pub fn parameter_value(
        &self,
        kind: ElementKind,
        id: &str,
        parameter: ParameterKind,
    ) -> Option<f64> {
        match (kind, parameter) {
            (ElementKind::Pipe, ParameterKind::Roughness) => self.pipe(id).map(|p| p.roughness),
            (ElementKind::Pipe, ParameterKind::MinorLoss) => self.pipe(id).map(|p| p.minor_loss_k),
            (ElementKind::Pipe, ParameterKind::Diameter) => self.pipe(id).map(|p| p.diameter),
            (ElementKind::Junction, ParameterKind::BaseDemand) => {
                self.junction(id).map(|j| j.base_demand)
            }
            (ElementKind::Junction, ParameterKind::LeakCoeff) => {
                self.junction(id).map(|j| j.emitter_coeff)
            }
            (ElementKind::Valve, ParameterKind::ValveLoss) => {
                self.valve(id).map(|v| v.loss_coeff_k)
            }
            _ => None,
        }
    }

    /// Current model values for every spec of `space`.
    pub fn current_vector(&self, space: &ParameterSpace) -> Result<ParameterVector, OverlayError> {
        space
            .specs()
            .iter()
            .map(|s| {
                self.parameter_value(s.element_kind, &s.element_id, s.parameter)
                    .ok_or_else(|| OverlayError::MissingElement(s.label()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ParameterVector::new)
    }

    /// Returns a copy of the model with every spec's target attribute set to
    /// the matching entry of `vec`. `self` is left untouched.
    pub fn apply_parameters(
        &self,
        space: &ParameterSpace,
        vec: &ParameterVector,
    ) -> Result<NetworkModel, OverlayError> {
        if space.len() != vec.len() {
            return Err(OverlayError::Length {
                expected: space.len(),
                got: vec.len(),
            });
        }
        let mut out = self.clone();
        if space.is_empty() {
            return Ok(out);
        }
        let junctions = self.junction_index();
        let pipes = self.pipe_index();
        let valves = self.valve_index();
        for (spec, &value) in space.specs().iter().zip(&vec.values) {
            if !spec.contains(value) {
                return Err(OverlayError::OutOfBounds {
                    label: spec.label(),
                    value,
                    lo: spec.lo,
                    hi: spec.hi,
                });
            }
            let missing = || OverlayError::MissingElement(spec.label());
            let id = spec.element_id.as_str();
            match (spec.element_kind, spec.parameter) {
                (ElementKind::Pipe, ParameterKind::Roughness) => {
                    out.pipes[*pipes.get(id).ok_or_else(missing)?].roughness = value
                }
                (ElementKind::Pipe, ParameterKind::MinorLoss) => {
                    out.pipes[*pipes.get(id).ok_or_else(missing)?].minor_loss_k = value
                }
                (ElementKind::Junction, ParameterKind::BaseDemand) => {
                    out.junctions[*junctions.get(id).ok_or_else(missing)?].base_demand = value
                }
                (ElementKind::Junction, ParameterKind::LeakCoeff) => {
                    out.junctions[*junctions.get(id).ok_or_else(missing)?].emitter_coeff = value
                }
                (ElementKind::Valve, ParameterKind::ValveLoss) => {
                    out.valves[*valves.get(id).ok_or_else(missing)?].loss_coeff_k = value
                }
                _ => return Err(OverlayError::Unsupported(spec.label())),
            }
        }
        Ok(out)
    }

    /// Attribute-level equality with floats compared to `digits` significant digits.
    pub fn semantically_equal(&self, other: &NetworkModel, digits: i32) -> bool {
        let close = |a: f64, b: f64| approx_digits(a, b, digits);
        let close_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => close(x, y),
            (None, None) => true,
            _ => false,
        };
        let o = &self.options;
        let p = &other.options;
        if o.headloss != p.headloss
            || o.duration != p.duration
            || o.hydraulic_step != p.hydraulic_step
            || o.pattern_step != p.pattern_step
            || !close(o.emitter_exponent, p.emitter_exponent)
        {
            return false;
        }
        if self.junctions.len() != other.junctions.len()
            || self.reservoirs.len() != other.reservoirs.len()
            || self.pipes.len() != other.pipes.len()
            || self.valves.len() != other.valves.len()
            || self.patterns.len() != other.patterns.len()
        {
            return false;
        }
        let junctions_eq = self.junctions.iter().zip(&other.junctions).all(|(a, b)| {
            a.id == b.id
                && close(a.elevation, b.elevation)
                && close(a.base_demand, b.base_demand)
                && a.pattern_id == b.pattern_id
                && close(a.emitter_coeff, b.emitter_coeff)
                && a.zone == b.zone
                && close_opt(a.age_years, b.age_years)
        });
        let reservoirs_eq = self.reservoirs.iter().zip(&other.reservoirs).all(|(a, b)| {
            a.id == b.id && close(a.head, b.head) && a.head_pattern == b.head_pattern
        });
        let pipes_eq = self.pipes.iter().zip(&other.pipes).all(|(a, b)| {
            a.id == b.id
                && a.from == b.from
                && a.to == b.to
                && close(a.length, b.length)
                && close(a.diameter, b.diameter)
                && close(a.roughness, b.roughness)
                && close(a.minor_loss_k, b.minor_loss_k)
                && a.status == b.status
                && a.material == b.material
                && close_opt(a.age_years, b.age_years)
        });
        let valves_eq = self.valves.iter().zip(&other.valves).all(|(a, b)| {
            a.id == b.id
                && a.from == b.from
                && a.to == b.to
                && close(a.diameter, b.diameter)
                && a.kind == b.kind
                && close(a.loss_coeff_k, b.loss_coeff_k)
                && a.status == b.status
        });
        let patterns_eq = self.patterns.iter().zip(&other.patterns).all(|(a, b)| {
            a.0 == b.0 && a.1.len() == b.1.len() && a.1.iter().zip(b.1).all(|(x, y)| close(*x, *y))
        });
        junctions_eq && reservoirs_eq && pipes_eq && valves_eq && patterns_eq
    }
}

fn approx_digits(a: f64, b: f64, digits: i32) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= scale * 10f64.powi(1 - digits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Group, ParameterSpec, Prior};

    fn two_pipe_model() -> NetworkModel {
        NetworkModel {
            junctions: vec![Junction::new("J1", 80.0, 1.0), Junction::new("J2", 79.0, 2.0)],
            reservoirs: vec![Reservoir {
                id: "R1".into(),
                head: 121.0,
                head_pattern: None,
            }],
            pipes: vec![
                Pipe::new("P1", "R1", "J1", 100.0, 150.0, 0.0015),
                Pipe::new("P2", "J1", "J2", 100.0, 100.0, 0.0015),
            ],
            ..Default::default()
        }
    }

    fn roughness_spec(id: &str) -> ParameterSpec {
        ParameterSpec {
            element_kind: ElementKind::Pipe,
            element_id: id.into(),
            parameter: ParameterKind::Roughness,
            lo: 0.001,
            hi: 0.01,
            prior: Prior::Uniform,
            group: Group::Pressure,
            source_rule_ids: vec!["r1".into()],
        }
    }

    #[test]
    fn empty_overlay_is_identity() {
        let m = two_pipe_model();
        let out = m
            .apply_parameters(&ParameterSpace::empty(), &ParameterVector::new(vec![]))
            .unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn overlay_sets_only_target() {
        let m = two_pipe_model();
        let space = ParameterSpace::new(vec![roughness_spec("P1")]).unwrap();
        let out = m
            .apply_parameters(&space, &ParameterVector::new(vec![0.0015]))
            .unwrap();
        assert_eq!(out.pipes[0].roughness, 0.0015);
        let mut expected = m.clone();
        expected.pipes[0].roughness = 0.0015;
        assert_eq!(out, expected);

        let space = ParameterSpace::new(vec![roughness_spec("P2")]).unwrap();
        let out = m
            .apply_parameters(&space, &ParameterVector::new(vec![0.005]))
            .unwrap();
        assert_eq!(out.pipes[1].roughness, 0.005);
        assert_eq!(m.pipes[1].roughness, 0.0015);
        assert_eq!(out.pipes[0], m.pipes[0]);
    }

    #[test]
    fn overlay_rejects_out_of_bounds() {
        let m = two_pipe_model();
        let space = ParameterSpace::new(vec![roughness_spec("P1")]).unwrap();
        let err = m
            .apply_parameters(&space, &ParameterVector::new(vec![0.5]))
            .unwrap_err();
        match err {
            OverlayError::OutOfBounds { label, .. } => assert_eq!(label, "pipe P1 roughness"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlay_rejects_missing_element() {
        let m = two_pipe_model();
        let space = ParameterSpace::new(vec![roughness_spec("P9")]).unwrap();
        let err = m
            .apply_parameters(&space, &ParameterVector::new(vec![0.002]))
            .unwrap_err();
        assert!(matches!(err, OverlayError::MissingElement(_)));
    }

    #[test]
    fn degrees_count_all_links() {
        let m = two_pipe_model();
        let d = m.node_degrees();
        assert_eq!(d["J1"], 2);
        assert_eq!(d["J2"], 1);
        assert_eq!(d["R1"], 1);
    }
}
