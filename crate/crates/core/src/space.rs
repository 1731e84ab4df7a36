//! Calibratable parameter descriptors shared by the rule compiler, the
//! network overlay and the calibration loop.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Element families a parameter can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    Junction,
    Pipe,
    Valve,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Junction => "junction",
            ElementKind::Pipe => "pipe",
            ElementKind::Valve => "valve",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "junction" => Ok(ElementKind::Junction),
            "pipe" => Ok(ElementKind::Pipe),
            "valve" => Ok(ElementKind::Valve),
            other => Err(format!("unknown element kind `{other}`")),
        }
    }
}

/// Calibratable physical quantities. Declaration order is the canonical
/// ordering used for parameter spaces and genome output slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParameterKind {
    Roughness,
    MinorLoss,
    BaseDemand,
    LeakCoeff,
    ValveLoss,
    /// Reserved in the rule grammar; never compiled into a space.
    Diameter,
}

impl ParameterKind {
    pub const CALIBRATABLE: [ParameterKind; 5] = [
        ParameterKind::Roughness,
        ParameterKind::MinorLoss,
        ParameterKind::BaseDemand,
        ParameterKind::LeakCoeff,
        ParameterKind::ValveLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParameterKind::Roughness => "roughness",
            ParameterKind::MinorLoss => "minor_loss",
            ParameterKind::BaseDemand => "base_demand",
            ParameterKind::LeakCoeff => "leak_coeff",
            ParameterKind::ValveLoss => "valve_loss",
            ParameterKind::Diameter => "diameter",
        }
    }

    /// The element family this parameter lives on.
    pub fn target(self) -> ElementKind {
        match self {
            ParameterKind::Roughness | ParameterKind::MinorLoss | ParameterKind::Diameter => {
                ElementKind::Pipe
            }
            ParameterKind::BaseDemand | ParameterKind::LeakCoeff => ElementKind::Junction,
            ParameterKind::ValveLoss => ElementKind::Valve,
        }
    }

    /// Group used when a rule does not name one: demand and leakage drive
    /// flows, friction and local losses drive pressures.
    pub fn default_group(self) -> Group {
        match self {
            ParameterKind::BaseDemand | ParameterKind::LeakCoeff => Group::Flow,
            _ => Group::Pressure,
        }
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParameterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "roughness" => Ok(ParameterKind::Roughness),
            "minor_loss" => Ok(ParameterKind::MinorLoss),
            "base_demand" => Ok(ParameterKind::BaseDemand),
            "leak_coeff" => Ok(ParameterKind::LeakCoeff),
            "valve_loss" => Ok(ParameterKind::ValveLoss),
            "diameter" => Ok(ParameterKind::Diameter),
            other => Err(format!("unknown parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Flow,
    Pressure,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Flow => "flow",
            Group::Pressure => "pressure",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow" => Ok(Group::Flow),
            "pressure" => Ok(Group::Pressure),
            other => Err(format!("unknown group `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Uniform,
    Triangular { mode: f64 },
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Uniform => f.write_str("uniform"),
            Prior::Triangular { mode } => write!(f, "triangular {mode}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub element_kind: ElementKind,
    pub element_id: String,
    pub parameter: ParameterKind,
    pub lo: f64,
    pub hi: f64,
    pub prior: Prior,
    pub group: Group,
    pub source_rule_ids: Vec<String>,
}

impl ParameterSpec {
    pub fn label(&self) -> String {
        format!("{} {} {}", self.element_kind, self.element_id, self.parameter)
    }

    /// Neutral starting value: the prior's mode, or the interval midpoint.
    pub fn neutral(&self) -> f64 {
        match self.prior {
            Prior::Uniform => 0.5 * (self.lo + self.hi),
            Prior::Triangular { mode } => mode,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo && value <= self.hi
    }
}

/// Ordered list of calibratable parameters.
///
/// Specs are kept sorted by (element kind, element id, parameter) and no
/// (element, parameter) pair appears twice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("duplicate parameter {0}")]
    Duplicate(String),
    #[error("invalid bounds for {label}: [{lo}, {hi}]")]
    Bounds { label: String, lo: f64, hi: f64 },
}

impl ParameterSpace {
    pub fn new(mut specs: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        specs.sort_by(|a, b| {
            (a.element_kind, &a.element_id, a.parameter).cmp(&(
                b.element_kind,
                &b.element_id,
                b.parameter,
            ))
        });
        for pair in specs.windows(2) {
            if pair[0].element_kind == pair[1].element_kind
                && pair[0].element_id == pair[1].element_id
                && pair[0].parameter == pair[1].parameter
            {
                return Err(SpaceError::Duplicate(pair[1].label()));
            }
        }
        for spec in &specs {
            if !(spec.lo <= spec.hi) || !spec.lo.is_finite() || !spec.hi.is_finite() {
                return Err(SpaceError::Bounds {
                    label: spec.label(),
                    lo: spec.lo,
                    hi: spec.hi,
                });
            }
        }
        Ok(Self { specs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Indices of the specs belonging to `group`, in space order.
    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        (0..self.specs.len())
            .filter(|&i| self.specs[i].group == group)
            .collect()
    }

    /// Distinct parameter kinds present in `group`, canonical order.
    pub fn group_kinds(&self, group: Group) -> Vec<ParameterKind> {
        let mut kinds: Vec<ParameterKind> = self
            .specs
            .iter()
            .filter(|s| s.group == group)
            .map(|s| s.parameter)
            .collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.lo).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.hi).collect()
    }

    pub fn neutral_vector(&self) -> ParameterVector {
        ParameterVector::new(self.specs.iter().map(ParameterSpec::neutral).collect())
    }
}

/// One value per spec of an associated [`ParameterSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
