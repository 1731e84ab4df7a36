use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::network::NetworkModel;

use super::SimulationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    Flow,
    Pressure,
}

impl Quantity {
    /// Column token used in measurement and result CSVs.
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Flow => "flow_lps",
            Quantity::Pressure => "pressure_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SensorId {
    pub quantity: Quantity,
    pub element: String,
}

impl SensorId {
    pub fn flow(link: impl Into<String>) -> Self {
        Self {
            quantity: Quantity::Flow,
            element: link.into(),
        }
    }

    pub fn pressure(junction: impl Into<String>) -> Self {
        Self {
            quantity: Quantity::Pressure,
            element: junction.into(),
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.quantity {
            Quantity::Flow => write!(f, "flow_{}", self.element),
            Quantity::Pressure => write!(f, "pressure_{}", self.element),
        }
    }
}

/// (time s, value) pairs.
pub type Series = Vec<(u64, f64)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown sensor element {0}")]
    Unknown(String),
    #[error("sensor {0} is declared both for calibration and holdout")]
    Overlap(String),
}

/// Measured locations. Flow sensors read the signed link flow in the
/// link's from→to orientation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorSet {
    pub flow: Vec<String>,
    pub pressure: Vec<String>,
    pub holdout_flow: Vec<String>,
    pub holdout_pressure: Vec<String>,
}

impl SensorSet {
    pub fn calibration_ids(&self) -> Vec<SensorId> {
        self.flow
            .iter()
            .map(SensorId::flow)
            .chain(self.pressure.iter().map(SensorId::pressure))
            .collect()
    }

    pub fn holdout_ids(&self) -> Vec<SensorId> {
        self.holdout_flow
            .iter()
            .map(SensorId::flow)
            .chain(self.holdout_pressure.iter().map(SensorId::pressure))
            .collect()
    }

    pub fn all_ids(&self) -> Vec<SensorId> {
        let mut ids = self.calibration_ids();
        ids.extend(self.holdout_ids());
        ids
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
            && self.pressure.is_empty()
            && self.holdout_flow.is_empty()
            && self.holdout_pressure.is_empty()
    }

    /// Checks that every id exists and holdout sets are disjoint from calibration sets.
    pub fn check(&self, model: &NetworkModel) -> Result<(), SensorError> {
        for id in self.flow.iter().chain(&self.holdout_flow) {
            if model.pipe(id).is_none() && model.valve(id).is_none() {
                return Err(SensorError::Unknown(id.clone()));
            }
        }
        for id in self.pressure.iter().chain(&self.holdout_pressure) {
            if model.junction(id).is_none() {
                return Err(SensorError::Unknown(id.clone()));
            }
        }
        let flows: BTreeSet<&String> = self.flow.iter().collect();
        if let Some(id) = self.holdout_flow.iter().find(|id| flows.contains(id)) {
            return Err(SensorError::Overlap(id.clone()));
        }
        let pressures: BTreeSet<&String> = self.pressure.iter().collect();
        if let Some(id) = self.holdout_pressure.iter().find(|id| pressures.contains(id)) {
            return Err(SensorError::Overlap(id.clone()));
        }
        Ok(())
    }
}

/// Reads `sensor|holdout flow|pressure <id>` lines; `#` starts a comment.
pub fn parse_sensor_file(text: &str) -> Result<SensorSet, SensorError> {
    let mut set = SensorSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| SensorError::Syntax {
            line: idx + 1,
            message,
        };
        if parts.len() != 3 {
            return Err(err(format!("expected `<sensor|holdout> <flow|pressure> <id>`, found `{line}`")));
        }
        let target = match (parts[0], parts[1]) {
            ("sensor", "flow") => &mut set.flow,
            ("sensor", "pressure") => &mut set.pressure,
            ("holdout", "flow") => &mut set.holdout_flow,
            ("holdout", "pressure") => &mut set.holdout_pressure,
            _ => return Err(err(format!("unknown declaration `{} {}`", parts[0], parts[1]))),
        };
        let id = parts[2].to_string();
        if target.contains(&id) {
            return Err(err(format!("sensor `{id}` declared twice")));
        }
        target.push(id);
    }
    Ok(set)
}

pub fn write_sensor_file(set: &SensorSet) -> String {
    let mut out = String::new();
    for id in &set.flow {
        out.push_str(&format!("sensor flow {id}\n"));
    }
    for id in &set.pressure {
        out.push_str(&format!("sensor pressure {id}\n"));
    }
    for id in &set.holdout_flow {
        out.push_str(&format!("holdout flow {id}\n"));
    }
    for id in &set.holdout_pressure {
        out.push_str(&format!("holdout pressure {id}\n"));
    }
    out
}

/// Per-sensor series aligned to the result's timestamps.
pub fn extract_observations(
    result: &SimulationResult,
    sensors: &[SensorId],
) -> Result<BTreeMap<SensorId, Series>, SensorError> {
    let mut out = BTreeMap::new();
    let Some(first) = result.states.first() else {
        for s in sensors {
            out.insert(s.clone(), Vec::new());
        }
        return Ok(out);
    };
    let ids = &first.ids;
    for sensor in sensors {
        let series: Series = match sensor.quantity {
            Quantity::Flow => {
                let k = ids
                    .link(&sensor.element)
                    .ok_or_else(|| SensorError::Unknown(sensor.element.clone()))?;
                result
                    .timestamps
                    .iter()
                    .zip(&result.states)
                    .map(|(&t, s)| (t, s.link_flows[k]))
                    .collect()
            }
            Quantity::Pressure => {
                let k = ids
                    .junction(&sensor.element)
                    .ok_or_else(|| SensorError::Unknown(sensor.element.clone()))?;
                result
                    .timestamps
                    .iter()
                    .zip(&result.states)
                    .map(|(&t, s)| (t, s.junction_pressures[k]))
                    .collect()
            }
        };
        out.insert(sensor.clone(), series);
    }
    Ok(out)
}
