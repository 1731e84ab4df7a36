use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::hydraulics::{Quantity, SensorId, SensorSet, Series};
use crate::network::NetworkModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("timestamps of sensor {0} are not strictly increasing")]
    NotIncreasing(String),
    #[error("no measurements for sensor {0}")]
    Missing(String),
    #[error("sensor {sensor} is measured at t={time}s, which is not a multiple of the {step}s hydraulic step")]
    OffGrid { sensor: String, time: u64, step: u64 },
}

/// Observed series keyed by sensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementSet {
    series: BTreeMap<SensorId, Series>,
}

impl MeasurementSet {
    pub fn new(series: BTreeMap<SensorId, Series>) -> Self {
        Self { series }
    }

    pub fn series(&self) -> &BTreeMap<SensorId, Series> {
        &self.series
    }

    pub fn get(&self, id: &SensorId) -> Option<&Series> {
        self.series.get(id)
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Checks ordering, and that every sensor in `ids` has data.
    pub fn check(&self, ids: &[SensorId]) -> Result<(), MeasurementError> {
        for (id, s) in &self.series {
            if s.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(MeasurementError::NotIncreasing(id.to_string()));
            }
        }
        for id in ids {
            match self.series.get(id) {
                Some(s) if !s.is_empty() => {}
                _ => return Err(MeasurementError::Missing(id.to_string())),
            }
        }
        Ok(())
    }

    /// Sorted union of observation times over `ids`.
    pub fn times(&self, ids: &[SensorId]) -> Vec<u64> {
        let mut t: Vec<u64> = ids
            .iter()
            .filter_map(|id| self.series.get(id))
            .flat_map(|s| s.iter().map(|(t, _)| *t))
            .collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Long-format CSV shared with simulation output.
    pub fn to_csv(&self, model: &NetworkModel) -> String {
        let mut out = String::from("time_s,element_kind,element_id,quantity,value\n");
        let mut rows: Vec<(u64, &SensorId, f64)> = self
            .series
            .iter()
            .flat_map(|(id, s)| s.iter().map(move |(t, v)| (*t, id, *v)))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
        for (t, id, v) in rows {
            let kind = match id.quantity {
                Quantity::Pressure => "junction",
                Quantity::Flow if model.valve(&id.element).is_some() => "valve",
                Quantity::Flow => "pipe",
            };
            let _ = writeln!(out, "{t},{kind},{},{},{v}", id.element, id.quantity.as_str());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MeasurementError> {
        let mut series: BTreeMap<SensorId, Series> = BTreeMap::new();
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "time_s,element_kind,element_id,quantity,value" => {}
            Some((i, h)) => {
                return Err(MeasurementError::Syntax {
                    line: i + 1,
                    message: format!("unexpected header `{h}`"),
                })
            }
            None => return Ok(Self::default()),
        }
        for (i, line) in lines {
            let err = |message: String| MeasurementError::Syntax { line: i + 1, message };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(err(format!("expected 5 columns, found {}", cols.len())));
            }
            let t: u64 = cols[0].parse().map_err(|_| err(format!("bad time `{}`", cols[0])))?;
            let v: f64 = cols[4]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("bad value `{}`", cols[4])))?;
            let id = match (cols[3], cols[1]) {
                ("flow_lps", "pipe" | "valve" | "link") => SensorId::flow(cols[2]),
                ("pressure_m", "junction") => SensorId::pressure(cols[2]),
                (q, k) => return Err(err(format!("quantity `{q}` does not fit element kind `{k}`"))),
            };
            let s = series.entry(id.clone()).or_default();
            if s.last().is_some_and(|(last, _)| *last >= t) {
                return Err(err(format!("time {t} for {id} is not after the previous reading")));
            }
            s.push((t, v));
        }
        Ok(Self { series })
    }

    /// Only the sensors in `ids`.
    pub fn restricted(&self, ids: &[SensorId]) -> Self {
        Self {
            series: ids
                .iter()
                .filter_map(|id| self.series.get(id).map(|s| (id.clone(), s.clone())))
                .collect(),
        }
    }

    /// Keeps sensors declared in `sensors` (calibration or holdout).
    pub fn for_sensors(&self, sensors: &SensorSet) -> Self {
        self.restricted(&sensors.all_ids())
    }

    /// Folds a long record into one average week: each sample goes to the
    /// slot `(t mod week) / slot_s`, and each slot keeps the mean value.
    /// Slots without samples are dropped.
    pub fn average_week(&self, slot_s: u64) -> Self {
        const WEEK: u64 = 7 * 86_400;
        let slot = slot_s.max(1);
        let series = self
            .series
            .iter()
            .map(|(id, s)| {
                let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
                for &(t, v) in s {
                    let e = acc.entry((t % WEEK) / slot * slot).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
                (id.clone(), acc.into_iter().map(|(t, (sum, n))| (t, sum / n as f64)).collect())
            })
            .collect();
        Self { series }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut m = BTreeMap::new();
        m.insert(SensorId::flow("P1"), vec![(0, 1.5), (3600, -0.25)]);
        m.insert(SensorId::pressure("J2"), vec![(0, 40.0), (3600, 41.125)]);
        let set = MeasurementSet::new(m);
        let csv = set.to_csv(&NetworkModel::default());
        assert!(csv.contains("0,pipe,P1,flow_lps,1.5\n"));
        assert_eq!(MeasurementSet::from_csv(&csv).unwrap(), set);
        assert_eq!(set.times(&[SensorId::flow("P1")]), vec![0, 3600]);
    }

    #[test]
    fn rejects_disorder_and_kind_mismatch() {
        let h = "time_s,element_kind,element_id,quantity,value\n";
        let e = MeasurementSet::from_csv(&format!("{h}10,pipe,P1,flow_lps,1\n5,pipe,P1,flow_lps,1\n")).unwrap_err();
        assert!(matches!(e, MeasurementError::Syntax { line: 3, .. }));
        let e = MeasurementSet::from_csv(&format!("{h}0,junction,P1,flow_lps,1\n")).unwrap_err();
        assert!(matches!(e, MeasurementError::Syntax { line: 2, .. }));
    }

    #[test]
    fn average_week_means_per_slot() {
        let week = 7 * 86_400;
        let mut m = BTreeMap::new();
        m.insert(SensorId::flow("P1"), vec![(0, 1.0), (1800, 3.0), (3600, 5.0), (week, 4.0), (week + 3600, 7.0)]);
        let avg = MeasurementSet::new(m).average_week(3600);
        assert_eq!(avg.series[&SensorId::flow("P1")], vec![(0, 8.0 / 3.0), (3600, 6.0)]);
    }

    #[test]
    fn check_reports_missing_sensor() {
        let set = MeasurementSet::default();
        assert_eq!(
            set.check(&[SensorId::pressure("J1")]),
            Err(MeasurementError::Missing("pressure_J1".into()))
        );
    }
}
