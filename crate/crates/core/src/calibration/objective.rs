use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::hydraulics::{SensorId, Series};

use super::MeasurementSet;

/// Smallest per-sensor standard deviation used for normalization.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Rmse,
    Nse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    PerSensorStd,
}

/// Goodness-of-fit measure; every variant is minimized (NSE is negated).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub normalization: Normalization,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Rmse,
            normalization: Normalization::PerSensorStd,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("sensor {0} has no data")]
    Empty(String),
    #[error("sensor {sensor}: simulated and observed timestamps differ")]
    Misaligned { sensor: String },
    #[error("no sensors to evaluate")]
    NoSensors,
}

impl FromStr for Objective {
    type Err = String;

    /// `rmse`, `nse`, `mae`, optionally suffixed `:raw` or `:std`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, n) = s.split_once(':').unwrap_or((s, "std"));
        let kind = match k {
            "rmse" => ObjectiveKind::Rmse,
            "nse" => ObjectiveKind::Nse,
            "mae" => ObjectiveKind::Mae,
            other => return Err(format!("unknown objective `{other}`")),
        };
        let normalization = match n {
            "raw" => Normalization::Raw,
            "std" => Normalization::PerSensorStd,
            other => return Err(format!("unknown normalization `{other}`")),
        };
        Ok(Self { kind, normalization })
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            ObjectiveKind::Rmse => "rmse",
            ObjectiveKind::Nse => "nse",
            ObjectiveKind::Mae => "mae",
        };
        let n = match self.normalization {
            Normalization::Raw => "raw",
            Normalization::PerSensorStd => "std",
        };
        write!(f, "{k}:{n}")
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

impl Objective {
    /// Value over sensors given as aligned (simulated, observed) slices.
    pub fn evaluate_pairs(&self, pairs: &[(&[f64], &[f64])]) -> Result<f64, ObjectiveError> {
        if pairs.is_empty() {
            return Err(ObjectiveError::NoSensors);
        }
        let mut sq = 0.0;
        let mut abs = 0.0;
        let mut count = 0usize;
        let mut nse_sum = 0.0;
        for (k, (sim, obs)) in pairs.iter().enumerate() {
            if obs.is_empty() {
                return Err(ObjectiveError::Empty(format!("#{k}")));
            }
            if sim.len() != obs.len() {
                return Err(ObjectiveError::Misaligned { sensor: format!("#{k}") });
            }
            let scale = match self.normalization {
                Normalization::Raw => 1.0,
                Normalization::PerSensorStd => std_dev(obs).max(STD_FLOOR),
            };
            let mut ss_res = 0.0;
            for (s, o) in sim.iter().zip(obs.iter()) {
                let r = (s - o) / scale;
                sq += r * r;
                abs += r.abs();
                ss_res += (s - o) * (s - o);
            }
            count += obs.len();
            if self.kind == ObjectiveKind::Nse {
                let m = mean(obs);
                let ss_tot: f64 = obs.iter().map(|o| (o - m).powi(2)).sum();
                nse_sum += 1.0 - ss_res / ss_tot.max(f64::MIN_POSITIVE);
            }
        }
        Ok(match self.kind {
            ObjectiveKind::Rmse => (sq / count as f64).sqrt(),
            ObjectiveKind::Mae => abs / count as f64,
            ObjectiveKind::Nse => -(nse_sum / pairs.len() as f64),
        })
    }

    /// Value over `ids`, matching simulated and observed series by timestamp.
    pub fn evaluate(
        &self,
        simulated: &BTreeMap<SensorId, Series>,
        observed: &MeasurementSet,
        ids: &[SensorId],
    ) -> Result<f64, ObjectiveError> {
        let mut sims = Vec::with_capacity(ids.len());
        let mut obss = Vec::with_capacity(ids.len());
        for id in ids {
            let obs = observed
                .get(id)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| ObjectiveError::Empty(id.to_string()))?;
            let sim = simulated.get(id).ok_or_else(|| ObjectiveError::Empty(id.to_string()))?;
            let values = align(sim, obs).ok_or_else(|| ObjectiveError::Misaligned { sensor: id.to_string() })?;
            sims.push(values);
            obss.push(obs.iter().map(|(_, v)| *v).collect::<Vec<f64>>());
        }
        let pairs: Vec<(&[f64], &[f64])> = sims.iter().zip(&obss).map(|(s, o)| (s.as_slice(), o.as_slice())).collect();
        self.evaluate_pairs(&pairs)
    }
}

/// Simulated values at exactly the observed timestamps.
fn align(sim: &Series, obs: &Series) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(obs.len());
    let mut j = 0;
    for (t, _) in obs {
        while j < sim.len() && sim[j].0 < *t {
            j += 1;
        }
        if j < sim.len() && sim[j].0 == *t {
            out.push(sim[j].1);
        } else {
            return None;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RAW_RMSE: Objective = Objective {
        kind: ObjectiveKind::Rmse,
        normalization: Normalization::Raw,
    };

    #[test]
    fn unit_offset() {
        let obs = [1.0, 2.0, 3.0];
        let sim = [2.0, 3.0, 4.0];
        assert_eq!(RAW_RMSE.evaluate_pairs(&[(&sim, &obs)]).unwrap(), 1.0);
        let mae = Objective {
            kind: ObjectiveKind::Mae,
            ..RAW_RMSE
        };
        assert_eq!(mae.evaluate_pairs(&[(&sim, &obs)]).unwrap(), 1.0);
    }

    #[test]
    fn perfect_fit() {
        let obs = [1.0, 4.0, 2.0];
        for kind in [ObjectiveKind::Rmse, ObjectiveKind::Mae] {
            let o = Objective {
                kind,
                normalization: Normalization::PerSensorStd,
            };
            assert_eq!(o.evaluate_pairs(&[(&obs, &obs)]).unwrap(), 0.0);
        }
        let nse = Objective {
            kind: ObjectiveKind::Nse,
            normalization: Normalization::Raw,
        };
        assert_eq!(nse.evaluate_pairs(&[(&obs, &obs)]).unwrap(), -1.0);
    }

    #[test]
    fn misaligned_times_are_errors() {
        let mut sim = BTreeMap::new();
        sim.insert(SensorId::flow("P1"), vec![(0, 1.0), (900, 2.0)]);
        let mut obs = BTreeMap::new();
        obs.insert(SensorId::flow("P1"), vec![(0, 1.0), (600, 2.0)]);
        let err = RAW_RMSE
            .evaluate(&sim, &MeasurementSet::new(obs), &[SensorId::flow("P1")])
            .unwrap_err();
        assert!(matches!(err, ObjectiveError::Misaligned { .. }));
        assert_eq!(RAW_RMSE.evaluate_pairs(&[]), Err(ObjectiveError::NoSensors));
    }

    #[test]
    fn simulation_sampled_at_observation_times() {
        let mut sim = BTreeMap::new();
        sim.insert(SensorId::flow("P1"), vec![(0, 1.0), (900, 5.0), (1800, 3.0)]);
        let mut obs = BTreeMap::new();
        obs.insert(SensorId::flow("P1"), vec![(0, 1.0), (1800, 2.0)]);
        let v = RAW_RMSE
            .evaluate(&sim, &MeasurementSet::new(obs), &[SensorId::flow("P1")])
            .unwrap();
        assert!((v - (0.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parse_and_display() {
        for s in ["rmse:raw", "nse:std", "mae:std"] {
            assert_eq!(s.parse::<Objective>().unwrap().to_string(), s);
        }
        assert_eq!("rmse".parse::<Objective>().unwrap(), Objective::default());
    }

    proptest! {
        #[test]
        fn rmse_and_mae_ignore_pair_order(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40), seed in 0usize..1000) {
            let (sim, obs): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.rotate_left(seed % v.len());
            let sim2: Vec<f64> = idx.iter().map(|&i| sim[i]).collect();
            let obs2: Vec<f64> = idx.iter().map(|&i| obs[i]).collect();
            for kind in [ObjectiveKind::Rmse, ObjectiveKind::Mae] {
                for normalization in [Normalization::Raw, Normalization::PerSensorStd] {
                    let o = Objective { kind, normalization };
                    let a = o.evaluate_pairs(&[(&sim, &obs)]).unwrap();
                    let b = o.evaluate_pairs(&[(&sim2, &obs2)]).unwrap();
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }
}
