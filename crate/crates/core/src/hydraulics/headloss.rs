//! Friction and local head-loss laws. Flows are in L/s, heads in m.

use std::f64::consts::PI;

use crate::network::{HeadlossFormula, Pipe, Valve};

use super::HydraulicError;

pub const GRAVITY: f64 = 9.81;
/// Water at 20 °C, m²/s.
pub const KINEMATIC_VISCOSITY: f64 = 1.004e-6;

const RE_LAMINAR: f64 = 2000.0;
const RE_TURBULENT: f64 = 4000.0;
const HW_EXPONENT: f64 = 1.852;

/// Head-loss law of a single link, with all lengths in SI metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkLoss {
    DarcyWeisbach {
        length: f64,
        diameter: f64,
        roughness: f64,
        minor_k: f64,
    },
    HazenWilliams {
        length: f64,
        diameter: f64,
        c: f64,
        minor_k: f64,
    },
    /// Valves: local loss only.
    Minor { diameter: f64, k: f64 },
}

impl LinkLoss {
    pub fn for_pipe(pipe: &Pipe, formula: HeadlossFormula) -> Result<Self, HydraulicError> {
        if !(pipe.length > 0.0) || !(pipe.diameter > 0.0) {
            return Err(HydraulicError::Geometry(pipe.id.clone()));
        }
        let diameter = pipe.diameter / 1000.0;
        Ok(match formula {
            HeadlossFormula::DarcyWeisbach => LinkLoss::DarcyWeisbach {
                length: pipe.length,
                diameter,
                roughness: pipe.roughness / 1000.0,
                minor_k: pipe.minor_loss_k,
            },
            HeadlossFormula::HazenWilliams => LinkLoss::HazenWilliams {
                length: pipe.length,
                diameter,
                c: pipe.roughness,
                minor_k: pipe.minor_loss_k,
            },
        })
    }

    pub fn for_valve(valve: &Valve) -> Result<Self, HydraulicError> {
        if !(valve.diameter > 0.0) {
            return Err(HydraulicError::Geometry(valve.id.clone()));
        }
        Ok(LinkLoss::Minor {
            diameter: valve.diameter / 1000.0,
            k: valve.loss_coeff_k,
        })
    }

    /// Signed head loss (m) and its derivative (m per L/s) at flow `q` (L/s).
    pub fn evaluate(&self, q: f64) -> (f64, f64) {
        let q_si = q / 1000.0;
        let abs = q_si.abs();
        let sign = q_si.signum();
        let (h, dh) = match *self {
            LinkLoss::DarcyWeisbach {
                length,
                diameter,
                roughness,
                minor_k,
            } => {
                let (hf, dhf) = darcy_weisbach(length, diameter, roughness, abs);
                let (hm, dhm) = minor(diameter, minor_k, abs);
                (hf + hm, dhf + dhm)
            }
            LinkLoss::HazenWilliams {
                length,
                diameter,
                c,
                minor_k,
            } => {
                let r = 10.667 * length / (c.powf(HW_EXPONENT) * diameter.powf(4.871));
                let hf = r * abs.powf(HW_EXPONENT);
                let dhf = if abs > 0.0 { HW_EXPONENT * hf / abs } else { 0.0 };
                let (hm, dhm) = minor(diameter, minor_k, abs);
                (hf + hm, dhf + dhm)
            }
            LinkLoss::Minor { diameter, k } => minor(diameter, k, abs),
        };
        let h = if q_si == 0.0 { 0.0 } else { sign * h };
        (h, dh / 1000.0)
    }
}

/// Head loss of a link at flow `q` (L/s).
pub fn headloss(loss: &LinkLoss, q: f64) -> f64 {
    loss.evaluate(q).0
}

fn minor(diameter: f64, k: f64, abs_q: f64) -> (f64, f64) {
    let m = k * 8.0 / (PI * PI * GRAVITY * diameter.powi(4));
    (m * abs_q * abs_q, 2.0 * m * abs_q)
}

fn swamee_jain(relative_roughness: f64, re: f64) -> (f64, f64) {
    // f and Re·df/dRe
    let u = relative_roughness / 3.7 + 5.74 * re.powf(-0.9);
    let x = u.log10();
    let f = 0.25 / (x * x);
    let re_df = 0.5 * 0.9 * 5.74 * re.powf(-0.9) / (x * x * x * u * std::f64::consts::LN_10);
    (f, re_df)
}

fn darcy_weisbach(length: f64, diameter: f64, roughness: f64, abs_q: f64) -> (f64, f64) {
    let re_per_q = 4.0 / (PI * diameter * KINEMATIC_VISCOSITY);
    let re = re_per_q * abs_q;
    if re <= RE_LAMINAR {
        let c = 128.0 * KINEMATIC_VISCOSITY * length / (PI * GRAVITY * diameter.powi(4));
        return (c * abs_q, c);
    }
    let k = 8.0 * length / (PI * PI * GRAVITY * diameter.powi(5));
    let (f, re_df) = if re >= RE_TURBULENT {
        swamee_jain(roughness / diameter, re)
    } else {
        let f_lo = 64.0 / RE_LAMINAR;
        let (f_hi, _) = swamee_jain(roughness / diameter, RE_TURBULENT);
        let slope = (f_hi - f_lo) / (RE_TURBULENT - RE_LAMINAR);
        (f_lo + slope * (re - RE_LAMINAR), slope * re)
    };
    let h = f * k * abs_q * abs_q;
    let dh = k * abs_q * (2.0 * f + re_df);
    (h, dh)
}

/// Leakage through an emitter: `coeff · p^exponent` for positive pressure.
pub fn emitter_flow(pressure: f64, coeff: f64, exponent: f64) -> f64 {
    if pressure <= 0.0 || coeff == 0.0 {
        0.0
    } else {
        coeff * pressure.powf(exponent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dw(roughness_mm: f64, k: f64) -> LinkLoss {
        LinkLoss::DarcyWeisbach {
            length: 100.0,
            diameter: 0.1,
            roughness: roughness_mm / 1000.0,
            minor_k: k,
        }
    }

    #[test]
    fn zero_flow_zero_loss() {
        assert_eq!(headloss(&dw(0.0015, 1.0), 0.0), 0.0);
        assert_eq!(headloss(&LinkLoss::Minor { diameter: 0.1, k: 3.0 }, 0.0), 0.0);
    }

    #[test]
    fn turbulent_reference_value() {
        // Standalone evaluation of Re, Swamee-Jain f and the D-W formula.
        let expected = 1.414026802741087;
        let h = headloss(&dw(0.0015, 0.0), 10.0);
        assert!((h - expected).abs() < 1e-9, "{h}");
    }

    #[test]
    fn transition_reference_value() {
        // Re = 3000, f linearly blended between 64/2000 and Swamee-Jain at 4000.
        let q = 0.23656192681531144;
        let h = headloss(&dw(0.0015, 0.0), q);
        assert!((h - 0.001677767988845662).abs() < 1e-12, "{h}");
    }

    #[test]
    fn hazen_williams_reference_value() {
        let loss = LinkLoss::HazenWilliams {
            length: 100.0,
            diameter: 0.1,
            c: 130.0,
            minor_k: 0.0,
        };
        assert!((headloss(&loss, 10.0) - 1.9055449885857152).abs() < 1e-9);
    }

    #[test]
    fn emitter_values() {
        assert_eq!(emitter_flow(-3.0, 2.0, 0.5), 0.0);
        assert_eq!(emitter_flow(0.0, 2.0, 0.5), 0.0);
        assert_eq!(emitter_flow(25.0, 0.0, 0.5), 0.0);
        assert_eq!(emitter_flow(25.0, 2.0, 0.5), 10.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let loss = dw(0.05, 2.0);
        for &q in &[0.05, 0.2, 0.3, 1.0, 5.0, 40.0] {
            let (_, d) = loss.evaluate(q);
            let eps = q * 1e-6;
            let fd = (headloss(&loss, q + eps) - headloss(&loss, q - eps)) / (2.0 * eps);
            assert!((d - fd).abs() <= 1e-5 * fd.abs().max(1e-12), "q={q} d={d} fd={fd}");
        }
    }

    proptest! {
        #[test]
        fn odd_symmetry(q in -200.0f64..200.0, eps in 1e-4f64..1.0, k in 0.0f64..10.0) {
            let loss = dw(eps, k);
            prop_assert_eq!(headloss(&loss, -q), -headloss(&loss, q));
        }

        #[test]
        fn strictly_increasing(q in 1e-3f64..200.0, dq in 1e-3f64..10.0, eps in 1e-4f64..1.0) {
            let loss = dw(eps, 0.5);
            prop_assert!(headloss(&loss, q + dq) > headloss(&loss, q));
            let hw = LinkLoss::HazenWilliams { length: 50.0, diameter: 0.2, c: 120.0, minor_k: 0.0 };
            prop_assert!(headloss(&hw, q + dq) > headloss(&hw, q));
        }
    }
}
