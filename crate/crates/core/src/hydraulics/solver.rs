use std::collections::HashMap;
use std::sync::Arc;

use crate::network::{validate::unsupplied_junctions, LinkStatus, NetworkModel};

use super::headloss::{emitter_flow, LinkLoss};
use super::sparse::SymbolicCholesky;
use super::{ElementIds, HydraulicError, HydraulicState};

pub const MAX_ITERATIONS: usize = 200;
/// Smallest link derivative used when forming the Jacobian, m per L/s.
pub const DERIVATIVE_FLOOR: f64 = 1e-8;
pub const FLOW_TOLERANCE: f64 = 1e-6;
pub const MASS_TOLERANCE: f64 = 1e-6;
pub const ENERGY_TOLERANCE: f64 = 1e-6;
const EMITTER_SLOPE_CAP: f64 = 1e8;

/// Nodal imbalance (L/s) and link energy error (m) at an iterate.
/// `mass_ratio` is the worst imbalance divided by its allowance
/// `MASS_TOLERANCE · max(1, |demand|)`.
#[derive(Debug, Clone, Copy)]
struct Residuals {
    mass_ratio: f64,
    mass_max: f64,
    mass_mean: f64,
    energy: f64,
}

impl Default for Residuals {
    fn default() -> Self {
        Self {
            mass_ratio: f64::INFINITY,
            mass_max: f64::INFINITY,
            mass_mean: f64::INFINITY,
            energy: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum End {
    Junction(usize),
    Fixed(usize),
}

#[derive(Debug, Clone)]
struct ActiveLink {
    /// Index into the state's link arrays (pipes first, then valves).
    slot: usize,
    from: End,
    to: End,
    loss: LinkLoss,
    /// Matrix slots for (from,from), (to,to), (from,to) where applicable.
    diag_from: Option<usize>,
    diag_to: Option<usize>,
    off: Option<usize>,
}

/// Demands and source heads for one quasi-static solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Loading {
    /// L/s, one per junction in model order.
    pub demands: Vec<f64>,
    /// m, one per reservoir in model order.
    pub source_heads: Vec<f64>,
}

impl Loading {
    /// Base demands and heads scaled by their pattern multipliers at time `t` (s).
    pub fn at_time(model: &NetworkModel, t: u64) -> Self {
        let step = model.options.pattern_step.max(1);
        let index = (t / step) as usize;
        let multiplier = |pattern: &Option<String>| -> f64 {
            match pattern.as_ref().and_then(|p| model.patterns.get(p)) {
                Some(values) if !values.is_empty() => values[index % values.len()],
                _ => 1.0,
            }
        };
        Self {
            demands: model
                .junctions
                .iter()
                .map(|j| j.base_demand * multiplier(&j.pattern_id))
                .collect(),
            source_heads: model
                .reservoirs
                .iter()
                .map(|r| r.head * multiplier(&r.head_pattern))
                .collect(),
        }
    }

    /// Every base demand scaled by the same multiplier, unpatterned heads.
    pub fn uniform(model: &NetworkModel, demand_multiplier: f64) -> Self {
        Self {
            demands: model
                .junctions
                .iter()
                .map(|j| j.base_demand * demand_multiplier)
                .collect(),
            source_heads: model.reservoirs.iter().map(|r| r.head).collect(),
        }
    }
}

/// Global-gradient solver bound to one network topology. Construction
/// does the symbolic work; [`solve`](Self::solve) may be called repeatedly
/// with different loadings.
#[derive(Debug, Clone)]
pub struct HydraulicSolver {
    ids: Arc<ElementIds>,
    elevations: Vec<f64>,
    emitter_coeffs: Vec<f64>,
    emitter_exponent: f64,
    links: Vec<ActiveLink>,
    n_links: usize,
    symbolic: SymbolicCholesky,
    /// Diagonal matrix slot per junction.
    diag: Vec<usize>,
    initial_flows: Vec<f64>,
}

impl HydraulicSolver {
    pub fn new(model: &NetworkModel) -> Result<Self, HydraulicError> {
        if model.reservoirs.is_empty() {
            return Err(HydraulicError::NoSource);
        }
        if let Some(id) = unsupplied_junctions(model).first() {
            return Err(HydraulicError::Disconnected(id.to_string()));
        }
        let ids = Arc::new(ElementIds::from_model(model));
        let junction_of: HashMap<&str, usize> = model.junction_index();
        let reservoir_of: HashMap<&str, usize> = model
            .reservoirs
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let end = |id: &str| -> Result<End, HydraulicError> {
            if let Some(&j) = junction_of.get(id) {
                Ok(End::Junction(j))
            } else if let Some(&r) = reservoir_of.get(id) {
                Ok(End::Fixed(r))
            } else {
                Err(HydraulicError::UnknownNode(id.to_string()))
            }
        };

        let mut links = Vec::new();
        let mut initial_flows = Vec::new();
        for (slot, pipe) in model.pipes.iter().enumerate() {
            if pipe.status == LinkStatus::Open {
                let loss = LinkLoss::for_pipe(pipe, model.options.headloss)?;
                links.push((slot, end(&pipe.from)?, end(&pipe.to)?, loss, pipe.diameter));
            }
        }
        for (k, valve) in model.valves.iter().enumerate() {
            if valve.status == LinkStatus::Open {
                let loss = LinkLoss::for_valve(valve)?;
                let slot = model.pipes.len() + k;
                links.push((slot, end(&valve.from)?, end(&valve.to)?, loss, valve.diameter));
            }
        }

        let n = model.junctions.len();
        let edges: Vec<(usize, usize)> = links
            .iter()
            .filter_map(|(_, a, b, _, _)| match (a, b) {
                (End::Junction(i), End::Junction(j)) => Some((*i, *j)),
                _ => None,
            })
            .collect();
        let symbolic = SymbolicCholesky::new(n, &edges);
        let diag: Vec<usize> = (0..n).map(|i| symbolic.position(i, i).unwrap()).collect();

        let active = links
            .into_iter()
            .map(|(slot, from, to, loss, diameter_mm)| {
                // Start from a velocity of 0.3 m/s.
                let d = diameter_mm / 1000.0;
                initial_flows.push(0.3 * std::f64::consts::PI * d * d / 4.0 * 1000.0);
                let jpos = |e: End| match e {
                    End::Junction(i) => Some(diag[i]),
                    End::Fixed(_) => None,
                };
                let off = match (from, to) {
                    (End::Junction(i), End::Junction(j)) => symbolic.position(i, j),
                    _ => None,
                };
                ActiveLink {
                    slot,
                    from,
                    to,
                    loss,
                    diag_from: jpos(from),
                    diag_to: jpos(to),
                    off,
                }
            })
            .collect();

        Ok(Self {
            ids,
            elevations: model.junctions.iter().map(|j| j.elevation).collect(),
            emitter_coeffs: model.junctions.iter().map(|j| j.emitter_coeff).collect(),
            emitter_exponent: model.options.emitter_exponent,
            links: active,
            n_links: model.pipes.len() + model.valves.len(),
            symbolic,
            diag,
            initial_flows,
        })
    }

    pub fn ids(&self) -> &Arc<ElementIds> {
        &self.ids
    }

    /// Newton iteration on nodal heads. Returns a state with
    /// `converged == false` when the iteration budget runs out.
    pub fn solve(&self, loading: &Loading) -> Result<HydraulicState, HydraulicError> {
        let n = self.elevations.len();
        let fixed = &loading.source_heads;
        let start_head = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut heads = vec![start_head; n];
        let mut flows: Vec<f64> = self.initial_flows.clone();
        let mut values = vec![0.0; self.symbolic.nnz()];
        let mut rhs = vec![0.0; n];
        let mut conductance = vec![0.0; self.links.len()];
        let mut intercept = vec![0.0; self.links.len()];
        let mut work = Vec::new();
        let head_of = |heads: &[f64], e: End| match e {
            End::Junction(i) => heads[i],
            End::Fixed(r) => fixed[r],
        };

        let mut iterations = 0;
        let mut converged = false;
        let mut report = Residuals::default();
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            values.iter_mut().for_each(|v| *v = 0.0);
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = -loading.demands[i];
            }
            for (k, link) in self.links.iter().enumerate() {
                let (h, dh) = link.loss.evaluate(flows[k]);
                let p = 1.0 / dh.max(DERIVATIVE_FLOOR);
                let y = flows[k] - p * h;
                conductance[k] = p;
                intercept[k] = y;
                if let Some(d) = link.diag_from {
                    values[d] += p;
                }
                if let Some(d) = link.diag_to {
                    values[d] += p;
                }
                if let Some(o) = link.off {
                    values[o] -= p;
                }
                match link.from {
                    End::Junction(i) => rhs[i] -= y,
                    End::Fixed(r) => {
                        if let End::Junction(j) = link.to {
                            rhs[j] += p * fixed[r];
                        }
                    }
                }
                match link.to {
                    End::Junction(j) => rhs[j] += y,
                    End::Fixed(r) => {
                        if let End::Junction(i) = link.from {
                            rhs[i] += p * fixed[r];
                        }
                    }
                }
            }
            for i in 0..n {
                let c = self.emitter_coeffs[i];
                if c > 0.0 {
                    let pressure = heads[i] - self.elevations[i];
                    let e = emitter_flow(pressure, c, self.emitter_exponent);
                    let slope = if pressure > 0.0 {
                        (self.emitter_exponent * e / pressure).min(EMITTER_SLOPE_CAP)
                    } else {
                        0.0
                    };
                    values[self.diag[i]] += slope;
                    rhs[i] += -e + slope * heads[i];
                }
            }

            if let Err(e) = self.symbolic.factor(&mut values, &mut work) {
                return Err(HydraulicError::Singular(self.ids.junctions[e.index].clone()));
            }
            self.symbolic.solve(&values, &mut rhs, &mut work);
            if rhs.iter().any(|h| !h.is_finite()) {
                break;
            }
            heads.copy_from_slice(&rhs);

            let mut change = 0.0;
            let mut total = 0.0;
            for (k, link) in self.links.iter().enumerate() {
                let dh = head_of(&heads, link.from) - head_of(&heads, link.to);
                let q = intercept[k] + conductance[k] * dh;
                change += (q - flows[k]).abs();
                total += q.abs();
                flows[k] = q;
            }
            let relative = if total > 0.0 { change / total } else { change };
            if relative < FLOW_TOLERANCE {
                report = self.residuals(&heads, &flows, loading);
                if report.mass_ratio < 1.0 && report.energy < ENERGY_TOLERANCE {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            report = self.residuals(&heads, &flows, loading);
        }

        let emitter_flows: Vec<f64> = (0..n)
            .map(|i| {
                emitter_flow(
                    heads[i] - self.elevations[i],
                    self.emitter_coeffs[i],
                    self.emitter_exponent,
                )
            })
            .collect();
        let mut link_flows = vec![0.0; self.n_links];
        for (k, link) in self.links.iter().enumerate() {
            link_flows[link.slot] = flows[k];
        }
        let pressures = heads
            .iter()
            .zip(&self.elevations)
            .map(|(h, z)| h - z)
            .collect();
        Ok(HydraulicState {
            ids: self.ids.clone(),
            junction_heads: heads,
            reservoir_heads: fixed.clone(),
            junction_pressures: pressures,
            link_flows,
            emitter_flows,
            iterations,
            converged,
            max_mass_residual: report.mass_max,
            mean_mass_residual: report.mass_mean,
            max_energy_residual: report.energy,
        })
    }

    fn residuals(&self, heads: &[f64], flows: &[f64], loading: &Loading) -> Residuals {
        let n = heads.len();
        let fixed = &loading.source_heads;
        let mut balance: Vec<f64> = (0..n)
            .map(|i| {
                -loading.demands[i]
                    - emitter_flow(
                        heads[i] - self.elevations[i],
                        self.emitter_coeffs[i],
                        self.emitter_exponent,
                    )
            })
            .collect();
        let mut energy: f64 = 0.0;
        for (k, link) in self.links.iter().enumerate() {
            let q = flows[k];
            if let End::Junction(i) = link.from {
                balance[i] -= q;
            }
            if let End::Junction(j) = link.to {
                balance[j] += q;
            }
            let hf = match link.from {
                End::Junction(i) => heads[i],
                End::Fixed(r) => fixed[r],
            };
            let ht = match link.to {
                End::Junction(j) => heads[j],
                End::Fixed(r) => fixed[r],
            };
            let residual = (hf - ht - link.loss.evaluate(q).0).abs();
            energy = energy.max(residual);
        }
        let mass_ratio = balance
            .iter()
            .zip(&loading.demands)
            .map(|(b, d)| b.abs() / (MASS_TOLERANCE * d.abs().max(1.0)))
            .fold(0.0, f64::max);
        let mass_max = balance.iter().map(|b| b.abs()).fold(0.0, f64::max);
        let mass_mean = if n == 0 {
            0.0
        } else {
            balance.iter().map(|b| b.abs()).sum::<f64>() / n as f64
        };
        Residuals {
            mass_ratio,
            mass_max,
            mass_mean,
            energy,
        }
    }
}

/// One steady-state solve of `model` under `loading`.
pub fn solve_steady(model: &NetworkModel, loading: &Loading) -> Result<HydraulicState, HydraulicError> {
    HydraulicSolver::new(model)?.solve(loading)
}
