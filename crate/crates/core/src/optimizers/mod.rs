//! Bound-constrained black-box optimizers behind one ask/tell contract, and
//! the method comparison that pits them against ES-NEAT on a calibration
//! problem.

mod compare;
mod methods;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use compare::{compare, curve_csv, CompareConfig, CompareError, Comparison, ComparisonRow, Contender, PRE_CALIBRATION};
pub use methods::{GeneticAlgorithm, LatinHypercube, MonteCarlo, ParticleSwarm, SceUa, SimulatedAnnealing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    MonteCarlo,
    LatinHypercube,
    SimulatedAnnealing,
    Pso,
    SceUa,
    Ga,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MonteCarlo,
        Method::LatinHypercube,
        Method::SimulatedAnnealing,
        Method::Pso,
        Method::SceUa,
        Method::Ga,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MonteCarlo => "monte_carlo",
            Method::LatinHypercube => "latin_hypercube",
            Method::SimulatedAnnealing => "simulated_annealing",
            Method::Pso => "pso",
            Method::SceUa => "sceua",
            Method::Ga => "ga",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mc" | "monte_carlo" => Method::MonteCarlo,
            "lhs" | "latin_hypercube" => Method::LatinHypercube,
            "sa" | "simulated_annealing" => Method::SimulatedAnnealing,
            "pso" => Method::Pso,
            "sceua" | "sce-ua" | "sce_ua" => Method::SceUa,
            "ga" => Method::Ga,
            other => return Err(format!("unknown method `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaParams {
    /// Initial temperature as a fraction of the first objective value.
    pub initial_temperature: f64,
    /// Geometric cooling factor applied after every evaluation.
    pub cooling_rate: f64,
    /// Initial proposal standard deviation as a fraction of each box width;
    /// it shrinks with the square root of the temperature.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceParams {
    pub complexes: usize,
    /// Points per complex; 0 means 2n + 1.
    pub complex_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub population: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of box width at the start;
    /// it decays linearly to 1% of that over the budget.
    pub mutation_sigma: f64,
    pub tournament_size: usize,
    pub blend_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerParams {
    pub sa: SaParams,
    pub pso: PsoParams,
    pub sce: SceParams,
    pub ga: GaParams,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            sa: SaParams {
                initial_temperature: 0.1,
                cooling_rate: 0.993,
                step: 0.1,
            },
            pso: PsoParams {
                swarm_size: 20,
                inertia: 0.7298,
                cognitive: 1.49618,
                social: 1.49618,
            },
            sce: SceParams {
                complexes: 2,
                complex_size: 0,
            },
            ga: GaParams {
                population: 40,
                crossover_rate: 0.9,
                mutation_rate: 0.2,
                mutation_sigma: 0.1,
                tournament_size: 3,
                blend_alpha: 0.5,
            },
        }
    }
}

impl OptimizerParams {
    pub fn check(&self) -> Result<(), OptimizerError> {
        let bad = |what: &str| Err(OptimizerError::Parameter(what.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.sa.initial_temperature > 0.0) {
            return bad("sa.initial_temperature must be positive");
        }
        if !(self.sa.cooling_rate > 0.0 && self.sa.cooling_rate < 1.0) {
            return bad("sa.cooling_rate must lie in (0, 1)");
        }
        if !(self.sa.step > 0.0) {
            return bad("sa.step must be positive");
        }
        if self.pso.swarm_size < 2 {
            return bad("pso.swarm_size must be at least 2");
        }
        if !(self.pso.inertia >= 0.0 && self.pso.cognitive >= 0.0 && self.pso.social >= 0.0) {
            return bad("pso weights must be nonnegative");
        }
        if self.sce.complexes < 1 {
            return bad("sce.complexes must be at least 1");
        }
        if self.sce.complex_size == 1 {
            return bad("sce.complex_size must be 0 or at least 2");
        }
        if self.ga.population < 2 || self.ga.tournament_size < 1 {
            return bad("ga.population must be at least 2 and ga.tournament_size at least 1");
        }
        if !(unit(self.ga.crossover_rate) && unit(self.ga.mutation_rate)) {
            return bad("ga rates must lie in [0, 1]");
        }
        if !(self.ga.mutation_sigma >= 0.0 && self.ga.blend_alpha >= 0.0) {
            return bad("ga.mutation_sigma and ga.blend_alpha must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub method: Method,
    pub params: OptimizerParams,
    /// Maximum objective evaluations.
    pub budget: usize,
    pub seed: u64,
}

impl OptimizerSpec {
    pub fn new(method: Method, budget: usize, seed: u64) -> Self {
        Self {
            method,
            params: OptimizerParams::default(),
            budget,
            seed,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("no bounds given")]
    EmptyBounds,
    #[error("bounds of dimension {0} are inverted or not finite")]
    BadBounds(usize),
    #[error("budget must be at least 1")]
    Budget,
    #[error("invalid optimizer parameter: {0}")]
    Parameter(String),
}

/// Objective aborted the run; `partial` holds the evaluations recorded before.
#[derive(Debug, Error)]
#[error("objective failed after {} evaluations: {source}", partial.len())]
pub struct OptimizeError<E: std::error::Error + 'static> {
    pub partial: EvaluationTrace,
    #[source]
    pub source: E,
}

#[derive(Debug, Error)]
pub enum RunError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Setup(#[from] OptimizerError),
    #[error(transparent)]
    Objective(OptimizeError<E>),
}

/// One ask/tell optimizer. `ask` proposes a batch (empty once the method
/// has nothing more to propose); `tell` receives the batch's values in
/// order. A shorter `tell` than `ask` is allowed only at the end of a run.
pub trait Optimizer: Send {
    fn ask(&mut self) -> Vec<Vec<f64>>;
    fn tell(&mut self, values: &[f64]);
}

pub fn build(spec: &OptimizerSpec, bounds: &[(f64, f64)]) -> Result<Box<dyn Optimizer>, OptimizerError> {
    check_bounds(bounds)?;
    if spec.budget == 0 {
        return Err(OptimizerError::Budget);
    }
    spec.params.check()?;
    let b = bounds.to_vec();
    let rng = crate::rng::derive(spec.seed, 0x4F50_5431 + spec.method as u64);
    Ok(match spec.method {
        Method::MonteCarlo => Box::new(MonteCarlo::new(b, rng)),
        Method::LatinHypercube => Box::new(LatinHypercube::new(b, spec.budget, rng)),
        Method::SimulatedAnnealing => Box::new(SimulatedAnnealing::new(b, spec.params.sa.clone(), rng)),
        Method::Pso => Box::new(ParticleSwarm::new(b, spec.params.pso.clone(), rng)),
        Method::SceUa => Box::new(SceUa::new(b, spec.params.sce.clone(), rng)),
        Method::Ga => Box::new(GeneticAlgorithm::new(b, spec.params.ga.clone(), spec.budget, rng)),
    })
}

pub fn check_bounds(bounds: &[(f64, f64)]) -> Result<(), OptimizerError> {
    if bounds.is_empty() {
        return Err(OptimizerError::EmptyBounds);
    }
    match bounds.iter().position(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        Some(i) => Err(OptimizerError::BadBounds(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub index: usize,
    pub candidate: Vec<f64>,
    pub value: f64,
}

/// Every evaluation in logical order with the best-so-far curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationTrace {
    pub entries: Vec<TraceEntry>,
    pub best_so_far: Vec<f64>,
}

impl EvaluationTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&TraceEntry> {
        self.entries.iter().min_by(|a, b| a.value.total_cmp(&b.value))
    }

    pub fn final_best(&self) -> f64 {
        self.best_so_far.last().copied().unwrap_or(f64::INFINITY)
    }

    fn push(&mut self, candidate: Vec<f64>, value: f64) {
        let best = self.final_best().min(value);
        self.entries.push(TraceEntry {
            index: self.entries.len(),
            candidate,
            value,
        });
        self.best_so_far.push(best);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Runs `spec` for at most `spec.budget` evaluations. Batches are evaluated
/// in parallel on the current rayon pool; the trace keeps proposal order.
pub fn optimize<E, F>(spec: &OptimizerSpec, bounds: &[(f64, f64)], objective: F) -> Result<EvaluationTrace, RunError<E>>
where
    E: std::error::Error + Send + 'static,
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
{
    let mut opt = build(spec, bounds)?;
    let mut trace = EvaluationTrace::default();
    while trace.len() < spec.budget {
        let mut batch = opt.ask();
        if batch.is_empty() {
            break;
        }
        batch.truncate(spec.budget - trace.len());
        for x in &mut batch {
            for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
                *v = v.clamp(*lo, *hi);
            }
        }
        let results: Vec<Result<f64, E>> = batch.par_iter().map(|x| objective(x)).collect();
        let mut values = Vec::with_capacity(batch.len());
        for (x, r) in batch.into_iter().zip(results) {
            match r {
                Ok(v) => {
                    let v = sanitize(v);
                    values.push(v);
                    trace.push(x, v);
                }
                Err(source) => {
                    return Err(RunError::Objective(OptimizeError { partial: trace, source }));
                }
            }
        }
        opt.tell(&values);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests;
