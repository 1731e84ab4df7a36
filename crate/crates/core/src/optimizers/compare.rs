use std::fmt::Write as _;

use thiserror::Error;

use super::{optimize, Method, OptimizerParams, OptimizerSpec, RunError};
use crate::calibration::{calibrate, CalibrationError, CalibrationProblem, LoopConfig, SeedGenomes};
use crate::neat::NeatConfig;
use crate::network::OverlayError;
use crate::space::ParameterVector;

/// Row label of the uncalibrated model.
pub const PRE_CALIBRATION: &str = "pre-calibration";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareConfig {
    /// Objective evaluations per method.
    pub budget: usize,
    pub seed: u64,
    /// Methods whose final best falls below this are marked accepted.
    pub acceptance_threshold: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            seed: 1,
            acceptance_threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contender {
    Baseline(Method),
    EsNeat,
}

impl Contender {
    pub fn name(self) -> &'static str {
        match self {
            Contender::Baseline(m) => m.as_str(),
            Contender::EsNeat => "es-neat",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "es-neat" | "esneat" | "neat" => Ok(Contender::EsNeat),
            other => other.parse().map(Contender::Baseline),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub final_best: f64,
    pub evaluations: usize,
    pub accepted: bool,
    /// (evaluation count, best so far).
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Sorted ascending by final best; includes the pre-calibration row.
    pub rows: Vec<ComparisonRow>,
    pub acceptance_threshold: f64,
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("no methods to compare")]
    NoMethods,
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("{method}: {message}")]
    Method { method: String, message: String },
}

impl Comparison {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,final_best,evaluations,accepted\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.method, r.final_best, r.evaluations, r.accepted);
        }
        out
    }
}

/// `evaluation,best_so_far` rows of one method's curve.
pub fn curve_csv(row: &ComparisonRow) -> String {
    let mut out = String::from("evaluation,best_so_far\n");
    for (e, b) in &row.curve {
        let _ = writeln!(out, "{e},{b}");
    }
    out
}

/// Runs every contender on the combined calibration objective with the same
/// evaluation budget. Baselines search the raw parameter vector; ES-NEAT
/// evolves genomes under the same cap.
pub fn compare(
    problem: &CalibrationProblem,
    contenders: &[Contender],
    settings: &CompareConfig,
    params: &OptimizerParams,
    neat: &NeatConfig,
    loop_config: &LoopConfig,
) -> Result<Comparison, CompareError> {
    let CompareConfig {
        budget,
        seed,
        acceptance_threshold,
    } = *settings;
    if contenders.is_empty() {
        return Err(CompareError::NoMethods);
    }
    let pre = problem.evaluate_model(&problem.model).combined;
    let mut rows = vec![ComparisonRow {
        method: PRE_CALIBRATION.to_string(),
        final_best: pre,
        evaluations: 0,
        accepted: pre < acceptance_threshold,
        curve: Vec::new(),
    }];
    let bounds: Vec<(f64, f64)> = problem.space.specs().iter().map(|s| (s.lo, s.hi)).collect();
    for &c in contenders {
        let row = match c {
            Contender::Baseline(method) => {
                let spec = OptimizerSpec {
                    method,
                    params: params.clone(),
                    budget,
                    seed,
                };
                let objective = |x: &[f64]| -> Result<f64, OverlayError> {
                    Ok(problem.evaluate_vector(&ParameterVector::new(x.to_vec()))?.combined)
                };
                let trace = optimize(&spec, &bounds, objective).map_err(|e| CompareError::Method {
                    method: method.to_string(),
                    message: match e {
                        RunError::Setup(e) => e.to_string(),
                        RunError::Objective(e) => e.to_string(),
                    },
                })?;
                ComparisonRow {
                    method: method.to_string(),
                    final_best: trace.final_best(),
                    evaluations: trace.len(),
                    accepted: trace.final_best() < acceptance_threshold,
                    curve: trace.best_so_far.iter().enumerate().map(|(i, b)| (i + 1, *b)).collect(),
                }
            }
            Contender::EsNeat => {
                let per_phase = (budget / (2 * neat.population_size.max(1))).max(1);
                // Like the baselines, spend the whole budget: no early stop
                // on the fitness threshold or on a stalled pass.
                let neat = NeatConfig {
                    max_generations: per_phase,
                    fitness_threshold: f64::NEG_INFINITY,
                    seed,
                    ..neat.clone()
                };
                let lc = LoopConfig {
                    max_evaluations: Some(budget),
                    max_outer_iterations: usize::MAX,
                    min_relative_improvement: f64::NEG_INFINITY,
                    ..loop_config.clone()
                };
                let run = calibrate(problem, &neat, &lc, &SeedGenomes::default())?;
                // Evaluations per generation: the population minus cached elites.
                let mut curve = Vec::with_capacity(run.history.len());
                let mut used = 0;
                for h in &run.history {
                    used += h.evaluations;
                    curve.push((used, h.incumbent));
                }
                ComparisonRow {
                    method: Contender::EsNeat.name().to_string(),
                    final_best: run.calibration_objective,
                    evaluations: run.simulations,
                    accepted: run.calibration_objective < acceptance_threshold,
                    curve,
                }
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| a.final_best.total_cmp(&b.final_best).then_with(|| a.method.cmp(&b.method)));
    Ok(Comparison {
        rows,
        acceptance_threshold,
    })
}
