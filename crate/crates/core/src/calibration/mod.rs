//! ES-NEAT calibration: two genomes, one per parameter group, each mapping
//! element features to parameter values inside the expert bounds. Flow
//! parameters are evolved first with pressure parameters frozen, then the
//! other way round, until the combined fit stops improving.

mod features;
mod measurements;
mod objective;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::hydraulics::{extract_observations, simulate_times, HydraulicError, Quantity, SensorId, SensorSet};
use crate::neat::{initial_population, Genome, GenomeError, NeatConfig};
use crate::network::{NetworkModel, OverlayError};
use crate::space::{Group, ParameterKind, ParameterSpace, ParameterVector};

pub use features::{build_features, decode_value, min_max, FeatureSchema, Features, GroupDecoder, GroupLayout};
pub use measurements::{MeasurementError, MeasurementSet};
pub use objective::{std_dev, Normalization, Objective, ObjectiveError, ObjectiveKind, STD_FLOOR};

/// Fitness floor of a candidate whose hydraulics failed to converge.
pub const NONCONVERGENCE_PENALTY: f64 = 1e6;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no parameters to calibrate (no rule matched any element)")]
    EmptySpace,
    #[error("no calibration sensors declared")]
    NoSensors,
    #[error("no holdout sensors declared")]
    NoHoldout,
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("baseline simulation failed: {0}")]
    Hydraulic(#[from] HydraulicError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Outer-loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_outer_iterations: usize,
    /// A full flow+pressure pass must improve the combined objective by at
    /// least this relative amount to continue.
    pub min_relative_improvement: f64,
    pub objective: Objective,
    /// Cap on genome evaluations over the whole run; a generation that
    /// would exceed it is not started.
    pub max_evaluations: Option<usize>,
    /// Evaluation threads; 0 uses every core. Results do not depend on it.
    pub threads: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 5,
            min_relative_improvement: 0.01,
            objective: Objective::default(),
            max_evaluations: None,
            threads: 0,
        }
    }
}

/// Fit of one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub flow: Option<f64>,
    pub pressure: Option<f64>,
    /// Both sensor kinds, per-sensor-std normalization.
    pub combined: f64,
    pub converged: bool,
}

impl Evaluation {
    pub fn phase(&self, group: Group) -> f64 {
        match group {
            Group::Flow => self.flow,
            Group::Pressure => self.pressure,
        }
        .unwrap_or(self.combined)
    }
}

/// Everything fixed during a calibration: model, space, data, decoders.
pub struct CalibrationProblem {
    pub model: NetworkModel,
    pub space: ParameterSpace,
    pub features: Features,
    pub measurements: MeasurementSet,
    pub sensors: SensorSet,
    pub objective: Objective,
    flow_decoder: Option<GroupDecoder>,
    pressure_decoder: Option<GroupDecoder>,
    flow_ids: Vec<SensorId>,
    pressure_ids: Vec<SensorId>,
    calibration_ids: Vec<SensorId>,
    times: Vec<u64>,
    simulations: AtomicUsize,
}

impl std::fmt::Debug for CalibrationProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CalibrationProblem")
            .field("parameters", &self.space.len())
            .field("sensors", &self.calibration_ids.len())
            .field("times", &self.times.len())
            .finish()
    }
}

fn on_grid(ids: &[SensorId], m: &MeasurementSet, step: u64) -> Result<(), MeasurementError> {
    for id in ids {
        if let Some(s) = m.get(id) {
            if let Some((t, _)) = s.iter().find(|(t, _)| step > 0 && t % step != 0) {
                return Err(MeasurementError::OffGrid {
                    sensor: id.to_string(),
                    time: *t,
                    step,
                });
            }
        }
    }
    Ok(())
}

impl CalibrationProblem {
    pub fn new(
        model: NetworkModel,
        space: ParameterSpace,
        measurements: MeasurementSet,
        sensors: SensorSet,
        objective: Objective,
    ) -> Result<Self, CalibrationError> {
        if space.is_empty() {
            return Err(CalibrationError::EmptySpace);
        }
        let calibration_ids = sensors.calibration_ids();
        if calibration_ids.is_empty() {
            return Err(CalibrationError::NoSensors);
        }
        sensors
            .check(&model)
            .map_err(|e| CalibrationError::Config(e.to_string()))?;
        measurements.check(&calibration_ids)?;
        on_grid(&calibration_ids, &measurements, model.options.hydraulic_step)?;
        let features = build_features(&model);
        let decoder = |g| GroupLayout::new(&space, &features, g).map(|l| GroupDecoder::new(l, &space, &model, &features));
        let flow_decoder = decoder(Group::Flow);
        let pressure_decoder = decoder(Group::Pressure);
        let (flow_ids, pressure_ids): (Vec<SensorId>, Vec<SensorId>) =
            calibration_ids.iter().cloned().partition(|s| s.quantity == Quantity::Flow);
        let times = measurements.times(&calibration_ids);
        let problem = Self {
            model,
            space,
            features,
            measurements,
            sensors,
            objective,
            flow_decoder,
            pressure_decoder,
            flow_ids,
            pressure_ids,
            calibration_ids,
            times,
            simulations: AtomicUsize::new(0),
        };
        // Structural problems surface here rather than as penalties later.
        let result = simulate_times(&problem.model, &problem.times);
        match result {
            Ok(r) => {
                let sim = extract_observations(&r, &problem.calibration_ids)
                    .map_err(|e| CalibrationError::Config(e.to_string()))?;
                problem.combined_objective().evaluate(&sim, &problem.measurements, &problem.calibration_ids)?;
            }
            Err(HydraulicError::NonConvergence { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        Ok(problem)
    }

    pub fn decoder(&self, group: Group) -> Option<&GroupDecoder> {
        match group {
            Group::Flow => self.flow_decoder.as_ref(),
            Group::Pressure => self.pressure_decoder.as_ref(),
        }
    }

    pub fn layout(&self, group: Group) -> Option<&GroupLayout> {
        self.decoder(group).map(|d| &d.layout)
    }

    pub fn sensor_ids(&self, group: Group) -> &[SensorId] {
        match group {
            Group::Flow => &self.flow_ids,
            Group::Pressure => &self.pressure_ids,
        }
    }

    pub fn simulations(&self) -> usize {
        self.simulations.load(Ordering::Relaxed)
    }

    /// Objective used for the combined (both sensor kinds) fit.
    pub fn combined_objective(&self) -> Objective {
        Objective {
            kind: self.objective.kind,
            normalization: Normalization::PerSensorStd,
        }
    }

    /// Simulates `model` at the observation times and scores it.
    pub fn evaluate_model(&self, model: &NetworkModel) -> Evaluation {
        self.simulations.fetch_add(1, Ordering::Relaxed);
        let result = match simulate_times(model, &self.times) {
            Ok(r) => r,
            Err(e) => {
                let residual = match e {
                    HydraulicError::NonConvergence { mean_mass_residual, .. } => mean_mass_residual,
                    _ => f64::NAN,
                };
                let penalty = NONCONVERGENCE_PENALTY + if residual.is_finite() { residual.min(1e9) } else { 1e9 };
                return Evaluation {
                    flow: Some(penalty),
                    pressure: Some(penalty),
                    combined: penalty,
                    converged: false,
                };
            }
        };
        let sim = match extract_observations(&result, &self.calibration_ids) {
            Ok(s) => s,
            Err(_) => unreachable!("sensor ids checked at construction"),
        };
        let score = |o: Objective, ids: &[SensorId]| {
            (!ids.is_empty()).then(|| o.evaluate(&sim, &self.measurements, ids).unwrap_or(f64::INFINITY))
        };
        Evaluation {
            flow: score(self.objective, &self.flow_ids),
            pressure: score(self.objective, &self.pressure_ids),
            combined: score(self.combined_objective(), &self.calibration_ids).unwrap_or(f64::INFINITY),
            converged: true,
        }
    }

    pub fn evaluate_vector(&self, vector: &ParameterVector) -> Result<Evaluation, OverlayError> {
        let model = self.model.apply_parameters(&self.space, vector)?;
        Ok(self.evaluate_model(&model))
    }

    /// Replaces the group's entries of `frozen` with the genome's decode.
    pub fn decode(&self, group: Group, genome: &Genome, frozen: &ParameterVector) -> Result<ParameterVector, GenomeError> {
        let mut v = frozen.clone();
        if let Some(d) = self.decoder(group) {
            d.decode_into(genome, &mut v)?;
        }
        Ok(v)
    }

    /// Fitness of a genome for `phase`, other group frozen.
    pub fn fitness(&self, phase: Group, genome: &Genome, frozen: &ParameterVector) -> Result<Evaluation, CalibrationError> {
        let v = self.decode(phase, genome, frozen)?;
        Ok(self.evaluate_vector(&v)?)
    }

    /// Model values clamped into the space (the uncalibrated start).
    pub fn baseline_vector(&self) -> ParameterVector {
        let current = self.model.current_vector(&self.space).expect("space built from this model");
        ParameterVector::new(
            self.space
                .specs()
                .iter()
                .zip(current.values)
                .map(|(s, v)| v.clamp(s.lo, s.hi))
                .collect(),
        )
    }
}

/// Generation-0 genomes taken from an earlier run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedGenomes {
    pub flow: Option<Genome>,
    pub pressure: Option<Genome>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub phase: Group,
    pub outer: usize,
    pub generation: usize,
    /// Best phase fitness of the generation.
    pub best: f64,
    pub mean: f64,
    /// Genomes simulated in this generation (cached elites excluded).
    pub evaluations: usize,
    /// Combined objective of the incumbent after this generation.
    pub incumbent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    BaselineWithinThreshold,
    Threshold,
    Stalled,
    OuterCap,
    Budget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::BaselineWithinThreshold => "baseline_within_threshold",
            StopReason::Threshold => "threshold",
            StopReason::Stalled => "stalled",
            StopReason::OuterCap => "outer_cap",
            StopReason::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub flow_genome: Option<Genome>,
    pub pressure_genome: Option<Genome>,
    pub flow_kinds: Vec<ParameterKind>,
    pub pressure_kinds: Vec<ParameterKind>,
    pub history: Vec<HistoryRow>,
    pub vector: ParameterVector,
    /// Combined objective of the model as given.
    pub baseline_objective: f64,
    /// Combined objective of `vector`.
    pub calibration_objective: f64,
    pub validation_objective: Option<f64>,
    /// Genome fitness evaluations (one simulation each).
    pub simulations: usize,
    pub outer_iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time: Duration,
}

impl CalibrationRun {
    /// Incumbent combined objective after each generation, all phases in order.
    pub fn incumbent_curve(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.incumbent).collect()
    }

    pub fn generations(&self) -> usize {
        self.history.len()
    }
}

#[derive(Clone)]
struct Incumbent {
    vector: ParameterVector,
    eval: Evaluation,
    flow: Option<Genome>,
    pressure: Option<Genome>,
}

fn derived_config(neat: &NeatConfig, group: Group) -> NeatConfig {
    let salt = match group {
        Group::Flow => 0x464C_4F57,
        Group::Pressure => 0x5052_4553,
    };
    NeatConfig {
        seed: neat.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt,
        ..neat.clone()
    }
}

/// Runs the flow-then-pressure loop.
pub fn calibrate(
    problem: &CalibrationProblem,
    neat: &NeatConfig,
    loop_config: &LoopConfig,
    seeds: &SeedGenomes,
) -> Result<CalibrationRun, CalibrationError> {
    neat.check().map_err(|e| CalibrationError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(loop_config.threads)
        .build()
        .map_err(|e| CalibrationError::Config(e.to_string()))?;
    pool.install(|| run_loop(problem, neat, loop_config, seeds))
}

fn run_loop(
    problem: &CalibrationProblem,
    neat: &NeatConfig,
    loop_config: &LoopConfig,
    seeds: &SeedGenomes,
) -> Result<CalibrationRun, CalibrationError> {
    let started = Instant::now();
    let evaluations = AtomicUsize::new(0);
    let threshold = neat.fitness_threshold;
    let baseline = problem.evaluate_model(&problem.model).combined;
    let kinds = |g| problem.layout(g).map(|l| l.kinds.clone()).unwrap_or_default();
    let finish = |inc: &Incumbent, history: Vec<HistoryRow>, outer: usize, reason: StopReason| CalibrationRun {
        flow_genome: inc.flow.clone(),
        pressure_genome: inc.pressure.clone(),
        flow_kinds: kinds(Group::Flow),
        pressure_kinds: kinds(Group::Pressure),
        history,
        vector: inc.vector.clone(),
        baseline_objective: baseline,
        calibration_objective: inc.eval.combined,
        validation_objective: None,
        simulations: evaluations.load(Ordering::Relaxed),
        outer_iterations: outer,
        stop_reason: reason,
        wall_time: started.elapsed(),
    };

    let mut phases = Vec::new();
    for group in [Group::Flow, Group::Pressure] {
        let Some(layout) = problem.layout(group) else { continue };
        if problem.sensor_ids(group).is_empty() {
            log::warn!("no {group} sensors: the {group} group is not evolved and stays at its initial decode");
            continue;
        }
        let seed = match group {
            Group::Flow => seeds.flow.as_ref(),
            Group::Pressure => seeds.pressure.as_ref(),
        };
        let config = derived_config(neat, group);
        let population = initial_population(layout.n_inputs(), layout.n_outputs(), &config, seed)?;
        phases.push((group, config, population));
    }

    // Start: seed genomes where given, otherwise all-zero weights (midpoints).
    let start_genome = |group: Group| -> Option<Genome> {
        let layout = problem.layout(group)?;
        let seed = match group {
            Group::Flow => seeds.flow.clone(),
            Group::Pressure => seeds.pressure.clone(),
        };
        Some(seed.unwrap_or_else(|| Genome::fully_connected(layout.n_inputs(), layout.n_outputs(), || 0.0)))
    };
    let flow = start_genome(Group::Flow);
    let pressure = start_genome(Group::Pressure);
    let mut vector = problem.space.neutral_vector();
    if let Some(g) = &flow {
        vector = problem.decode(Group::Flow, g, &vector)?;
    }
    if let Some(g) = &pressure {
        vector = problem.decode(Group::Pressure, g, &vector)?;
    }
    let mut incumbent = Incumbent {
        eval: problem.evaluate_vector(&vector)?,
        vector,
        flow,
        pressure,
    };
    let mut history = Vec::new();

    if baseline <= threshold {
        let mut at_baseline = incumbent.clone();
        at_baseline.vector = problem.baseline_vector();
        at_baseline.eval = problem.evaluate_vector(&at_baseline.vector)?;
        if at_baseline.eval.combined <= incumbent.eval.combined {
            incumbent = at_baseline;
        }
        return Ok(finish(&incumbent, history, 0, StopReason::BaselineWithinThreshold));
    }
    if incumbent.eval.combined <= threshold {
        return Ok(finish(&incumbent, history, 0, StopReason::Threshold));
    }

    // Zero generations still scores generation 0 once: the prior sample.
    let generations = neat.max_generations.max(1);
    let max_outer = if neat.max_generations == 0 { 1 } else { loop_config.max_outer_iterations.max(1) };
    let mut previous = baseline.max(incumbent.eval.combined);
    let mut outer = 0;
    let mut reason = StopReason::OuterCap;
    'outer: while outer < max_outer {
        outer += 1;
        for (group, config, population) in phases.iter_mut() {
            let group = *group;
            population.invalidate();
            let frozen = incumbent.vector.clone();
            for generation in 0..generations {
                if let Some(cap) = loop_config.max_evaluations {
                    let pending = population.genomes.iter().filter(|g| g.fitness.is_none()).count();
                    if evaluations.load(Ordering::Relaxed) + pending > cap {
                        reason = StopReason::Budget;
                        break 'outer;
                    }
                }
                let before = evaluations.load(Ordering::Relaxed);
                let slots: Vec<Mutex<Option<(ParameterVector, Evaluation)>>> =
                    (0..population.genomes.len()).map(|_| Mutex::new(None)).collect();
                let stats = population.evaluate_indexed(|i, g| match problem.decode(group, g, &frozen) {
                    Ok(v) => {
                        evaluations.fetch_add(1, Ordering::Relaxed);
                        let e = match problem.evaluate_vector(&v) {
                            Ok(e) => e,
                            Err(_) => return f64::INFINITY,
                        };
                        let f = e.phase(group);
                        *slots[i].lock().unwrap() = Some((v, e));
                        f
                    }
                    Err(_) => f64::INFINITY,
                });
                for (i, slot) in slots.into_iter().enumerate() {
                    if let Some((v, e)) = slot.into_inner().unwrap() {
                        if e.combined < incumbent.eval.combined {
                            let g = Some(population.genomes[i].clone());
                            incumbent.vector = v;
                            incumbent.eval = e;
                            match group {
                                Group::Flow => incumbent.flow = g,
                                Group::Pressure => incumbent.pressure = g,
                            }
                        }
                    }
                }
                history.push(HistoryRow {
                    phase: group,
                    outer,
                    generation,
                    best: stats.best,
                    mean: stats.mean,
                    evaluations: evaluations.load(Ordering::Relaxed) - before,
                    incumbent: incumbent.eval.combined,
                });
                log::debug!(
                    "{group} pass {outer} gen {generation}: best {:.6} mean {:.6} incumbent {:.6}",
                    stats.best,
                    stats.mean,
                    incumbent.eval.combined
                );
                if incumbent.eval.combined <= threshold {
                    reason = StopReason::Threshold;
                    break 'outer;
                }
                if incumbent.eval.phase(group) <= threshold || generation + 1 == generations {
                    break;
                }
                population.reproduce(config)?;
            }
        }
        let current = incumbent.eval.combined;
        let gain = (previous - current) / previous.abs().max(f64::MIN_POSITIVE);
        log::info!("pass {outer}: combined objective {current:.6} (relative gain {gain:.4})");
        if gain < loop_config.min_relative_improvement {
            reason = StopReason::Stalled;
            break;
        }
        previous = current;
    }
    Ok(finish(&incumbent, history, outer, reason))
}

/// Objective of `vector` at the holdout sensors only.
pub fn validate(
    vector: &ParameterVector,
    model: &NetworkModel,
    space: &ParameterSpace,
    measurements: &MeasurementSet,
    sensors: &SensorSet,
    objective: &Objective,
) -> Result<f64, CalibrationError> {
    let ids = sensors.holdout_ids();
    if ids.is_empty() {
        return Err(CalibrationError::NoHoldout);
    }
    measurements.check(&ids)?;
    let calibrated = model.apply_parameters(space, vector)?;
    let times = measurements.times(&ids);
    let result = simulate_times(&calibrated, &times)?;
    let sim = extract_observations(&result, &ids).map_err(|e| CalibrationError::Config(e.to_string()))?;
    Ok(objective.evaluate(&sim, measurements, &ids)?)
}
