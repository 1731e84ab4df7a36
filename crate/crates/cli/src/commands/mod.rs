pub mod archive;
pub mod calibrate;
pub mod compare;
pub mod report;
pub mod rules;
pub mod simulate;
pub mod synth;

use std::path::{Path, PathBuf};

use aquacal::calibration::{CalibrationError, CalibrationProblem, MeasurementSet};
use aquacal::config::Config;
use aquacal::hydraulics::{parse_sensor_file, SensorSet};
use aquacal::network::{parse_inp, validate, Severity};
use aquacal::rules::{compile_rules, parse_rules, RuleError};
use aquacal::{NetworkModel, ParameterSpace};

use crate::failure::{self, Coded, Failure, Outcome};

pub struct Ctx {
    pub out: PathBuf,
    pub config: Config,
    /// Inputs read, recorded in the manifest.
    pub inputs: Vec<(String, String)>,
}

impl Ctx {
    pub fn read_input(&mut self, role: &str, path: &Path) -> Outcome<String> {
        self.inputs.push((role.to_string(), path.display().to_string()));
        failure::read(path)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Outcome {
        failure::write(&self.out.join(name), contents)
    }
}

pub struct ProblemPaths {
    pub inp: PathBuf,
    pub rules: PathBuf,
    pub measurements: PathBuf,
    pub sensors: PathBuf,
}

pub struct LoadedProblem {
    pub rules_text: String,
    pub problem: CalibrationProblem,
}

/// Parses and validates an INP; warnings are logged, errors fail with code 2.
pub fn load_model(ctx: &mut Ctx, role: &str, path: &Path) -> Outcome<NetworkModel> {
    let text = ctx.read_input(role, path)?;
    let (model, mut diagnostics) = parse_inp(&text).code_with(failure::INPUT, || path.display().to_string())?;
    diagnostics.extend(validate(&model));
    let mut errors = Vec::new();
    for d in diagnostics {
        match d.severity {
            Severity::Warning => log::warn!("{}: {d}", path.display()),
            Severity::Error => errors.push(d.to_string()),
        }
    }
    if !errors.is_empty() {
        return Err(Failure::input(format!("{}: invalid network\n  {}", path.display(), errors.join("\n  "))));
    }
    Ok(model)
}

pub fn rule_failure(path: &Path, e: RuleError) -> Failure {
    let code = if matches!(e, RuleError::Conflict { .. }) {
        failure::RULE_CONFLICT
    } else {
        failure::INPUT
    };
    Failure::new(code, anyhow::Error::new(e).context(path.display().to_string()))
}

pub fn compile(path: &Path, text: &str, model: &NetworkModel) -> Outcome<ParameterSpace> {
    let rules = parse_rules(text).map_err(|e| rule_failure(path, e))?;
    compile_rules(&rules, model).map_err(|e| rule_failure(path, e))
}

pub fn load_sensors(ctx: &mut Ctx, path: &Path) -> Outcome<SensorSet> {
    let text = ctx.read_input("sensors", path)?;
    parse_sensor_file(&text).code_with(failure::INPUT, || path.display().to_string())
}

pub fn load_measurements(ctx: &mut Ctx, path: &Path) -> Outcome<MeasurementSet> {
    let text = ctx.read_input("measurements", path)?;
    MeasurementSet::from_csv(&text).code_with(failure::INPUT, || path.display().to_string())
}

pub fn calibration_failure(e: CalibrationError) -> Failure {
    match e {
        CalibrationError::Hydraulic(h) => failure::hydraulic(h),
        other => Failure::new(failure::INPUT, other),
    }
}

pub fn load_problem(ctx: &mut Ctx, paths: &ProblemPaths) -> Outcome<LoadedProblem> {
    let model = load_model(ctx, "inp", &paths.inp)?;
    let rules_text = ctx.read_input("rules", &paths.rules)?;
    let space = compile(&paths.rules, &rules_text, &model)?;
    let measurements = load_measurements(ctx, &paths.measurements)?;
    let sensors = load_sensors(ctx, &paths.sensors)?;
    sensors.check(&model).code_with(failure::INPUT, || paths.sensors.display().to_string())?;
    let objective = ctx.config.calibration.objective;
    let problem = CalibrationProblem::new(model, space, measurements, sensors, objective).map_err(calibration_failure)?;
    Ok(LoadedProblem { rules_text, problem })
}
