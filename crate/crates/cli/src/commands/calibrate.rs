use std::fmt::Write as _;
use std::path::Path;

use aquacal::archive::{self, ArchiveContext, ArchiveError, RunArchive, SeedOutcome};
use aquacal::calibration::{self, calibrate, CalibrationRun, SeedGenomes};
use aquacal::network::write_inp;
use aquacal::space::Group;

use super::{calibration_failure, load_problem, Ctx, LoadedProblem, ProblemPaths};
use crate::failure::{self, Coded, Failure, Outcome};

pub const ARCHIVE: &str = "run.archive";
pub const CALIBRATED: &str = "calibrated.inp";
pub const SUMMARY: &str = "validation.txt";

pub fn curve_file(group: Group) -> String {
    format!("curve_{}.csv", group.as_str())
}

/// Archive timestamp: SOURCE_DATE_EPOCH when set, else the epoch, so that
/// identical runs give identical bytes.
fn created_at() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .unwrap_or(0);
    chrono::DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn load_seed(ctx: &mut Ctx, path: &Path, loaded: &LoadedProblem, optional: bool) -> Outcome<SeedGenomes> {
    let text = ctx.read_input("seed_archive", path)?;
    let refuse = |reasons: Vec<String>| -> Outcome<SeedGenomes> {
        let message = format!("seed archive {} does not fit this problem:\n  {}", path.display(), reasons.join("\n  "));
        if optional {
            log::warn!("{message}\ncontinuing with a cold start");
            Ok(SeedGenomes::default())
        } else {
            Err(Failure::new(failure::SEED_SCHEMA, anyhow::anyhow!(message)))
        }
    };
    let archive = match archive::load(&text) {
        Ok(a) => a,
        Err(e @ ArchiveError::Version { .. }) => return refuse(vec![e.to_string()]),
        Err(e) => return Err(Failure::new(failure::INPUT, anyhow::Error::new(e).context(path.display().to_string()))),
    };
    match archive::seed_calibration(&archive, &loaded.problem) {
        SeedOutcome::Compatible { seeds, warnings } => {
            for w in warnings {
                log::warn!("{w}");
            }
            Ok(seeds)
        }
        SeedOutcome::Refused { reasons } => refuse(reasons),
    }
}

fn curve_csv(run: &CalibrationRun, group: Group) -> String {
    let mut out = String::from("generation,pass,best,mean,evaluations,incumbent\n");
    for (i, h) in run.history.iter().filter(|h| h.phase == group).enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{},{}", h.outer, h.best, h.mean, h.evaluations, h.incumbent);
    }
    out
}

fn summary(run: &CalibrationRun) -> String {
    let reduction = if run.baseline_objective > 0.0 {
        1.0 - run.calibration_objective / run.baseline_objective
    } else {
        0.0
    };
    let mut out = String::new();
    let _ = writeln!(out, "baseline_objective = {}", run.baseline_objective);
    let _ = writeln!(out, "calibration_objective = {}", run.calibration_objective);
    match run.validation_objective {
        Some(v) => {
            let _ = writeln!(out, "validation_objective = {v}");
        }
        None => out.push_str("validation_objective = none\n"),
    }
    let _ = writeln!(out, "reduction = {reduction}");
    let _ = writeln!(out, "simulations = {}", run.simulations);
    let _ = writeln!(out, "generations = {}", run.generations());
    let _ = writeln!(out, "outer_iterations = {}", run.outer_iterations);
    let _ = writeln!(out, "stop_reason = {}", run.stop_reason.as_str());
    out
}

pub fn run(ctx: &mut Ctx, paths: &ProblemPaths, seed_archive: Option<&Path>, seed_optional: bool) -> Outcome {
    let loaded = load_problem(ctx, paths)?;
    let seeds = match seed_archive {
        Some(path) => load_seed(ctx, path, &loaded, seed_optional)?,
        None => SeedGenomes::default(),
    };
    let problem = &loaded.problem;
    let config = &ctx.config;
    let mut run = calibrate(problem, &config.neat, &config.calibration, &seeds).map_err(calibration_failure)?;
    if !problem.sensors.holdout_ids().is_empty() {
        let v = calibration::validate(
            &run.vector,
            &problem.model,
            &problem.space,
            &problem.measurements,
            &problem.sensors,
            &problem.combined_objective(),
        )
        .map_err(calibration_failure)?;
        run.validation_objective = Some(v);
    }
    let calibrated = problem.model.apply_parameters(&problem.space, &run.vector).code(failure::INPUT)?;
    let created_at = created_at();
    let archive = RunArchive::from_run(
        &run,
        &ArchiveContext {
            created_at: &created_at,
            model: &problem.model,
            rules_text: &loaded.rules_text,
            schema: &problem.features.schema,
            config,
        },
    );
    ctx.write(ARCHIVE, archive::save(&archive))?;
    for group in [Group::Flow, Group::Pressure] {
        ctx.write(&curve_file(group), curve_csv(&run, group))?;
    }
    ctx.write(CALIBRATED, write_inp(&calibrated))?;
    let text = summary(&run);
    ctx.write(SUMMARY, &text)?;
    print!("{text}");
    log::info!("calibration took {:.1}s", run.wall_time.as_secs_f64());
    Ok(())
}

/// Scores the model as given (typically a calibrated INP) per sensor and on
/// the holdout set.
pub fn validate(ctx: &mut Ctx, paths: &ProblemPaths) -> Outcome {
    let loaded = load_problem(ctx, paths)?;
    let problem = &loaded.problem;
    let vector = problem.model.current_vector(&problem.space).code(failure::INPUT)?;
    let objective = problem.combined_objective();
    let per_sensor = |sensors: &aquacal::hydraulics::SensorSet| {
        calibration::validate(&vector, &problem.model, &problem.space, &problem.measurements, sensors, &objective)
            .map_err(calibration_failure)
    };
    let holdout = per_sensor(&problem.sensors)?;
    let mut csv = String::from("sensor,set,objective\n");
    let sets = [("calibration", problem.sensors.calibration_ids()), ("holdout", problem.sensors.holdout_ids())];
    for (set, ids) in sets {
        for id in ids {
            let text = match id.quantity {
                aquacal::hydraulics::Quantity::Flow => format!("holdout flow {}\n", id.element),
                aquacal::hydraulics::Quantity::Pressure => format!("holdout pressure {}\n", id.element),
            };
            let one = aquacal::hydraulics::parse_sensor_file(&text).code(failure::INPUT)?;
            let _ = writeln!(csv, "{id},{set},{}", per_sensor(&one)?);
        }
    }
    let calibration_value = problem.evaluate_model(&problem.model).combined;
    let _ = writeln!(csv, "all,calibration,{calibration_value}");
    let _ = writeln!(csv, "all,holdout,{holdout}");
    ctx.write("validation.csv", &csv)?;
    println!("calibration_objective = {calibration_value}\nvalidation_objective = {holdout}");
    Ok(())
}
