use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use aquacal::hydraulics::{extract_observations, simulate_times, SensorId};
use aquacal::space::Group;
use aquacal::NetworkModel;

use super::calibrate::{curve_file, CALIBRATED};
use super::{load_measurements, load_model, load_sensors, Ctx};
use crate::failure::{self, Coded, Failure, Outcome};
use crate::manifest::{self, RunManifest};

fn simulated(model: &NetworkModel, times: &[u64], ids: &[SensorId]) -> Outcome<BTreeMap<SensorId, BTreeMap<u64, f64>>> {
    let result = simulate_times(model, times).map_err(failure::hydraulic)?;
    let series = extract_observations(&result, ids).code(failure::INPUT)?;
    Ok(series.into_iter().map(|(id, s)| (id, s.into_iter().collect())).collect())
}

fn required(dir: &Path, name: &str) -> Outcome<std::path::PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::new(
            failure::IO,
            anyhow::anyhow!("missing run artifact {}", path.display()),
        ))
    }
}

pub fn run(ctx: &mut Ctx, dir: &Path) -> Outcome {
    let m = RunManifest::load(&required(dir, manifest::FILE_NAME)?)?;
    if m.command != "calibrate" {
        return Err(Failure::input(format!("{} is the output of `{}`, not of `calibrate`", dir.display(), m.command)));
    }
    let input = |role: &str| {
        m.input(role)
            .ok_or_else(|| Failure::input(format!("manifest in {} records no {role} input", dir.display())))
    };
    let (inp, measurements, sensors) = (input("inp")?, input("measurements")?, input("sensors")?);
    for path in [&inp, &measurements, &sensors] {
        if !path.is_file() {
            return Err(Failure::new(failure::IO, anyhow::anyhow!("missing run input {}", path.display())));
        }
    }
    let before = load_model(ctx, "inp", &inp)?;
    let after = load_model(ctx, "calibrated", &required(dir, CALIBRATED)?)?;
    let measurements = load_measurements(ctx, &measurements)?;
    let sensors = load_sensors(ctx, &sensors)?;

    let calibration_ids = sensors.calibration_ids();
    let holdout_ids = sensors.holdout_ids();
    let ids: Vec<SensorId> = calibration_ids.iter().chain(&holdout_ids).cloned().collect();
    measurements.check(&ids).code(failure::INPUT)?;
    let times = measurements.times(&ids);
    let sim_before = simulated(&before, &times, &ids)?;
    let sim_after = simulated(&after, &times, &ids)?;

    let mut residuals = String::from("sensor,set,samples,rmse_before,rmse_after,mae_before,mae_after\n");
    for id in &ids {
        let holdout = holdout_ids.contains(id);
        let observed = measurements.get(id).expect("checked above");
        let mut csv = String::from("time_s,observed,before,after\n");
        let (mut sb, mut sa, mut ab, mut aa) = (0.0, 0.0, 0.0, 0.0);
        for &(t, obs) in observed {
            let b = sim_before[id][&t];
            let a = sim_after[id][&t];
            let _ = writeln!(csv, "{t},{obs},{b},{a}");
            sb += (b - obs).powi(2);
            sa += (a - obs).powi(2);
            ab += (b - obs).abs();
            aa += (a - obs).abs();
        }
        let n = observed.len().max(1) as f64;
        let (set, name) = if holdout {
            ("validation", format!("validation_{id}.csv"))
        } else {
            ("calibration", format!("sensor_{id}.csv"))
        };
        ctx.write(&name, csv)?;
        let _ = writeln!(
            residuals,
            "{id},{set},{},{},{},{},{}",
            observed.len(),
            (sb / n).sqrt(),
            (sa / n).sqrt(),
            ab / n,
            aa / n
        );
    }
    ctx.write("residuals.csv", &residuals)?;
    for group in [Group::Flow, Group::Pressure] {
        let name = curve_file(group);
        let text = failure::read(&required(dir, &name)?)?;
        ctx.write(&format!("convergence_{}.csv", group.as_str()), text)?;
    }
    print!("{residuals}");
    Ok(())
}
