use aquacal::hydraulics::write_sensor_file;
use aquacal::network::write_inp;
use aquacal::synth::{generate, PerturbationSpec, Profile, SynthConfig};

use super::Ctx;
use crate::failure::{Coded, Failure, Outcome, INPUT};

pub const NETWORK: &str = "network.inp";
pub const TRUTH: &str = "truth.inp";
pub const MEASUREMENTS: &str = "measurements.csv";
pub const SENSORS: &str = "sensors.txt";
pub const RULES: &str = "rules.txt";

pub fn run(ctx: &mut Ctx, profile: &str, perturbation: Option<&str>, noise: f64, duration: u64, step: u64) -> Outcome {
    let profile: Profile = profile.parse().map_err(Failure::input)?;
    let perturbation: PerturbationSpec = match perturbation {
        Some(s) => s.parse().map_err(Failure::input)?,
        None => PerturbationSpec::default(),
    };
    let config = SynthConfig {
        profile,
        seed: ctx.config.neat.seed,
        perturbation,
        noise_sigma: noise,
        duration,
        step,
    };
    let p = generate(&config).code(INPUT)?;
    ctx.write(NETWORK, write_inp(&p.base))?;
    ctx.write(TRUTH, write_inp(&p.truth))?;
    ctx.write(MEASUREMENTS, p.measurements.to_csv(&p.base))?;
    ctx.write(SENSORS, write_sensor_file(&p.sensors))?;
    ctx.write(RULES, &p.rules)?;
    let mut info = format!(
        "profile = {}\nseed = {}\nperturbation = {}\nnoise_sigma = {}\nduration_s = {}\nstep_s = {}\ndemand_scale = {}\n",
        config.profile, config.seed, config.perturbation, noise, duration, step, p.demand_scale
    );
    for (kind, factor) in &p.factors {
        info.push_str(&format!("factor.{kind} = {factor}\n"));
    }
    info.push_str(&format!(
        "network = {NETWORK}\ntruth = {TRUTH}\nmeasurements = {MEASUREMENTS}\nsensors = {SENSORS}\nrules = {RULES}\n"
    ));
    ctx.write("synth.txt", info)?;
    println!(
        "{}: {} junctions, {} pipes, {} sensors ({} holdout) written to {}",
        config.profile,
        p.base.junctions.len(),
        p.base.pipes.len(),
        p.sensors.calibration_ids().len(),
        p.sensors.holdout_ids().len(),
        ctx.out.display()
    );
    Ok(())
}
