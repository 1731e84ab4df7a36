use std::path::Path;

use aquacal::hydraulics::simulate_eps;

use super::{load_model, Ctx};
use crate::failure::{self, Failure, Outcome};

pub fn run(ctx: &mut Ctx, inp: &Path, duration: Option<u64>, step: Option<u64>) -> Outcome {
    let model = load_model(ctx, "inp", inp)?;
    let step = step.unwrap_or(model.options.hydraulic_step);
    let duration = duration.unwrap_or(model.options.duration);
    // A zero horizon in the INP means a single steady solve.
    let duration = if duration == 0 { step } else { duration };
    if step == 0 || duration % step != 0 {
        return Err(Failure::input(format!(
            "duration {duration}s must be a positive multiple of step {step}s"
        )));
    }
    let result = simulate_eps(&model, duration, step).map_err(failure::hydraulic)?;
    ctx.write("simulation.csv", result.to_csv())?;
    println!(
        "simulated {} timesteps of {step}s ({} junctions, {} links)",
        result.len(),
        model.junctions.len(),
        model.pipes.len() + model.valves.len()
    );
    Ok(())
}
