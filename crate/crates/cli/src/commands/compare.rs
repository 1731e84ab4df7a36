use std::collections::BTreeMap;
use std::fmt::Write as _;

use aquacal::optimizers::{self, compare, CompareConfig, CompareError, Contender};

use super::{calibration_failure, load_problem, Ctx, ProblemPaths};
use crate::failure::{Failure, Outcome};

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn run(ctx: &mut Ctx, paths: &ProblemPaths, methods: &str, seeds: u64) -> Outcome {
    let contenders = methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| Contender::parse(m).map_err(Failure::input))
        .collect::<Outcome<Vec<_>>>()?;
    if contenders.is_empty() {
        return Err(Failure::input("no methods given"));
    }
    if seeds == 0 {
        return Err(Failure::input("--seeds must be at least 1"));
    }
    let loaded = load_problem(ctx, paths)?;
    let config = ctx.config.clone();
    let first = config.compare.seed;
    // method -> (final bests, accepted count)
    let mut finals: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for seed in first..first + seeds {
        let settings = CompareConfig { seed, ..config.compare };
        let table = compare(
            &loaded.problem,
            &contenders,
            &settings,
            &config.optimizers,
            &config.neat,
            &config.calibration,
        )
        .map_err(|e| match e {
            CompareError::Calibration(c) => calibration_failure(c),
            other => Failure::input(other),
        })?;
        ctx.write(&format!("compare_seed_{seed}.csv"), table.to_csv())?;
        for row in &table.rows {
            if row.method != optimizers::PRE_CALIBRATION {
                ctx.write(&format!("curve_seed_{seed}_{}.csv", row.method), optimizers::curve_csv(row))?;
            }
            let entry = finals.entry(row.method.clone()).or_default();
            entry.0.push(row.final_best);
            entry.1 += usize::from(row.accepted);
        }
        log::info!("seed {seed}: best {} ({})", table.rows[0].final_best, table.rows[0].method);
    }
    let mut rows: Vec<(String, Vec<f64>, usize)> = finals.into_iter().map(|(m, (v, a))| (m, v, a)).collect();
    for r in &mut rows {
        r.1.sort_by(f64::total_cmp);
    }
    rows.sort_by(|a, b| median(&a.1).total_cmp(&median(&b.1)).then_with(|| a.0.cmp(&b.0)));
    let mut csv = String::from("method,seeds,median_final_best,mean_final_best,min_final_best,max_final_best,accepted_seeds\n");
    for (method, values, accepted) in &rows {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let _ = writeln!(
            csv,
            "{method},{},{},{mean},{},{},{accepted}",
            values.len(),
            median(values),
            values[0],
            values[values.len() - 1]
        );
    }
    ctx.write("compare_aggregate.csv", &csv)?;
    print!("{csv}");
    Ok(())
}
