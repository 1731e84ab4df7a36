//! `aquacal` command-line tool.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use aquacal::config::Config;
use clap::{Args, Parser, Subcommand};

use crate::commands::Ctx;
use crate::failure::{Coded, Failure, Outcome};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "aquacal", version, about = "Water network simulation and ES-NEAT calibration")]
#[command(args_override_self = true)]
struct Cli {
    /// Master random seed (defaults to the config's neat.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluations; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config file (`[section]` headers and `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single config override, e.g. `--set neat.population_size=50`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Network model (INP).
    #[arg(long)]
    inp: PathBuf,
    /// Expert rule file.
    #[arg(long)]
    rules: PathBuf,
    /// Measurement CSV.
    #[arg(long)]
    measurements: PathBuf,
    /// Sensor declaration file.
    #[arg(long)]
    sensors: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extended-period simulation of a network.
    Simulate {
        inp: PathBuf,
        /// Horizon in seconds (default: the INP's duration).
        #[arg(long)]
        duration: Option<u64>,
        /// Hydraulic step in seconds (default: the INP's step).
        #[arg(long)]
        step: Option<u64>,
    },
    /// Generate a synthetic calibration problem.
    Synth {
        /// `fossolo-like` or `scaled(N)`.
        #[arg(long, default_value = "fossolo-like")]
        profile: String,
        /// Bias ranges, e.g. `demand=1.1:1.4,roughness=4:12,jitter=0.05`, or `none`.
        #[arg(long)]
        perturbation: Option<String>,
        /// Gaussian noise sigma added to every reading.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 86_400)]
        duration: u64,
        #[arg(long, default_value_t = 3_600)]
        step: u64,
    },
    /// Expert rule tools.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
    /// Calibrate a network against measurements with ES-NEAT.
    Calibrate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Archive of an earlier run whose genomes seed generation 0.
        #[arg(long)]
        seed_archive: Option<PathBuf>,
        /// Cold-start with a warning instead of failing when the seed archive does not fit.
        #[arg(long)]
        seed_optional: bool,
        /// Generations per phase (overrides neat.max_generations).
        #[arg(long)]
        generations: Option<usize>,
        /// Population size (overrides neat.population_size).
        #[arg(long)]
        population: Option<usize>,
    },
    /// Run several optimizers under one evaluation budget.
    Compare {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated: mc,lhs,sa,pso,sceua,ga,es-neat.
        #[arg(long, default_value = "mc,lhs,sa,pso,sceua,ga,es-neat")]
        methods: String,
        /// Evaluations per method (overrides compare.budget).
        #[arg(long)]
        budget: Option<usize>,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Score a (calibrated) network on the holdout sensors.
    Validate {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Archive tools.
    Archive {
        #[command(subcommand)]
        command: ArchiveCommand,
    },
    /// Per-sensor before/after series of a calibration output directory.
    Report {
        /// Output directory of a `calibrate` run.
        run: PathBuf,
    },
    /// Configuration tools.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
    /// Run a command again from its manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Subcommand)]
enum RulesCommand {
    /// Parse a rule file and, given a model, compile it to a parameter space.
    Check {
        rules: PathBuf,
        #[arg(long)]
        inp: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ArchiveCommand {
    /// Summarize a run archive.
    Inspect { archive: PathBuf },
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print the effective configuration.
    Dump,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Synth { .. } => "synth",
            Command::Rules { .. } => "rules check",
            Command::Calibrate { .. } => "calibrate",
            Command::Compare { .. } => "compare",
            Command::Validate { .. } => "validate",
            Command::Archive { .. } => "archive inspect",
            Command::Report { .. } => "report",
            Command::Config { .. } => "config dump",
            Command::Replay { .. } => "replay",
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn effective_config(cli: &Cli) -> Outcome<Config> {
    let mut config = Config::default();
    if let Some(path) = &cli.config {
        config.merge(&failure::read(path)?).code_with(failure::INPUT, || path.display().to_string())?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("override `{o}` is not SECTION.KEY=VALUE")))?;
        config.set(k.trim(), v.trim()).code(failure::INPUT)?;
    }
    if let Some(seed) = cli.seed {
        config.neat.seed = seed;
        config.compare.seed = seed;
    }
    config.calibration.threads = cli.threads;
    Ok(config)
}

fn dispatch(cli: &Cli, ctx: &mut Ctx) -> Outcome {
    use commands::*;
    match &cli.command {
        Command::Simulate { inp, duration, step } => simulate::run(ctx, inp, *duration, *step),
        Command::Synth {
            profile,
            perturbation,
            noise,
            duration,
            step,
        } => synth::run(ctx, profile, perturbation.as_deref(), *noise, *duration, *step),
        Command::Rules {
            command: RulesCommand::Check { rules, inp },
        } => rules::check(ctx, rules, inp.as_deref()),
        Command::Calibrate {
            problem,
            seed_archive,
            seed_optional,
            generations,
            population,
        } => {
            if let Some(g) = generations {
                ctx.config.neat.max_generations = *g;
            }
            if let Some(p) = population {
                ctx.config.neat.population_size = *p;
            }
            calibrate::run(ctx, &problem.into(), seed_archive.as_deref(), *seed_optional)
        }
        Command::Compare {
            problem,
            methods,
            budget,
            seeds,
        } => {
            if let Some(b) = budget {
                ctx.config.compare.budget = *b;
            }
            compare::run(ctx, &problem.into(), methods, *seeds)
        }
        Command::Validate { problem } => calibrate::validate(ctx, &problem.into()),
        Command::Archive {
            command: ArchiveCommand::Inspect { archive },
        } => archive::inspect(ctx, archive),
        Command::Report { run } => report::run(ctx, run),
        Command::Config {
            command: ConfigCommand::Dump,
        } => {
            let text = ctx.config.dump();
            print!("{text}");
            failure::write(&ctx.out.join("config.txt"), text)
        }
        Command::Replay { .. } => unreachable!("replay is resolved before dispatch"),
    }
}

impl From<&ProblemArgs> for commands::ProblemPaths {
    fn from(p: &ProblemArgs) -> Self {
        Self {
            inp: p.inp.clone(),
            rules: p.rules.clone(),
            measurements: p.measurements.clone(),
            sensors: p.sensors.clone(),
        }
    }
}

fn execute(cli: Cli, args: Vec<String>) -> u8 {
    let started_at = now();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut manifest = RunManifest {
        command: cli.command.name().to_string(),
        seed: cli.seed.unwrap_or(1),
        threads: cli.threads,
        config_file: cli.config.as_ref().map(|p| p.display().to_string()),
        overrides: cli.overrides.clone(),
        out: out.display().to_string(),
        cwd: std::env::current_dir().map(|d| d.display().to_string()).unwrap_or_default(),
        started_at,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        args,
        ..RunManifest::default()
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return failure::IO;
    }
    let result = effective_config(&cli).and_then(|config| {
        config.check().code(failure::INPUT)?;
        manifest.seed = config.neat.seed;
        if cli.threads > 0 {
            // Only the first pool request in a process takes effect.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
        }
        let mut ctx = Ctx {
            out: out.clone(),
            config,
            inputs: Vec::new(),
        };
        let r = dispatch(&cli, &mut ctx);
        manifest.inputs = std::mem::take(&mut ctx.inputs);
        r
    });
    let code = match result {
        Ok(()) => failure::OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    manifest.exit_code = code;
    manifest.finished_at = now();
    if let Err(e) = failure::write(&out.join(manifest::FILE_NAME), manifest.to_text()) {
        eprintln!("error: {e}");
        return if code == failure::OK { failure::IO } else { code };
    }
    code
}

fn replay(path: &std::path::Path, out: Option<PathBuf>) -> u8 {
    let m = match RunManifest::load(path) {
        Ok(m) => m,
        Err(f) => {
            eprintln!("error: {f}");
            return f.code;
        }
    };
    let mut args = m.args.clone();
    if let Some(out) = out {
        if let Err(e) = std::fs::create_dir_all(&out) {
            eprintln!("error: cannot create {}: {e}", out.display());
            return failure::IO;
        }
        let out = std::fs::canonicalize(&out).unwrap_or(out);
        args.push("--out".into());
        args.push(out.display().to_string());
    }
    let cli = match Cli::try_parse_from(std::iter::once("aquacal".to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: recorded arguments no longer parse: {e}");
            return failure::INPUT;
        }
    };
    if matches!(cli.command, Command::Replay { .. }) {
        eprintln!("error: a replay manifest cannot replay itself");
        return failure::INPUT;
    }
    if !m.cwd.is_empty() {
        if let Err(e) = std::env::set_current_dir(&m.cwd) {
            eprintln!("error: cannot enter recorded directory {}: {e}", m.cwd);
            return failure::IO;
        }
    }
    log::info!("replaying `{}` from {}", m.command, path.display());
    execute(cli, args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Replay { manifest } => replay(manifest, cli.out.clone()),
        _ => execute(cli, args),
    };
    ExitCode::from(code)
}
