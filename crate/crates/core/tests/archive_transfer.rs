use aquacal::archive::{self, ArchiveContext, ArchiveError, RunArchive, SeedOutcome};
use aquacal::calibration::{calibrate, CalibrationProblem, CalibrationRun, LoopConfig, Objective, SeedGenomes};
use aquacal::config::Config;
use aquacal::neat::NeatConfig;
use aquacal::rules::{compile_rules, parse_rules};
use aquacal::space::Group;
use aquacal::synth::{generate, variant_problem, Profile, SynthConfig, SynthProblem};

fn synth_config(seed: u64) -> SynthConfig {
    SynthConfig {
        profile: Profile::Scaled(16),
        seed,
        duration: 6 * 3600,
        ..SynthConfig::default()
    }
}

fn problem_with_rules(p: &SynthProblem, rules: &str) -> CalibrationProblem {
    let space = compile_rules(&parse_rules(rules).unwrap(), &p.base).unwrap();
    CalibrationProblem::new(p.base.clone(), space, p.measurements.clone(), p.sensors.clone(), Objective::default()).unwrap()
}

fn config(seed: u64) -> Config {
    Config {
        neat: NeatConfig {
            population_size: 20,
            max_generations: 5,
            seed,
            ..NeatConfig::default()
        },
        calibration: LoopConfig {
            max_outer_iterations: 1,
            ..LoopConfig::default()
        },
        ..Config::default()
    }
}

fn archived(p: &SynthProblem, problem: &CalibrationProblem, config: &Config) -> (CalibrationRun, RunArchive) {
    let run = calibrate(problem, &config.neat, &config.calibration, &SeedGenomes::default()).unwrap();
    let a = RunArchive::from_run(
        &run,
        &ArchiveContext {
            created_at: "1970-01-01T00:00:00Z",
            model: &problem.model,
            rules_text: &p.rules,
            schema: &problem.features.schema,
            config,
        },
    );
    (run, a)
}

#[test]
fn save_load_save_is_byte_stable() {
    let p = generate(&synth_config(3)).unwrap();
    let problem = problem_with_rules(&p, &p.rules);
    let (run, a) = archived(&p, &problem, &config(3));
    let text = archive::save(&a);
    assert!(text.starts_with("AQUACAL-ARCHIVE v1\n"));
    let back = archive::load(&text).unwrap();
    assert_eq!(archive::save(&back), text);
    assert_eq!(back.genome(Group::Flow), run.flow_genome.as_ref());
    assert_eq!(back.genome(Group::Pressure), run.pressure_genome.as_ref());
}

#[test]
fn damaged_documents_are_rejected() {
    let p = generate(&synth_config(4)).unwrap();
    let problem = problem_with_rules(&p, &p.rules);
    let text = archive::save(&archived(&p, &problem, &config(4)).1);
    let old = text.replacen("AQUACAL-ARCHIVE v1", "AQUACAL-ARCHIVE v0", 1);
    match archive::load(&old) {
        Err(ArchiveError::Version { found, expected }) => assert_eq!((found.as_str(), expected.as_str()), ("0", "1")),
        other => panic!("{other:?}"),
    }
    let cut = &text[..text.len() / 2];
    assert!(matches!(archive::load(cut), Err(ArchiveError::Corrupt { .. })));
}

#[test]
fn seeding_the_same_problem_reproduces_the_archived_fit() {
    let p = generate(&synth_config(5)).unwrap();
    let problem = problem_with_rules(&p, &p.rules);
    let cfg = config(5);
    let (run, a) = archived(&p, &problem, &cfg);
    let SeedOutcome::Compatible { seeds, warnings } = archive::seed_calibration(&archive::load(&archive::save(&a)).unwrap(), &problem) else {
        panic!("same problem refused");
    };
    assert!(warnings.is_empty(), "{warnings:?}");
    let neat = NeatConfig { max_generations: 1, seed: 99, ..cfg.neat.clone() };
    let again = calibrate(&problem, &neat, &cfg.calibration, &seeds).unwrap();
    let gen0 = again.history.first().map_or(again.calibration_objective, |h| h.incumbent);
    assert!(gen0 <= run.calibration_objective + 1e-9, "{gen0} vs {}", run.calibration_objective);
}

#[test]
fn variant_network_seeds_with_a_warning() {
    let cfg_s = synth_config(6);
    let p = generate(&cfg_s).unwrap();
    let problem = problem_with_rules(&p, &p.rules);
    let (_, a) = archived(&p, &problem, &config(6));
    let v = variant_problem(&p, &cfg_s, 0.1, 60).unwrap();
    assert_ne!(v.base, p.base);
    let vp = problem_with_rules(&v, &v.rules);
    match archive::seed_calibration(&a, &vp) {
        SeedOutcome::Compatible { seeds, warnings } => {
            assert!(seeds.flow.is_some() && seeds.pressure.is_some());
            assert!(warnings.iter().any(|w| w.contains("fingerprint")), "{warnings:?}");
        }
        SeedOutcome::Refused { reasons } => panic!("{reasons:?}"),
    }
}

#[test]
fn extra_pressure_kind_is_refused() {
    let p = generate(&synth_config(7)).unwrap();
    let problem = problem_with_rules(&p, &p.rules);
    let (_, a) = archived(&p, &problem, &config(7));
    let rules = p.rules.replace(
        "rule leakage\nmatch junction\nparam leak_coeff\nbounds 0 0.2\nend",
        "rule leakage\nmatch junction\nparam leak_coeff\nbounds 0 0.2\ngroup pressure\nend",
    );
    assert_ne!(rules, p.rules);
    let changed = problem_with_rules(&p, &rules);
    match archive::seed_calibration(&a, &changed) {
        SeedOutcome::Refused { reasons } => {
            assert!(reasons.iter().any(|r| r.contains("output count mismatch")), "{reasons:?}")
        }
        other => panic!("{other:?}"),
    }
}
