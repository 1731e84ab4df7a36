use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn aquacal(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aquacal"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SOURCE_DATE_EPOCH")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let o = aquacal(cwd, args);
    assert_eq!(code(&o), 0, "{args:?}\nstderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn synth(cwd: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["--out", out, "synth", "--profile", "scaled(12)", "--duration", "21600"];
    args.extend_from_slice(extra);
    ok(cwd, &args);
}

fn problem(dir: &str) -> Vec<String> {
    ["inp", "rules", "measurements", "sensors"]
        .iter()
        .zip(["network.inp", "rules.txt", "measurements.csv", "sensors.txt"])
        .flat_map(|(flag, file)| [format!("--{flag}"), format!("{dir}/{file}")])
        .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.txt")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn summary_value(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("validation.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_day_at_quarter_hours() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    ok(d, &["--out", "sim", "simulate", "s/network.inp", "--duration", "86400", "--step", "900"]);
    let rows = csv_rows(&d.join("sim/simulation.csv"));
    assert_eq!(rows[0], ["time_s", "element_kind", "element_id", "quantity", "value"]);
    let times: std::collections::BTreeSet<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(times.len(), 96);
}

#[test]
fn input_and_io_failures_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("broken.inp"), "[JUNCTIONS]\nJ1 ten 1\n[RESERVOIRS]\nR1 100\n").unwrap();
    let o = aquacal(d, &["--out", "o", "simulate", "broken.inp"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&aquacal(d, &["--out", "o", "simulate", "missing.inp"])), 4);
    // A manifest is written even for failures.
    let manifest = fs::read_to_string(d.join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("exit_code = 4"));
}

#[test]
fn conflicting_rules_exit_five() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let mut rules = fs::read_to_string(d.join("s/rules.txt")).unwrap();
    rules.push_str("\nrule tight\nmatch pipe\nparam minor_loss\nbounds 5 6\nend\n");
    fs::write(d.join("s/rules.txt"), rules).unwrap();
    assert_eq!(code(&aquacal(d, &["--out", "r", "rules", "check", "s/rules.txt", "--inp", "s/network.inp"])), 5);
    let p = problem("s");
    assert_eq!(code(&aquacal(d, &with(&["--out", "c", "calibrate"], &p))), 5);
}

#[test]
fn zero_perturbation_report_matches_observations() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &["--perturbation", "none"]);
    let p = problem("s");
    ok(d, &with(&["--out", "c", "calibrate", "--generations", "2", "--population", "10"], &p));
    ok(d, &["--out", "r", "report", "c"]);
    let mut sensors = 0;
    let mut holdout = 0;
    for entry in fs::read_dir(d.join("r")).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        if !(name.starts_with("sensor_") || name.starts_with("validation_")) {
            continue;
        }
        sensors += 1;
        holdout += usize::from(name.starts_with("validation_"));
        let rows = csv_rows(&d.join("r").join(&name));
        assert_eq!(rows[0], ["time_s", "observed", "before", "after"]);
        for r in &rows[1..] {
            let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
            assert!((v[0] - v[1]).abs() <= 1e-9 && (v[0] - v[2]).abs() <= 1e-9, "{name}: {r:?}");
        }
    }
    assert_eq!((sensors, holdout), (8, 2));
    let residuals = csv_rows(&d.join("r/residuals.csv"));
    assert_eq!(residuals[0], ["sensor", "set", "samples", "rmse_before", "rmse_after", "mae_before", "mae_after"]);
    assert!(d.join("r/convergence_flow.csv").exists());
}

#[test]
fn report_needs_a_finished_calibration() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("empty")).unwrap();
    assert_eq!(code(&aquacal(d, &["--out", "r", "report", "empty"])), 4);
}

#[test]
fn archive_seeding_and_refusals() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let p = problem("s");
    let small = ["--generations", "3", "--population", "12"];
    ok(d, &with(&[&["--out", "c1", "--seed", "4", "calibrate"][..], &small].concat(), &p));
    let archived = summary_value(&d.join("c1"), "calibration_objective");

    ok(d, &with(&[&["--out", "c2", "--seed", "9", "calibrate", "--seed-archive", "c1/run.archive"][..], &small].concat(), &p));
    let first = &csv_rows(&d.join("c2/curve_flow.csv"))[1];
    let gen0: f64 = first[5].parse().unwrap();
    assert!(gen0 <= archived + 1e-9, "{gen0} vs {archived}");

    // Moving leakage into the pressure group changes that group's outputs.
    let rules = fs::read_to_string(d.join("s/rules.txt")).unwrap();
    let moved = rules.replace("param leak_coeff\nbounds 0 0.2\n", "param leak_coeff\nbounds 0 0.2\ngroup pressure\n");
    assert_ne!(moved, rules);
    fs::write(d.join("s/rules.txt"), moved).unwrap();
    let refused = aquacal(d, &with(&["--out", "c3", "calibrate", "--seed-archive", "c1/run.archive", "--generations", "0"], &p));
    assert_eq!(code(&refused), 6);
    ok(d, &with(&["--out", "c4", "calibrate", "--seed-archive", "c1/run.archive", "--seed-optional", "--generations", "0"], &p));

    let text = fs::read_to_string(d.join("c1/run.archive")).unwrap();
    fs::write(d.join("old.archive"), text.replacen("AQUACAL-ARCHIVE v1", "AQUACAL-ARCHIVE v0", 1)).unwrap();
    assert_eq!(code(&aquacal(d, &["--out", "i", "archive", "inspect", "old.archive"])), 6);
    fs::write(d.join("cut.archive"), &text[..text.len() / 3]).unwrap();
    assert_eq!(code(&aquacal(d, &["--out", "i", "archive", "inspect", "cut.archive"])), 2);
    ok(d, &["--out", "i", "archive", "inspect", "c1/run.archive"]);
    assert!(d.join("i/archive_inspect.txt").exists());
}

#[test]
fn zero_generations_reports_the_prior_sample() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let p = problem("s");
    ok(d, &with(&["--out", "c", "calibrate", "--generations", "0", "--population", "8"], &p));
    for group in ["flow", "pressure"] {
        let rows = csv_rows(&d.join(format!("c/curve_{group}.csv")));
        assert!(rows[1..].iter().all(|r| r[0] == "0" && r[1] == "1"), "{group}: {rows:?}");
    }
    assert!(summary_value(&d.join("c"), "simulations") <= 16.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let p = problem("s");
    let run = |out: &str, threads: &str| {
        ok(d, &with(&["--out", out, "--seed", "5", "--threads", threads, "calibrate", "--generations", "4", "--population", "16"], &p));
        files(&d.join(out))
    };
    let one = run("t1", "1");
    assert_eq!(one, run("t1b", "1"));
    assert_eq!(one, run("t4", "4"));
}

#[test]
fn every_command_replays_from_its_manifest() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let p = problem("s");
    ok(d, &["--out", "sim", "simulate", "s/network.inp"]);
    ok(d, &["--out", "rc", "rules", "check", "s/rules.txt", "--inp", "s/network.inp"]);
    ok(d, &with(&["--out", "c", "--seed", "2", "calibrate", "--generations", "3", "--population", "10"], &p));
    ok(d, &with(&["--out", "cmp", "compare", "--methods", "mc,sa,es-neat", "--budget", "40", "--seeds", "2", "--set", "neat.population_size=10"], &p));
    ok(d, &with(&["--out", "v", "validate"], &p));
    ok(d, &["--out", "ai", "archive", "inspect", "c/run.archive"]);
    ok(d, &["--out", "rep", "report", "c"]);
    ok(d, &["--out", "cfg", "config", "dump"]);
    for dir in ["s", "sim", "rc", "c", "cmp", "v", "ai", "rep", "cfg"] {
        let again = format!("{dir}_replay");
        // Replay from another directory: the manifest records its own cwd.
        let elsewhere = d.join("elsewhere");
        fs::create_dir_all(&elsewhere).unwrap();
        ok(&elsewhere, &["--out", &format!("../{again}"), "replay", &format!("../{dir}/manifest.txt")]);
        let (a, b) = (files(&d.join(dir)), files(&d.join(&again)));
        assert!(!a.is_empty(), "{dir} wrote nothing");
        assert_eq!(a, b, "{dir} replay differs");
    }
    // A replay records the command it ran, so it replays in turn.
    ok(d, &["--out", "rr", "replay", "s_replay/manifest.txt"]);
    assert_eq!(files(&d.join("rr")), files(&d.join("s")));
    assert_eq!(code(&aquacal(d, &["--out", "x", "replay", "s/network.inp"])), 2);
}

#[test]
fn compare_writes_tables_and_curves() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    synth(d, "s", &[]);
    let p = problem("s");
    ok(d, &with(&["--out", "cmp", "compare", "--methods", "lhs", "--budget", "30"], &p));
    let seed = csv_rows(&d.join("cmp/compare_seed_1.csv"));
    assert_eq!(seed[0], ["method", "final_best", "evaluations", "accepted"]);
    assert_eq!(seed.len(), 3);
    assert!(seed.iter().any(|r| r[0] == "pre-calibration"));
    let curves: Vec<PathBuf> = fs::read_dir(d.join("cmp"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("curve_"))
        .collect();
    assert_eq!(curves.len(), 1);
    let aggregate = csv_rows(&d.join("cmp/compare_aggregate.csv"));
    assert_eq!(aggregate[0][0], "method");
    assert_eq!(code(&aquacal(d, &with(&["--out", "cmp2", "compare", "--methods", "bogus"], &p))), 2);
}

#[test]
fn config_layers_and_bad_keys() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("my.cfg"), "[neat]\npopulation_size = 40\n").unwrap();
    ok(d, &["--out", "cfg", "--config", "my.cfg", "--set", "neat.max_generations=7", "config", "dump"]);
    let dump = fs::read_to_string(d.join("cfg").read_dir().unwrap().map(|e| e.unwrap().path()).find(|p| p.file_name().unwrap() != "manifest.txt").unwrap()).unwrap();
    assert!(dump.contains("population_size = 40"), "{dump}");
    assert!(dump.contains("max_generations = 7"), "{dump}");
    assert_eq!(code(&aquacal(d, &["--out", "cfg2", "--set", "neat.nonsense=1", "config", "dump"])), 2);
}
