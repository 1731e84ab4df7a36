use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::network::{HeadlossFormula, Junction, LinkStatus, Pipe, Reservoir};
use crate::synth::random_network;

fn two_node(head: f64, elevation: f64, demand: f64) -> NetworkModel {
    let mut m = NetworkModel {
        junctions: vec![Junction::new("J1", elevation, demand)],
        reservoirs: vec![Reservoir {
            id: "R1".into(),
            head,
            head_pattern: None,
        }],
        pipes: vec![Pipe::new("P1", "R1", "J1", 1000.0, 200.0, 0.1)],
        ..Default::default()
    };
    m.options.duration = 0;
    m
}

fn state(m: &NetworkModel) -> HydraulicState {
    let s = solve_steady(m, &Loading::at_time(m, 0)).unwrap();
    assert!(s.converged);
    s
}

#[test]
fn hydrostatic_pressure() {
    let s = state(&two_node(100.0, 60.0, 0.0));
    assert!((s.junction_pressures[0] - 40.0).abs() < 1e-9);
    assert!(s.link_flows[0].abs() < 1e-9);
}

#[test]
fn identical_parallel_pipes_split_evenly() {
    let mut m = two_node(100.0, 0.0, 10.0);
    m.pipes.push(Pipe::new("P2", "R1", "J1", 1000.0, 200.0, 0.1));
    let s = state(&m);
    assert!((s.link_flows[0] - 5.0).abs() < 1e-9);
    assert!((s.link_flows[1] - 5.0).abs() < 1e-9);
}

#[test]
fn closed_link_carries_nothing() {
    let mut m = two_node(100.0, 0.0, 10.0);
    let mut p2 = Pipe::new("P2", "R1", "J1", 1000.0, 200.0, 0.1);
    p2.status = LinkStatus::Closed;
    m.pipes.push(p2);
    let s = state(&m);
    assert_eq!(s.link_flows[1], 0.0);
    assert!((s.link_flows[0] - 10.0).abs() < 1e-9);
}

#[test]
fn single_pipe_matches_closed_form_loss() {
    let m = two_node(100.0, 0.0, 10.0);
    let s = state(&m);
    let loss = oracle_loss(&m, 0, 10.0);
    assert!((100.0 - s.junction_heads[0] - loss).abs() < 1e-6);
}

/// Independent head-loss formulas (m) for pipe `k` at flow `q` L/s.
fn oracle_loss(m: &NetworkModel, k: usize, q_lps: f64) -> f64 {
    let p = &m.pipes[k];
    let q = q_lps.abs() / 1000.0;
    let d = p.diameter / 1000.0;
    let area = PI * d * d / 4.0;
    let minor = p.minor_loss_k * q * q / (2.0 * 9.81 * area * area);
    let friction = match m.options.headloss {
        HeadlossFormula::HazenWilliams => {
            10.667 * p.length * q.powf(1.852) / (p.roughness.powf(1.852) * d.powf(4.871))
        }
        HeadlossFormula::DarcyWeisbach => {
            let v = q / area;
            let re = v * d / 1.004e-6;
            let swamee = |re: f64| {
                let arg = p.roughness / 1000.0 / (3.7 * d) + 5.74 / re.powf(0.9);
                0.25 / arg.log10().powi(2)
            };
            let f = if re <= 2000.0 {
                if re == 0.0 {
                    0.0
                } else {
                    64.0 / re
                }
            } else if re < 4000.0 {
                let w = (re - 2000.0) / 2000.0;
                (1.0 - w) * 64.0 / 2000.0 + w * swamee(4000.0)
            } else {
                swamee(re)
            };
            f * p.length / d * v * v / (2.0 * 9.81)
        }
    };
    (friction + minor) * q_lps.signum()
}

fn valve_oracle_loss(m: &NetworkModel, k: usize, q_lps: f64) -> f64 {
    let v = &m.valves[k];
    let q = q_lps / 1000.0;
    let d = v.diameter / 1000.0;
    let area = PI * d * d / 4.0;
    v.loss_coeff_k * q * q.abs() / (2.0 * 9.81 * area * area)
}

/// Checks mass balance and link energy balance with formulas written
/// independently of the solver.
fn check_residuals(m: &NetworkModel, s: &HydraulicState, loading: &Loading) {
    let head = |node: &str| s.head(node).unwrap();
    let mut balance = vec![0.0; m.junctions.len()];
    let idx = m.junction_index();
    let links = m
        .pipes
        .iter()
        .map(|p| (&p.from, &p.to, p.status))
        .chain(m.valves.iter().map(|v| (&v.from, &v.to, v.status)));
    for (k, (from, to, status)) in links.enumerate() {
        let q = s.link_flows[k];
        if let Some(&i) = idx.get(from.as_str()) {
            balance[i] -= q;
        }
        if let Some(&i) = idx.get(to.as_str()) {
            balance[i] += q;
        }
        if status == LinkStatus::Closed {
            assert_eq!(q, 0.0);
            continue;
        }
        let expected = if k < m.pipes.len() {
            oracle_loss(m, k, q)
        } else {
            valve_oracle_loss(m, k - m.pipes.len(), q)
        };
        let dh = head(from) - head(to);
        assert!(
            (dh - expected).abs() < 1e-5 * (1.0 + expected.abs()),
            "link {k}: dh {dh} vs {expected}"
        );
    }
    for (i, j) in m.junctions.iter().enumerate() {
        let p = s.junction_pressures[i];
        let emitter = if j.emitter_coeff > 0.0 && p > 0.0 {
            j.emitter_coeff * p.powf(m.options.emitter_exponent)
        } else {
            0.0
        };
        assert!((s.emitter_flows[i] - emitter).abs() < 1e-6 * (1.0 + emitter));
        let net = balance[i] - loading.demands[i] - emitter;
        assert!(net.abs() < 1e-5 * (1.0 + loading.demands[i]), "junction {}: {net}", j.id);
        assert!((p - (s.junction_heads[i] - j.elevation)).abs() < 1e-12);
    }
}

#[test]
fn random_networks_satisfy_independent_residuals() {
    for seed in 0..12 {
        let m = random_network(8 + 6 * seed as usize, seed);
        let loading = Loading::at_time(&m, 0);
        let s = solve_steady(&m, &loading).unwrap();
        assert!(s.converged, "seed {seed}");
        check_residuals(&m, &s, &loading);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residuals_hold_on_arbitrary_networks(n in 2usize..60, seed in 0u64..10_000) {
        let m = random_network(n, seed);
        let loading = Loading::at_time(&m, 0);
        let s = solve_steady(&m, &loading).unwrap();
        prop_assert!(s.converged);
        check_residuals(&m, &s, &loading);
    }

    #[test]
    fn shifting_the_datum_moves_heads_only(n in 2usize..30, seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let m = random_network(n, seed);
        let mut shifted = m.clone();
        for r in &mut shifted.reservoirs {
            r.head += shift;
        }
        for j in &mut shifted.junctions {
            j.elevation += shift;
        }
        let a = state(&m);
        let b = state(&shifted);
        for (x, y) in a.junction_pressures.iter().zip(&b.junction_pressures) {
            // Both solves stop at the convergence tolerance, not at the root.
            prop_assert!((x - y).abs() < 1e-5);
        }
        for (x, y) in a.link_flows.iter().zip(&b.link_flows) {
            prop_assert!((x - y).abs() < 1e-5 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn constant_loading_gives_identical_states() {
    let m = random_network(20, 3);
    let mut flat = m.clone();
    flat.patterns.clear();
    for j in &mut flat.junctions {
        j.pattern_id = None;
    }
    let r = simulate_eps(&flat, 4 * 3600, 3600).unwrap();
    assert_eq!(r.timestamps, [0, 3600, 7200, 10800]);
    for s in &r.states[1..] {
        assert_eq!(s, &r.states[0]);
    }
}

#[test]
fn doubling_pattern_doubles_tree_flows() {
    // Chain R1 - J1 - J2 - J3 without emitters: flows follow from mass balance.
    let mut m = two_node(150.0, 0.0, 1.0);
    m.junctions.push(Junction::new("J2", 0.0, 2.0));
    m.junctions.push(Junction::new("J3", 0.0, 3.0));
    m.pipes.push(Pipe::new("P2", "J1", "J2", 500.0, 150.0, 0.1));
    m.pipes.push(Pipe::new("P3", "J2", "J3", 500.0, 100.0, 0.1));
    m.patterns.insert("X2".into(), vec![1.0, 2.0]);
    for j in &mut m.junctions {
        j.pattern_id = Some("X2".into());
    }
    let r = simulate_eps(&m, 7200, 3600).unwrap();
    for (a, b) in r.states[0].link_flows.iter().zip(&r.states[1].link_flows) {
        assert!((2.0 * a - b).abs() < 1e-9 * b.abs());
    }
    assert!((r.states[0].link_flows[0] - 6.0).abs() < 1e-9);
}

#[test]
fn week_at_quarter_hours() {
    let m = random_network(12, 9);
    let r = simulate_eps(&m, 7 * 86_400, 900).unwrap();
    assert_eq!(r.len(), 672);
    assert_eq!(*r.timestamps.last().unwrap(), 7 * 86_400 - 900);
}

#[test]
fn hydrostatic_series_is_flat() {
    let mut m = two_node(100.0, 60.0, 0.0);
    m.patterns.insert("D".into(), vec![0.5, 1.5, 1.0]);
    m.junctions[0].pattern_id = Some("D".into());
    let r = simulate_eps(&m, 6 * 3600, 3600).unwrap();
    let obs = extract_observations(&r, &[SensorId::pressure("J1")]).unwrap();
    let series = &obs[&SensorId::pressure("J1")];
    assert_eq!(series.len(), 6);
    assert!(series.iter().all(|(_, p)| (p - 40.0).abs() < 1e-9));
}

#[test]
fn runs_are_bitwise_reproducible() {
    let m = random_network(40, 17);
    let a = simulate_eps(&m, 86_400, 3600).unwrap();
    let b = simulate_eps(&m, 86_400, 3600).unwrap();
    assert_eq!(a, b);
    // A step does not depend on which other steps were requested.
    let c = simulate_times(&m, &[7200]).unwrap();
    assert_eq!(c.states[0], a.states[2]);
}

#[test]
fn bad_time_grid_is_rejected() {
    let m = two_node(100.0, 60.0, 0.0);
    assert!(matches!(simulate_eps(&m, 100, 0), Err(HydraulicError::TimeGrid(_))));
    assert!(matches!(simulate_eps(&m, 5000, 3600), Err(HydraulicError::TimeGrid(_))));
    assert!(matches!(simulate_times(&m, &[10, 5]), Err(HydraulicError::TimeGrid(_))));
}

#[test]
fn isolated_junction_is_reported() {
    let mut m = two_node(100.0, 60.0, 1.0);
    m.junctions.push(Junction::new("J2", 0.0, 1.0));
    m.pipes.push(Pipe::new("P2", "J1", "J2", 10.0, 100.0, 0.1));
    m.pipes[1].status = LinkStatus::Closed;
    assert_eq!(
        HydraulicSolver::new(&m).unwrap_err(),
        HydraulicError::Disconnected("J2".into())
    );
}

#[test]
fn csv_has_one_row_per_quantity() {
    let m = two_node(100.0, 60.0, 1.0);
    let r = simulate_eps(&m, 7200, 3600).unwrap();
    let csv = r.to_csv();
    assert!(csv.starts_with("time_s,element_kind,element_id,quantity,value\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

