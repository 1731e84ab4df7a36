use super::*;
use proptest::prelude::*;

fn sphere(x: &[f64]) -> Result<f64, std::convert::Infallible> {
    Ok(x.iter().map(|v| v * v).sum())
}

#[test]
fn degenerate_box_pins_every_candidate() {
    for method in Method::ALL {
        let trace = optimize(&OptimizerSpec::new(method, 50, 3), &[(2.5, 2.5)], sphere).unwrap();
        assert_eq!(trace.len(), 50, "{method}");
        assert!(trace.entries.iter().all(|e| e.candidate == [2.5]), "{method}");
        assert_eq!(trace.final_best(), 6.25);
    }
}

#[test]
fn sphere_reached_by_search_methods() {
    let bounds = vec![(-5.0, 5.0); 5];
    for method in [Method::SimulatedAnnealing, Method::Pso, Method::SceUa, Method::Ga] {
        let wins = (0..10)
            .filter(|&seed| {
                let t = optimize(&OptimizerSpec::new(method, 1000, seed), &bounds, sphere).unwrap();
                t.final_best() < 0.1
            })
            .count();
        assert!(wins >= 8, "{method}: {wins}/10");
    }
}

#[test]
fn monte_carlo_is_uniform() {
    let t = optimize(&OptimizerSpec::new(Method::MonteCarlo, 10_000, 1), &[(0.0, 1.0), (0.0, 1.0)], sphere).unwrap();
    for d in 0..2 {
        let mean = t.entries.iter().map(|e| e.candidate[d]).sum::<f64>() / t.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }
}

#[test]
fn objective_error_keeps_partial_trace() {
    #[derive(Debug, thiserror::Error)]
    #[error("boom")]
    struct Boom;
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let r = optimize(&OptimizerSpec::new(Method::SimulatedAnnealing, 100, 1), &[(0.0, 1.0)], |x: &[f64]| {
        if calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed) == 7 {
            Err(Boom)
        } else {
            Ok(x[0])
        }
    });
    match r {
        Err(RunError::Objective(e)) => assert_eq!(e.partial.len(), 7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn setup_errors() {
    let spec = OptimizerSpec::new(Method::Pso, 10, 1);
    assert_eq!(build(&spec, &[]).err(), Some(OptimizerError::EmptyBounds));
    assert_eq!(build(&spec, &[(0.0, 1.0), (2.0, 1.0)]).err(), Some(OptimizerError::BadBounds(1)));
    let zero = OptimizerSpec { budget: 0, ..spec };
    assert_eq!(build(&zero, &[(0.0, 1.0)]).err(), Some(OptimizerError::Budget));
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert_eq!("lhs".parse::<Method>().unwrap(), Method::LatinHypercube);
    assert!("dream".parse::<Method>().is_err());
}

fn boxes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-100.0f64..100.0, 0.0f64..50.0), 1..6)
        .prop_map(|v| v.into_iter().map(|(lo, w)| (lo, lo + w)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn candidates_in_bounds_and_curve_monotone(bounds in boxes(), seed in 0u64..1000, m in 0usize..6) {
        let method = Method::ALL[m];
        let spec = OptimizerSpec::new(method, 120, seed);
        let t = optimize(&spec, &bounds, sphere).unwrap();
        prop_assert_eq!(t.len(), 120);
        for e in &t.entries {
            for (v, (lo, hi)) in e.candidate.iter().zip(&bounds) {
                prop_assert!(v >= lo && v <= hi);
            }
        }
        prop_assert!(t.best_so_far.windows(2).all(|w| w[1] <= w[0]));
        let again = optimize(&spec, &bounds, sphere).unwrap();
        prop_assert_eq!(t, again);
    }

    #[test]
    fn lhs_fills_every_stratum(n in 2usize..200, d in 1usize..5, seed in 0u64..1000) {
        let bounds = vec![(0.0, 1.0); d];
        let t = optimize(&OptimizerSpec::new(Method::LatinHypercube, n, seed), &bounds, sphere).unwrap();
        for dim in 0..d {
            let mut strata: Vec<usize> = t.entries.iter().map(|e| ((e.candidate[dim] * n as f64) as usize).min(n - 1)).collect();
            strata.sort_unstable();
            strata.dedup();
            prop_assert_eq!(strata.len(), n);
        }
    }
}
