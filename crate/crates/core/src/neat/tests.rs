use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::rng::seeded;

/// Structural checker written without reference to `Genome::check`:
/// depth-first colouring for cycles, hash sets for uniqueness.
fn independent_check(g: &Genome, n_in: usize, n_out: usize) -> Result<(), String> {
    let roles: HashMap<u32, NodeRole> = g.nodes.iter().map(|n| (n.id, n.role)).collect();
    if roles.len() != g.nodes.len() {
        return Err("duplicate node id".into());
    }
    let inputs = roles.values().filter(|r| **r == NodeRole::Input).count();
    let outputs = roles.values().filter(|r| **r == NodeRole::Output).count();
    if inputs != n_in || outputs != n_out {
        return Err(format!("schema {inputs}/{outputs}"));
    }
    let mut innovations = BTreeSet::new();
    for c in &g.connections {
        if !innovations.insert(c.innovation) {
            return Err(format!("innovation {} repeated", c.innovation));
        }
        match (roles.get(&c.from), roles.get(&c.to)) {
            (Some(NodeRole::Output), _) | (_, Some(NodeRole::Input)) => return Err("bad direction".into()),
            (Some(_), Some(_)) => {}
            _ => return Err("dangling connection".into()),
        }
    }
    // 0 = white, 1 = grey, 2 = black
    let mut colour: HashMap<u32, u8> = roles.keys().map(|&k| (k, 0)).collect();
    fn visit(n: u32, g: &Genome, colour: &mut HashMap<u32, u8>) -> bool {
        colour.insert(n, 1);
        for c in g.connections.iter().filter(|c| c.enabled && c.from == n) {
            match colour[&c.to] {
                1 => return false,
                0 => {
                    if !visit(c.to, g, colour) {
                        return false;
                    }
                }
                _ => {}
            }
        }
        colour.insert(n, 2);
        true
    }
    let ids: Vec<u32> = roles.keys().copied().collect();
    for n in ids {
        if colour[&n] == 0 && !visit(n, g, &mut colour) {
            return Err("cycle".into());
        }
    }
    Ok(())
}

/// Evaluates by sweeping all nodes until nothing changes.
fn relaxation_oracle(g: &Genome, inputs: &[f64]) -> Vec<f64> {
    let mut value: HashMap<u32, f64> = HashMap::new();
    for n in &g.nodes {
        let v = match n.role {
            NodeRole::Input => inputs[n.id as usize],
            _ => n.activation.apply(0.0),
        };
        value.insert(n.id, v);
    }
    for _ in 0..=g.nodes.len() {
        let mut changed = false;
        for n in g.nodes.iter().filter(|n| n.role != NodeRole::Input) {
            let mut sum = 0.0;
            for c in g.connections.iter().filter(|c| c.enabled && c.to == n.id) {
                sum += value[&c.from] * c.weight;
            }
            let v = n.activation.apply(sum);
            if v != value[&n.id] {
                value.insert(n.id, v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..g.n_outputs).map(|k| value[&g.output_id(k)]).collect()
}

fn mutation_config() -> NeatConfig {
    NeatConfig {
        add_connection_rate: 0.7,
        add_node_rate: 0.4,
        remove_connection_rate: 0.4,
        remove_node_rate: 0.2,
        ..NeatConfig::default()
    }
}

fn random_genome(n_in: usize, n_out: usize, steps: usize, seed: u64) -> Genome {
    let mut rng = seeded(seed);
    let mut g = Genome::fully_connected(n_in, n_out, || rng.random_range(-2.0..2.0));
    let mut reg = InnovationRegistry::new(n_in, n_out);
    let cfg = mutation_config();
    for _ in 0..steps {
        g.mutate(&cfg, &mut reg, &mut rng);
    }
    g
}

#[test]
fn fully_connected_start() {
    let cfg = NeatConfig::default();
    let pop = initial_population(3, 2, &cfg, None).unwrap();
    assert_eq!(pop.genomes.len(), 100);
    for g in &pop.genomes {
        assert_eq!(g.connections.len(), 6);
        assert_eq!(g.hidden_count(), 0);
        assert!(g.connections.iter().all(|c| (-1.0..=1.0).contains(&c.weight)));
    }
}

#[test]
fn seeded_population_keeps_topology() {
    let mut seed = random_genome(3, 2, 0, 1);
    let mut reg = InnovationRegistry::new(3, 2);
    let mut rng = seeded(5);
    while seed.hidden_count() < 4 {
        seed.add_node(&mut reg, &mut rng);
    }
    let pop = initial_population(3, 2, &NeatConfig::default(), Some(&seed)).unwrap();
    assert!(pop.genomes.iter().all(|g| g.hidden_count() == 4));
    assert_eq!(pop.genomes[0].connections, seed.connections);
    let wrong = Genome::bare(4, 2);
    assert!(matches!(
        initial_population(3, 2, &NeatConfig::default(), Some(&wrong)),
        Err(GenomeError::Schema { .. })
    ));
}

#[test]
fn zero_weights_give_half_from_sigmoid() {
    let mut g = Genome::fully_connected(2, 2, || 0.0);
    for n in &mut g.nodes {
        if n.role == NodeRole::Output {
            n.activation = Activation::Sigmoid;
        }
    }
    assert_eq!(g.activate(&[0.3, -2.0]).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn clamped_output_saturates() {
    let g = Genome::fully_connected(1, 1, || 1.0);
    assert_eq!(g.activate(&[2.0]).unwrap(), vec![1.0]);
    assert!(matches!(g.activate(&[1.0, 2.0]), Err(GenomeError::InputLength { .. })));
}

#[test]
fn split_convention() {
    let mut g = Genome::fully_connected(1, 1, || 0.7);
    let mut reg = InnovationRegistry::new(1, 1);
    assert!(g.add_node(&mut reg, &mut seeded(0)));
    let old = g.connections.iter().find(|c| c.from == 0 && c.to == 1).unwrap();
    assert!(!old.enabled);
    let h = g.nodes.iter().find(|n| n.role == NodeRole::Hidden).unwrap().id;
    let a = g.connections.iter().find(|c| c.from == 0 && c.to == h).unwrap();
    let b = g.connections.iter().find(|c| c.from == h && c.to == 1).unwrap();
    assert_eq!(a.weight, 1.0);
    assert_eq!(b.weight, 0.7);
}

#[test]
fn identity_mutation_when_all_rates_zero() {
    let g0 = random_genome(3, 2, 30, 4);
    let cfg = NeatConfig {
        add_connection_rate: 0.0,
        add_node_rate: 0.0,
        remove_connection_rate: 0.0,
        remove_node_rate: 0.0,
        weight_perturb_rate: 0.0,
        weight_replace_rate: 0.0,
        ..NeatConfig::default()
    };
    let mut g = g0.clone();
    let mut reg = InnovationRegistry::new(3, 2);
    reg.observe(&g);
    g.mutate(&cfg, &mut reg, &mut seeded(1));
    assert_eq!(g, g0);
}

#[test]
fn registry_reuses_ids_within_a_generation() {
    let mut reg = InnovationRegistry::new(2, 1);
    let a = reg.connection(0, 5);
    assert_eq!(reg.connection(0, 5), a);
    let s = reg.split(1);
    assert_eq!(reg.split(1), s);
    reg.reset_generation();
    assert_ne!(reg.connection(0, 5), a);
    assert_ne!(reg.split(1), s);
}

#[test]
fn many_mutations_preserve_invariants() {
    // 1000 chains of 100 mutations each.
    let cfg = mutation_config();
    for chain in 0..1000u64 {
        let mut rng = seeded(chain);
        let mut g = Genome::fully_connected(4, 2, || rng.random_range(-1.0..1.0));
        let mut reg = InnovationRegistry::new(4, 2);
        for step in 0..100 {
            if step % 10 == 0 {
                reg.reset_generation();
            }
            g.mutate(&cfg, &mut reg, &mut rng);
            independent_check(&g, 4, 2).unwrap();
            g.check().unwrap();
        }
    }
}

#[test]
fn crossovers_preserve_invariants() {
    let mut rng = seeded(99);
    for k in 0..1000u64 {
        let mut a = random_genome(3, 2, 20, 2 * k);
        let mut b = random_genome(3, 2, 20, 2 * k + 1);
        a.fitness = Some(rng.random_range(0.0..1.0));
        b.fitness = Some(rng.random_range(0.0..1.0));
        let child = crossover(&a, &b, &mut rng).unwrap();
        independent_check(&child, 3, 2).unwrap();
        child.check().unwrap();
    }
}

#[test]
fn crossover_rules() {
    let mut a = Genome::fully_connected(2, 1, || 0.25);
    a.fitness = Some(1.0);
    let child = crossover(&a, &a.clone(), &mut seeded(3)).unwrap();
    assert_eq!(child.connections, a.connections);

    let mut b = a.clone();
    let mut reg = InnovationRegistry::new(2, 1);
    a.add_node(&mut reg, &mut seeded(4));
    a.fitness = Some(0.5);
    let child = crossover(&a, &b, &mut seeded(5)).unwrap();
    assert_eq!(child.connections.len(), a.connections.len());

    b.fitness = None;
    assert_eq!(crossover(&a, &b, &mut seeded(6)), Err(GenomeError::MissingFitness));
}

#[test]
fn activation_matches_relaxation_oracle() {
    let mut rng = seeded(7);
    for k in 0..1000u64 {
        let g = random_genome(4, 3, 25, 1000 + k);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = g.activate(&x).unwrap();
        let slow = relaxation_oracle(&g, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn distance_hand_example() {
    // g1: innovations 0..20, weights 0. g2: same minus 5, 18, 19, weights 0.5.
    let mk = |ids: &[u64], w: f64| Genome {
        connections: ids
            .iter()
            .map(|&i| ConnectionGene {
                innovation: i,
                from: 0,
                to: 1,
                weight: w,
                enabled: true,
            })
            .collect(),
        ..Genome::bare(1, 1)
    };
    let all: Vec<u64> = (0..20).collect();
    let some: Vec<u64> = (0..18).filter(|&i| i != 5).collect();
    let (g1, g2) = (mk(&all, 0.0), mk(&some, 0.5));
    let cfg = NeatConfig::default();
    // E = 2, D = 1, N = 20, W = 0.5
    let expected = 2.0 / 20.0 + 1.0 / 20.0 + 0.4 * 0.5;
    assert!((compatibility_distance(&g1, &g2, &cfg) - expected).abs() < 1e-15);
    assert!((compatibility_distance(&g2, &g1, &cfg) - expected).abs() < 1e-15);
    // Below 20 genes N is 1.
    let small = mk(&[0, 1, 2], 0.0);
    let smaller = mk(&[0, 2], 0.0);
    assert_eq!(compatibility_distance(&small, &smaller, &cfg), 1.0);
}

#[test]
fn distance_zero_and_symmetric() {
    let cfg = NeatConfig::default();
    for k in 0..1000u64 {
        let a = random_genome(3, 2, 15, 5000 + k);
        let b = random_genome(3, 2, 15, 9000 + k);
        assert_eq!(compatibility_distance(&a, &a, &cfg), 0.0);
        assert_eq!(compatibility_distance(&a, &b, &cfg), compatibility_distance(&b, &a, &cfg));
    }
}

fn xor_error(g: &Genome) -> f64 {
    let net = g.compile();
    let cases = [([0.0, 0.0, 1.0], -1.0), ([0.0, 1.0, 1.0], 1.0), ([1.0, 0.0, 1.0], 1.0), ([1.0, 1.0, 1.0], -1.0)];
    cases
        .iter()
        .map(|(x, t)| (net.activate(x).unwrap()[0] - t).powi(2))
        .sum::<f64>()
        / 4.0
}

#[test]
fn constant_fitness_keeps_size() {
    let cfg = NeatConfig::default();
    let mut pop = initial_population(3, 1, &cfg, None).unwrap();
    for _ in 0..5 {
        evolve_generation(&mut pop, |_| 1.0, &cfg).unwrap();
        assert_eq!(pop.genomes.len(), 100);
        assert_eq!(pop.best_ever.as_ref().unwrap().fitness, Some(1.0));
    }
}

#[test]
fn xor_improves_and_best_is_monotone() {
    let mut improved = 0;
    for seed in 0..10 {
        let cfg = NeatConfig {
            seed,
            ..NeatConfig::default()
        };
        let mut pop = initial_population(3, 1, &cfg, None).unwrap();
        let first = pop.evaluate(xor_error).best;
        let mut last_best = f64::INFINITY;
        for _ in 0..100 {
            evolve_generation(&mut pop, xor_error, &cfg).unwrap();
            let b = pop.best_ever.as_ref().unwrap().fitness.unwrap();
            assert!(b <= last_best);
            last_best = b;
            let covered: usize = pop.species.iter().map(|s| s.members.len()).sum();
            assert_eq!(covered, pop.genomes.len());
        }
        if last_best < first {
            improved += 1;
        }
    }
    assert!(improved >= 9, "{improved}/10");
}

#[test]
fn trajectory_independent_of_thread_count() {
    let cfg = NeatConfig {
        population_size: 40,
        ..NeatConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut pop = initial_population(3, 1, &cfg, None).unwrap();
            for _ in 0..15 {
                evolve_generation(&mut pop, xor_error, &cfg).unwrap();
            }
            pop.genomes
        })
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutated_genomes_stay_valid(seed in 0u64..1_000_000, n_in in 1usize..5, n_out in 1usize..4, steps in 0usize..40) {
        let g = random_genome(n_in, n_out, steps, seed);
        prop_assert!(g.check().is_ok());
        prop_assert!(independent_check(&g, n_in, n_out).is_ok());
        let out = g.activate(&vec![0.5; n_in]).unwrap();
        prop_assert!(out.iter().all(|y| (-1.0..=1.0).contains(y)));
    }
}
