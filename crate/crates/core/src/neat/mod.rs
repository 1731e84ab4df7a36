//! NeuroEvolution of Augmenting Topologies over feed-forward genomes.
//!
//! Fitness is minimized. Every random decision draws from the population's
//! own ChaCha stream in a fixed order, and fitness evaluations only attach
//! values to genomes, so a run is reproducible regardless of how many
//! threads evaluate a generation.

mod genome;
mod population;

use std::collections::HashMap;

use thiserror::Error;

pub use genome::{
    compatibility_distance, crossover, initial_innovation, Activation, CompiledNetwork, ConnectionGene,
    Genome, GenomeError, NodeGene, NodeRole, SIGMOID_SLOPE, WEIGHT_MAX,
};
pub use population::{evolve_generation, initial_population, GenerationStats, Population, Species};

#[derive(Debug, Clone, PartialEq)]
pub struct NeatConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Evolution stops once the best fitness is at or below this value.
    pub fitness_threshold: f64,
    pub add_connection_rate: f64,
    pub add_node_rate: f64,
    pub remove_connection_rate: f64,
    pub remove_node_rate: f64,
    /// Per-connection probability of a gaussian nudge.
    pub weight_perturb_rate: f64,
    pub weight_perturb_sigma: f64,
    /// Per-connection probability of a fresh U[-1, 1] weight.
    pub weight_replace_rate: f64,
    pub crossover_rate: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub compatibility_threshold: f64,
    pub stagnation_limit: usize,
    pub elitism: usize,
    pub survival_fraction: f64,
    pub seed: u64,
}

impl Default for NeatConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            max_generations: 100,
            fitness_threshold: 0.1,
            add_connection_rate: 0.7,
            add_node_rate: 0.4,
            remove_connection_rate: 0.4,
            remove_node_rate: 0.2,
            weight_perturb_rate: 0.8,
            weight_perturb_sigma: 0.1,
            weight_replace_rate: 0.05,
            crossover_rate: 0.75,
            c1: 1.0,
            c2: 1.0,
            c3: 0.4,
            compatibility_threshold: 3.0,
            stagnation_limit: 15,
            elitism: 2,
            survival_fraction: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid NEAT configuration: {0}")]
pub struct ConfigError(pub String);

impl NeatConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let rates = [
            ("add_connection_rate", self.add_connection_rate),
            ("add_node_rate", self.add_node_rate),
            ("remove_connection_rate", self.remove_connection_rate),
            ("remove_node_rate", self.remove_node_rate),
            ("weight_perturb_rate", self.weight_perturb_rate),
            ("weight_replace_rate", self.weight_replace_rate),
            ("crossover_rate", self.crossover_rate),
            ("survival_fraction", self.survival_fraction),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(ConfigError(format!("{name} = {r} is outside [0, 1]")));
            }
        }
        if self.weight_perturb_rate + self.weight_replace_rate > 1.0 {
            return Err(ConfigError(
                "weight_perturb_rate + weight_replace_rate exceeds 1".into(),
            ));
        }
        if self.population_size < 2 {
            return Err(ConfigError("population_size must be at least 2".into()));
        }
        if !(self.weight_perturb_sigma >= 0.0 && self.weight_perturb_sigma.is_finite()) {
            return Err(ConfigError("weight_perturb_sigma must be finite and nonnegative".into()));
        }
        for (name, c) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("compatibility_threshold", self.compatibility_threshold),
        ] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(ConfigError(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.stagnation_limit == 0 {
            return Err(ConfigError("stagnation_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Hands out innovation ids so that the same structural change made by
/// different genomes within one generation gets the same ids. The maps are
/// cleared every generation; the counters never go backwards.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationRegistry {
    connections: HashMap<(u32, u32), u64>,
    splits: HashMap<u64, (u32, u64, u64)>,
    next_innovation: u64,
    next_node: u32,
}

impl InnovationRegistry {
    pub fn new(n_inputs: usize, n_outputs: usize) -> Self {
        Self {
            connections: HashMap::new(),
            splits: HashMap::new(),
            next_innovation: (n_inputs * n_outputs) as u64,
            next_node: (n_inputs + n_outputs) as u32,
        }
    }

    /// Moves the counters past every id used by `genome`.
    pub fn observe(&mut self, genome: &Genome) {
        if let Some(c) = genome.connections.last() {
            self.next_innovation = self.next_innovation.max(c.innovation + 1);
        }
        if let Some(n) = genome.nodes.last() {
            self.next_node = self.next_node.max(n.id + 1);
        }
    }

    pub fn connection(&mut self, from: u32, to: u32) -> u64 {
        let next = &mut self.next_innovation;
        *self.connections.entry((from, to)).or_insert_with(|| {
            let id = *next;
            *next += 1;
            id
        })
    }

    /// (new node, innovation of the in-link, innovation of the out-link).
    pub fn split(&mut self, innovation: u64) -> (u32, u64, u64) {
        if let Some(&s) = self.splits.get(&innovation) {
            return s;
        }
        let s = self.fresh_split();
        self.splits.insert(innovation, s);
        s
    }

    pub fn fresh_split(&mut self) -> (u32, u64, u64) {
        let node = self.next_node;
        self.next_node += 1;
        let a = self.next_innovation;
        self.next_innovation += 2;
        (node, a, a + 1)
    }

    pub fn reset_generation(&mut self) {
        self.connections.clear();
        self.splits.clear();
    }
}

#[cfg(test)]
mod tests;
