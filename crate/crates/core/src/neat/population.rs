use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::genome::{compatibility_distance, crossover, Genome, GenomeError};
use super::{InnovationRegistry, NeatConfig};
use crate::rng::{derive, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub id: usize,
    pub representative: Genome,
    /// Indices into `Population::genomes`.
    pub members: Vec<usize>,
    pub best_fitness: f64,
    pub last_improved: usize,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub genomes: Vec<Genome>,
    pub species: Vec<Species>,
    pub generation: usize,
    pub registry: InnovationRegistry,
    pub best_ever: Option<Genome>,
    /// Times the population was rebuilt after every species died out.
    pub restarts: usize,
    n_inputs: usize,
    n_outputs: usize,
    next_species: usize,
    rng: Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub species: usize,
}

/// Generation 0: fully connected genomes with U[-1, 1] weights, or copies of
/// `seed` with perturbed weights (the first copy unperturbed).
pub fn initial_population(
    n_inputs: usize,
    n_outputs: usize,
    config: &NeatConfig,
    seed: Option<&Genome>,
) -> Result<Population, GenomeError> {
    if n_inputs == 0 || n_outputs == 0 {
        return Err(GenomeError::Invariant("need at least one input and one output".into()));
    }
    let mut rng = derive(config.seed, 0x4E45_4154);
    let mut registry = InnovationRegistry::new(n_inputs, n_outputs);
    let genomes = match seed {
        Some(s) => {
            s.check_schema(n_inputs, n_outputs)?;
            s.check()?;
            registry.observe(s);
            let mut first = s.clone();
            first.fitness = None;
            let mut genomes = vec![first.clone()];
            for _ in 1..config.population_size {
                let mut g = first.clone();
                g.jitter_weights(config.weight_perturb_sigma, &mut rng);
                genomes.push(g);
            }
            genomes
        }
        None => (0..config.population_size)
            .map(|_| Genome::fully_connected(n_inputs, n_outputs, || rng.random_range(-1.0..=1.0)))
            .collect(),
    };
    let mut pop = Population {
        genomes,
        species: Vec::new(),
        generation: 0,
        registry,
        best_ever: None,
        restarts: 0,
        n_inputs,
        n_outputs,
        next_species: 0,
        rng,
    };
    pop.speciate(config);
    Ok(pop)
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

fn goodness(f: f64) -> f64 {
    if f.is_finite() {
        1.0 / (1.0 + f.max(0.0))
    } else {
        0.0
    }
}

impl Population {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    /// Forgets every fitness value (the fitness landscape changed).
    pub fn invalidate(&mut self) {
        for g in &mut self.genomes {
            g.fitness = None;
        }
        self.best_ever = None;
        for s in &mut self.species {
            s.best_fitness = f64::INFINITY;
            s.last_improved = self.generation;
        }
    }

    /// Best genome of the current (evaluated) generation.
    pub fn champion(&self) -> Option<&Genome> {
        self.genomes
            .iter()
            .filter(|g| g.fitness.is_some())
            .min_by(|a, b| a.fitness.unwrap().total_cmp(&b.fitness.unwrap()))
    }

    /// Assigns fitness to every genome lacking one; evaluations may run in
    /// parallel on the current rayon pool. Updates `best_ever`.
    pub fn evaluate<F>(&mut self, fitness_of: F) -> GenerationStats
    where
        F: Fn(&Genome) -> f64 + Sync,
    {
        self.evaluate_indexed(|_, g| fitness_of(g))
    }

    /// As [`Population::evaluate`], also passing each genome's index.
    pub fn evaluate_indexed<F>(&mut self, fitness_of: F) -> GenerationStats
    where
        F: Fn(usize, &Genome) -> f64 + Sync,
    {
        let values: Vec<f64> = self
            .genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| g.fitness.unwrap_or_else(|| sanitize(fitness_of(i, g))))
            .collect();
        for (g, v) in self.genomes.iter_mut().zip(&values) {
            g.fitness = Some(*v);
        }
        let (best_idx, best) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let improves = match &self.best_ever {
            Some(b) => best < b.fitness.unwrap_or(f64::INFINITY),
            None => true,
        };
        if improves {
            self.best_ever = Some(self.genomes[best_idx].clone());
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let mean = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        GenerationStats {
            generation: self.generation,
            best,
            mean,
            species: self.species.len(),
        }
    }

    /// Places every genome in the first species whose representative lies
    /// within the compatibility threshold, founding new species as needed.
    fn speciate(&mut self, config: &NeatConfig) {
        for s in &mut self.species {
            s.members.clear();
        }
        for (i, g) in self.genomes.iter().enumerate() {
            let home = self
                .species
                .iter()
                .position(|s| compatibility_distance(&s.representative, g, config) < config.compatibility_threshold);
            match home {
                Some(k) => self.species[k].members.push(i),
                None => {
                    self.species.push(Species {
                        id: self.next_species,
                        representative: g.clone(),
                        members: vec![i],
                        best_fitness: f64::INFINITY,
                        last_improved: self.generation,
                    });
                    self.next_species += 1;
                }
            }
        }
        self.species.retain(|s| !s.members.is_empty());
        // Representatives for the next round: a random member.
        for s in &mut self.species {
            let pick = *s.members.choose(&mut self.rng).expect("nonempty");
            s.representative = self.genomes[pick].clone();
        }
    }

    /// Builds the next generation from the evaluated current one.
    pub fn reproduce(&mut self, config: &NeatConfig) -> Result<(), GenomeError> {
        if self.genomes.iter().any(|g| g.fitness.is_none()) {
            return Err(GenomeError::MissingFitness);
        }
        let fit = |i: usize, genomes: &[Genome]| genomes[i].fitness.unwrap();
        let best_idx = (0..self.genomes.len())
            .min_by(|&a, &b| fit(a, &self.genomes).total_cmp(&fit(b, &self.genomes)))
            .expect("nonempty population");

        // Stagnation bookkeeping.
        for s in &mut self.species {
            let best = s
                .members
                .iter()
                .map(|&i| fit(i, &self.genomes))
                .fold(f64::INFINITY, f64::min);
            if best < s.best_fitness {
                s.best_fitness = best;
                s.last_improved = self.generation;
            }
        }
        let generation = self.generation;
        let limit = config.stagnation_limit;
        self.species
            .retain(|s| s.members.contains(&best_idx) || generation - s.last_improved <= limit);
        if self.species.is_empty() {
            return self.restart(config);
        }

        // Offspring quotas from mean goodness (the sum of shared fitness).
        let n = config.population_size;
        let scores: Vec<f64> = self
            .species
            .iter()
            .map(|s| s.members.iter().map(|&i| goodness(fit(i, &self.genomes))).sum::<f64>() / s.members.len() as f64)
            .collect();
        let total: f64 = scores.iter().sum();
        let raw: Vec<f64> = if total > 0.0 {
            scores.iter().map(|s| s / total * n as f64).collect()
        } else {
            vec![n as f64 / scores.len() as f64; scores.len()]
        };
        let mut quotas: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
        let mut assigned: usize = quotas.iter().sum();
        for &k in order.iter().cycle() {
            if assigned >= n {
                break;
            }
            quotas[k] += 1;
            assigned += 1;
        }
        let best_species = self
            .species
            .iter()
            .position(|s| s.members.contains(&best_idx))
            .expect("best species retained");
        if quotas[best_species] == 0 {
            let donor = (0..quotas.len()).max_by_key(|&k| quotas[k]).unwrap();
            quotas[donor] -= 1;
            quotas[best_species] = 1;
        }

        let mut next = Vec::with_capacity(n);
        for (s, &quota) in self.species.iter().zip(&quotas) {
            if quota == 0 {
                continue;
            }
            let mut ranked = s.members.clone();
            ranked.sort_by(|&a, &b| fit(a, &self.genomes).total_cmp(&fit(b, &self.genomes)).then(a.cmp(&b)));
            // Elites only from species of more than five, plus the overall
            // champion; otherwise tiny species freeze most of the population.
            let elites = if ranked.len() > 5 || ranked.contains(&best_idx) {
                config.elitism.min(quota).min(ranked.len())
            } else {
                0
            };
            for &i in &ranked[..elites] {
                next.push(self.genomes[i].clone());
            }
            let keep = ((config.survival_fraction * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
            let pool = &ranked[..keep];
            for _ in elites..quota {
                let a = *pool.choose(&mut self.rng).unwrap();
                let mut child = if pool.len() > 1 && self.rng.random::<f64>() < config.crossover_rate {
                    let b = *pool.choose(&mut self.rng).unwrap();
                    crossover(&self.genomes[a], &self.genomes[b], &mut self.rng)?
                } else {
                    self.genomes[a].clone()
                };
                child.mutate(config, &mut self.registry, &mut self.rng);
                next.push(child);
            }
        }
        self.genomes = next;
        self.generation += 1;
        self.registry.reset_generation();
        self.speciate(config);
        Ok(())
    }

    fn restart(&mut self, config: &NeatConfig) -> Result<(), GenomeError> {
        self.restarts += 1;
        log::warn!("all species went extinct; restarting population (restart {})", self.restarts);
        let mut fresh_config = config.clone();
        fresh_config.seed = config.seed.wrapping_add(0x9E37 * self.restarts as u64);
        let fresh = initial_population(self.n_inputs, self.n_outputs, &fresh_config, None)?;
        self.genomes = fresh.genomes;
        self.species = fresh.species;
        for s in &mut self.species {
            s.id += self.next_species;
            s.last_improved = self.generation + 1;
        }
        self.next_species += self.species.len();
        self.generation += 1;
        self.registry.reset_generation();
        Ok(())
    }
}

/// Evaluates the current generation, then replaces it with its offspring.
pub fn evolve_generation<F>(
    population: &mut Population,
    fitness_of: F,
    config: &NeatConfig,
) -> Result<GenerationStats, GenomeError>
where
    F: Fn(&Genome) -> f64 + Sync,
{
    let stats = population.evaluate(fitness_of);
    population.reproduce(config)?;
    Ok(stats)
}
