//! Line-oriented `key = value` configuration with `[section]` headers.
//! Unknown sections or keys are errors; omitted keys keep their defaults.

use std::fmt::Write as _;

use thiserror::Error;

use crate::calibration::{LoopConfig, Objective};
use crate::neat::NeatConfig;
use crate::optimizers::{CompareConfig, OptimizerParams};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub neat: NeatConfig,
    /// `threads` is not part of the file format; it is a run option.
    pub calibration: LoopConfig,
    pub compare: CompareConfig,
    pub optimizers: OptimizerParams,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl Config {
    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, Vec<(&'static str, String)>)> {
        let n = &self.neat;
        let c = &self.calibration;
        let o = &self.optimizers;
        vec![
            (
                "neat",
                vec![
                    ("population_size", n.population_size.to_string()),
                    ("max_generations", n.max_generations.to_string()),
                    ("fitness_threshold", n.fitness_threshold.to_string()),
                    ("add_connection_rate", n.add_connection_rate.to_string()),
                    ("add_node_rate", n.add_node_rate.to_string()),
                    ("remove_connection_rate", n.remove_connection_rate.to_string()),
                    ("remove_node_rate", n.remove_node_rate.to_string()),
                    ("weight_perturb_rate", n.weight_perturb_rate.to_string()),
                    ("weight_perturb_sigma", n.weight_perturb_sigma.to_string()),
                    ("weight_replace_rate", n.weight_replace_rate.to_string()),
                    ("crossover_rate", n.crossover_rate.to_string()),
                    ("c1", n.c1.to_string()),
                    ("c2", n.c2.to_string()),
                    ("c3", n.c3.to_string()),
                    ("compatibility_threshold", n.compatibility_threshold.to_string()),
                    ("stagnation_limit", n.stagnation_limit.to_string()),
                    ("elitism", n.elitism.to_string()),
                    ("survival_fraction", n.survival_fraction.to_string()),
                    ("seed", n.seed.to_string()),
                ],
            ),
            (
                "calibration",
                vec![
                    ("max_outer_iterations", c.max_outer_iterations.to_string()),
                    ("min_relative_improvement", c.min_relative_improvement.to_string()),
                    ("objective", c.objective.to_string()),
                    ("max_evaluations", c.max_evaluations.unwrap_or(0).to_string()),
                ],
            ),
            (
                "compare",
                vec![
                    ("budget", self.compare.budget.to_string()),
                    ("seed", self.compare.seed.to_string()),
                    ("acceptance_threshold", self.compare.acceptance_threshold.to_string()),
                ],
            ),
            (
                "sa",
                vec![
                    ("initial_temperature", o.sa.initial_temperature.to_string()),
                    ("cooling_rate", o.sa.cooling_rate.to_string()),
                    ("step", o.sa.step.to_string()),
                ],
            ),
            (
                "pso",
                vec![
                    ("swarm_size", o.pso.swarm_size.to_string()),
                    ("inertia", o.pso.inertia.to_string()),
                    ("cognitive", o.pso.cognitive.to_string()),
                    ("social", o.pso.social.to_string()),
                ],
            ),
            (
                "sceua",
                vec![
                    ("complexes", o.sce.complexes.to_string()),
                    ("complex_size", o.sce.complex_size.to_string()),
                ],
            ),
            (
                "ga",
                vec![
                    ("population", o.ga.population.to_string()),
                    ("crossover_rate", o.ga.crossover_rate.to_string()),
                    ("mutation_rate", o.ga.mutation_rate.to_string()),
                    ("mutation_sigma", o.ga.mutation_sigma.to_string()),
                    ("tournament_size", o.ga.tournament_size.to_string()),
                    ("blend_alpha", o.ga.blend_alpha.to_string()),
                ],
            ),
        ]
    }

    /// The config file form; `Config::parse(&c.dump()) == c` (threads aside).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, (section, keys)) in self.entries().into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// Sets `section.key` to `value`.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<(), ConfigError> {
        let key = dotted;
        let (section, name) = dotted
            .split_once('.')
            .ok_or_else(|| ConfigError::UnknownKey(dotted.to_string()))?;
        let n = &mut self.neat;
        let c = &mut self.calibration;
        let o = &mut self.optimizers;
        match (section, name) {
            ("neat", "population_size") => n.population_size = parse(key, value)?,
            ("neat", "max_generations") => n.max_generations = parse(key, value)?,
            ("neat", "fitness_threshold") => n.fitness_threshold = parse(key, value)?,
            ("neat", "add_connection_rate") => n.add_connection_rate = parse(key, value)?,
            ("neat", "add_node_rate") => n.add_node_rate = parse(key, value)?,
            ("neat", "remove_connection_rate") => n.remove_connection_rate = parse(key, value)?,
            ("neat", "remove_node_rate") => n.remove_node_rate = parse(key, value)?,
            ("neat", "weight_perturb_rate") => n.weight_perturb_rate = parse(key, value)?,
            ("neat", "weight_perturb_sigma") => n.weight_perturb_sigma = parse(key, value)?,
            ("neat", "weight_replace_rate") => n.weight_replace_rate = parse(key, value)?,
            ("neat", "crossover_rate") => n.crossover_rate = parse(key, value)?,
            ("neat", "c1") => n.c1 = parse(key, value)?,
            ("neat", "c2") => n.c2 = parse(key, value)?,
            ("neat", "c3") => n.c3 = parse(key, value)?,
            ("neat", "compatibility_threshold") => n.compatibility_threshold = parse(key, value)?,
            ("neat", "stagnation_limit") => n.stagnation_limit = parse(key, value)?,
            ("neat", "elitism") => n.elitism = parse(key, value)?,
            ("neat", "survival_fraction") => n.survival_fraction = parse(key, value)?,
            ("neat", "seed") => n.seed = parse(key, value)?,
            ("calibration", "max_outer_iterations") => c.max_outer_iterations = parse(key, value)?,
            ("calibration", "min_relative_improvement") => c.min_relative_improvement = parse(key, value)?,
            ("calibration", "objective") => c.objective = parse::<Objective>(key, value)?,
            ("calibration", "max_evaluations") => {
                let cap: usize = parse(key, value)?;
                c.max_evaluations = (cap > 0).then_some(cap);
            }
            ("compare", "budget") => self.compare.budget = parse(key, value)?,
            ("compare", "seed") => self.compare.seed = parse(key, value)?,
            ("compare", "acceptance_threshold") => self.compare.acceptance_threshold = parse(key, value)?,
            ("sa", "initial_temperature") => o.sa.initial_temperature = parse(key, value)?,
            ("sa", "cooling_rate") => o.sa.cooling_rate = parse(key, value)?,
            ("sa", "step") => o.sa.step = parse(key, value)?,
            ("pso", "swarm_size") => o.pso.swarm_size = parse(key, value)?,
            ("pso", "inertia") => o.pso.inertia = parse(key, value)?,
            ("pso", "cognitive") => o.pso.cognitive = parse(key, value)?,
            ("pso", "social") => o.pso.social = parse(key, value)?,
            ("sceua", "complexes") => o.sce.complexes = parse(key, value)?,
            ("sceua", "complex_size") => o.sce.complex_size = parse(key, value)?,
            ("ga", "population") => o.ga.population = parse(key, value)?,
            ("ga", "crossover_rate") => o.ga.crossover_rate = parse(key, value)?,
            ("ga", "mutation_rate") => o.ga.mutation_rate = parse(key, value)?,
            ("ga", "mutation_sigma") => o.ga.mutation_sigma = parse(key, value)?,
            ("ga", "tournament_size") => o.ga.tournament_size = parse(key, value)?,
            ("ga", "blend_alpha") => o.ga.blend_alpha = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(dotted.to_string())),
        }
        Ok(())
    }

    /// Reads a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Config::default();
        config.merge(text)?;
        Ok(config)
    }

    /// Applies the keys present in `text` to `self`.
    pub fn merge(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| ConfigError::Syntax {
                line: i + 1,
                message: message.to_string(),
            };
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let s = section.as_deref().ok_or_else(|| syntax("key outside any section"))?;
            self.set(&format!("{s}.{}", k.trim()), v.trim())?;
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        self.neat.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.optimizers.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.compare.budget == 0 {
            return Err(ConfigError::Invalid("compare.budget must be at least 1".into()));
        }
        if !(self.calibration.min_relative_improvement >= 0.0) {
            return Err(ConfigError::Invalid("calibration.min_relative_improvement must be nonnegative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_parses_back() {
        let mut c = Config::default();
        c.neat.population_size = 37;
        c.neat.weight_perturb_sigma = 0.1;
        c.calibration.max_evaluations = Some(900);
        c.optimizers.ga.blend_alpha = 0.3;
        assert_eq!(Config::parse(&c.dump()).unwrap(), c);
        assert_eq!(Config::parse(&Config::default().dump()).unwrap(), Config::default());
    }

    #[test]
    fn defaults_are_printed() {
        let d = Config::default().dump();
        assert!(d.contains("[neat]\npopulation_size = 100\nmax_generations = 100\nfitness_threshold = 0.1\n"));
        assert!(d.contains("add_connection_rate = 0.7\nadd_node_rate = 0.4\nremove_connection_rate = 0.4\nremove_node_rate = 0.2\n"));
        assert!(d.contains("acceptance_threshold = 3\n"));
        assert!(d.contains("objective = rmse:std\n"));
    }

    #[test]
    fn errors_name_the_problem() {
        assert_eq!(
            Config::parse("[neat]\nfoo = 1\n"),
            Err(ConfigError::UnknownKey("neat.foo".into()))
        );
        assert!(matches!(Config::parse("population_size = 3"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("[neat]\nelitism = x"), Err(ConfigError::Value { .. })));
        let mut c = Config::default();
        c.set("neat.population_size", "1").unwrap();
        assert!(c.check().is_err());
    }

    #[test]
    fn comments_and_partial_files() {
        let c = Config::parse("# tuned\n[ga]\npopulation = 60 # bigger\n").unwrap();
        assert_eq!(c.optimizers.ga.population, 60);
        assert_eq!(c.neat, NeatConfig::default());
    }
}
