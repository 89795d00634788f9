//! Search configuration: one structured file describing a whole run.
//!
//! Defaults hit the search setup the engine is tuned for: population 32,
//! uniform crossover and mutation probabilities of 0.1, B = 5 blocks,
//! and a CIFAR macro template with N = 2 and 32 filters.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{external_slot_count, EvaluatorSettings, ObjectiveSpec};
use crate::evolution::EngineSettings;
use crate::network::{CostModel, MacroConfig};

/// Everything a search run needs. Parsed from a JSON file by the CLI;
/// unknown fields are rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population_size: usize,
    pub mu_cross: f64,
    pub mu_mut: f64,
    pub max_generations: u64,
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
    pub seed: u64,
    /// Objective slots in declared (and reported) order.
    pub objectives: Vec<ObjectiveSpec>,
    /// Blocks per cell (B).
    pub genome_blocks: usize,
    #[serde(rename = "macro")]
    pub macro_config: MacroConfig,
    /// External evaluator transport; required iff an `external`
    /// objective is declared.
    pub evaluator: Option<EvaluatorSettings>,
    /// Maximum concurrent evaluations in flight.
    pub parallelism: usize,
    pub count_batch_norm: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: 32,
            mu_cross: 0.1,
            mu_mut: 0.1,
            max_generations: 100,
            plateau_window: 10,
            plateau_epsilon: 1e-3,
            seed: 0,
            objectives: vec![ObjectiveSpec::Surrogate, ObjectiveSpec::Speed],
            genome_blocks: 5,
            macro_config: MacroConfig::default(),
            evaluator: None,
            parallelism: 1,
            count_batch_norm: true,
        }
    }
}

/// Subset of the config that defines the search itself; execution knobs
/// (parallelism, evaluator transport) are excluded so runs resumed on a
/// different machine, or re-run at a different parallelism, hash alike.
#[derive(Serialize)]
struct DefiningFields<'a> {
    population_size: usize,
    mu_cross: f64,
    mu_mut: f64,
    max_generations: u64,
    plateau_window: usize,
    plateau_epsilon: f64,
    seed: u64,
    objectives: &'a [ObjectiveSpec],
    genome_blocks: usize,
    #[serde(rename = "macro")]
    macro_config: &'a MacroConfig,
    count_batch_norm: bool,
}

impl SearchConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The engine-facing subset.
    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            population_size: self.population_size,
            mu_cross: self.mu_cross,
            mu_mut: self.mu_mut,
            max_generations: self.max_generations,
            plateau_window: self.plateau_window,
            plateau_epsilon: self.plateau_epsilon,
            seed: self.seed,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            count_batch_norm: self.count_batch_norm,
        }
    }

    /// SHA-256 over the search-defining fields; checkpoints carry this
    /// and resumption refuses a mismatch.
    pub fn hash(&self) -> String {
        let fields = DefiningFields {
            population_size: self.population_size,
            mu_cross: self.mu_cross,
            mu_mut: self.mu_mut,
            max_generations: self.max_generations,
            plateau_window: self.plateau_window,
            plateau_epsilon: self.plateau_epsilon,
            seed: self.seed,
            objectives: &self.objectives,
            genome_blocks: self.genome_blocks,
            macro_config: &self.macro_config,
            count_batch_norm: self.count_batch_norm,
        };
        let canonical = serde_json::to_string(&fields).expect("defining fields serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.engine_settings().validate().map_err(|e| e.to_string())?;
        if self.objectives.len() < 2 {
            return Err("at least 2 objectives must be declared".into());
        }
        if self.genome_blocks == 0 {
            return Err("genome_blocks must be at least 1".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        self.macro_config.validate().map_err(|e| e.to_string())?;
        let externals = external_slot_count(&self.objectives);
        match (&self.evaluator, externals) {
            (None, 0) => Ok(()),
            (None, _) => Err("external objectives declared but no evaluator configured".into()),
            (Some(settings), _) => settings.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(SearchConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_probability_and_odd_population() {
        let mut config = SearchConfig::default();
        config.mu_cross = 1.5;
        assert!(config.validate().is_err());
        let mut config = SearchConfig::default();
        config.population_size = 31;
        assert!(config.validate().is_err());
    }

    #[test]
    fn external_objective_requires_evaluator() {
        let mut config = SearchConfig::default();
        config.objectives = vec![ObjectiveSpec::External, ObjectiveSpec::Speed];
        assert!(config.validate().is_err());
        config.evaluator = Some(EvaluatorSettings::spawn_command(vec!["true".into()]));
        assert!(config.validate().is_ok());
    }

    #[test]
    fn hash_ignores_execution_fields_but_not_search_fields() {
        let base = SearchConfig::default();
        let mut parallel = base.clone();
        parallel.parallelism = 8;
        assert_eq!(base.hash(), parallel.hash());

        let mut with_evaluator = base.clone();
        with_evaluator.evaluator = Some(EvaluatorSettings::spawn_command(vec!["x".into()]));
        assert_eq!(base.hash(), with_evaluator.hash());

        let mut reseeded = base.clone();
        reseeded.seed = 1;
        assert_ne!(base.hash(), reseeded.hash());
    }

    #[test]
    fn json_round_trip_and_unknown_field_rejection() {
        let config = SearchConfig::default();
        let parsed = SearchConfig::from_json(&config.to_json_pretty()).unwrap();
        assert_eq!(config, parsed);
        assert!(SearchConfig::from_json(r#"{"population_sizee": 32}"#).is_err());
        // Partial files inherit defaults.
        let partial = SearchConfig::from_json(r#"{"seed": 7, "population_size": 8}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.population_size, 8);
        assert_eq!(partial.genome_blocks, 5);
    }
}
