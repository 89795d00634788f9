//! Objective evaluation: built-in analytic objectives composed with
//! surrogate or external accuracy, cached parallel dispatch, the wire
//! protocol to out-of-process evaluators, and the engine-validation
//! benchmark.

mod benchmark;
mod dispatch;
mod protocol;

pub use benchmark::{
    benchmark_objectives, zdt1_front_distance, zdt1_front_hypervolume, BenchmarkGenome,
    Zdt1Problem,
};
pub use dispatch::{dispatch, parallel_map, DispatchError, DispatchOutcome, EvalJob};
pub use protocol::{EvaluationRequest, EvaluationResponse, EvaluatorSettings, ExternalEvaluator};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolution::SearchProblem;
use crate::genome::{crossover, mutate, random_genome, Genome};
use crate::network::{speed, CostModel, CostReport, MacroConfig, NetworkError};
use crate::pareto::ObjectiveVector;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("objective composition failed: {0}")]
    Compose(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// One declared objective slot, in maximization convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// Built-in: `2e9 / FLOPS` from the analytic cost model.
    Speed,
    /// Built-in: `1e6 / parameter count`.
    ParamsInverse,
    /// Filled by the external evaluator (wire protocol).
    External,
    /// Built-in deterministic accuracy surrogate.
    Surrogate,
}

impl ObjectiveSpec {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveSpec::Speed => "speed",
            ObjectiveSpec::ParamsInverse => "params_inverse",
            ObjectiveSpec::External => "external",
            ObjectiveSpec::Surrogate => "surrogate",
        }
    }
}

/// Number of slots an external evaluator must fill per response.
pub fn external_slot_count(objectives: &[ObjectiveSpec]) -> usize {
    objectives
        .iter()
        .filter(|o| **o == ObjectiveSpec::External)
        .count()
}

fn canonical_perturbation(canonical: &str) -> f64 {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let unit = u64::from_be_bytes(bytes) as f64 / u64::MAX as f64;
    -0.02 + 0.04 * unit
}

fn surrogate_from_parts(mult_adds: u64, canonical: &str) -> f64 {
    let m = mult_adds as f64;
    0.50 + 0.45 * (1.0 - (-m / 3e8).exp()) + canonical_perturbation(canonical)
}

/// Deterministic stand-in for proxy-training accuracy, in (0.48, 0.97):
/// `0.50 + 0.45 * (1 - exp(-mult_adds / 3e8))` plus a [-0.02, +0.02]
/// perturbation derived from a SHA-256 hash of the canonical genome
/// text. Bigger networks trend more accurate, with genome-sensitive
/// structure on top, so a genuine accuracy/speed trade-off emerges.
pub fn surrogate_accuracy(genome: &Genome, m: &MacroConfig) -> Result<f64, NetworkError> {
    let cost = CostModel::default().network_cost(genome, m)?;
    Ok(surrogate_from_parts(cost.mult_adds, &genome.to_canonical()))
}

/// Assembles the full objective vector in declared order. Built-in slots
/// are computed from the cost report and genome; `external` slots are
/// consumed from `external_values` left to right.
pub fn compose_objectives(
    objectives: &[ObjectiveSpec],
    genome: &Genome,
    cost: &CostReport,
    external_values: &[f64],
) -> Result<ObjectiveVector, EvalError> {
    let mut external = external_values.iter();
    let mut values = Vec::with_capacity(objectives.len());
    for spec in objectives {
        let value = match spec {
            ObjectiveSpec::Speed => speed(cost)?,
            ObjectiveSpec::ParamsInverse => {
                if cost.params == 0 {
                    return Err(EvalError::Compose("params_inverse of zero parameters".into()));
                }
                1e6 / cost.params as f64
            }
            ObjectiveSpec::Surrogate => surrogate_from_parts(cost.mult_adds, &genome.to_canonical()),
            ObjectiveSpec::External => *external.next().ok_or_else(|| {
                EvalError::Compose("missing external value for declared external objective".into())
            })?,
        };
        values.push(value);
    }
    ObjectiveVector::new(values)
        .map_err(|e| EvalError::Compose(format!("composed vector invalid: {e}")))
}

/// The cell-architecture search problem: genomes are [`Genome`]s,
/// objectives mix built-in analytic values with surrogate or external
/// accuracy.
pub struct CellSearchProblem {
    pub blocks: usize,
    pub macro_config: MacroConfig,
    pub objectives: Vec<ObjectiveSpec>,
    pub cost_model: CostModel,
    pub parallelism: usize,
    external: Option<ExternalEvaluator>,
}

impl CellSearchProblem {
    /// A problem with no external slots (surrogate and built-in
    /// objectives only).
    pub fn in_process(
        blocks: usize,
        macro_config: MacroConfig,
        objectives: Vec<ObjectiveSpec>,
        cost_model: CostModel,
        parallelism: usize,
    ) -> Result<Self, EvalError> {
        if external_slot_count(&objectives) > 0 {
            return Err(EvalError::Compose(
                "external objectives declared but no evaluator attached".into(),
            ));
        }
        Ok(CellSearchProblem {
            blocks,
            macro_config,
            objectives,
            cost_model,
            parallelism,
            external: None,
        })
    }

    /// A problem whose `external` slots are served by `evaluator`.
    pub fn with_external(
        blocks: usize,
        macro_config: MacroConfig,
        objectives: Vec<ObjectiveSpec>,
        cost_model: CostModel,
        parallelism: usize,
        evaluator: ExternalEvaluator,
    ) -> Self {
        CellSearchProblem {
            blocks,
            macro_config,
            objectives,
            cost_model,
            parallelism,
            external: Some(evaluator),
        }
    }
}

impl SearchProblem for CellSearchProblem {
    type Genome = Genome;

    fn objective_count(&self) -> usize {
        self.objectives.len()
    }

    fn random_genome(&self, rng: &mut ChaCha8Rng) -> Genome {
        random_genome(rng, self.blocks).expect("block count validated")
    }

    fn mutate(&self, genome: &Genome, mu_mut: f64, rng: &mut ChaCha8Rng) -> Genome {
        mutate(genome, mu_mut, rng)
    }

    fn crossover(
        &self,
        a: &Genome,
        b: &Genome,
        mu_cross: f64,
        rng: &mut ChaCha8Rng,
    ) -> (Genome, Genome) {
        crossover(a, b, mu_cross, rng).expect("population genomes share one block count")
    }

    fn cache_key(&self, genome: &Genome) -> String {
        genome.to_canonical()
    }

    fn evaluate(
        &mut self,
        jobs: &[EvalJob<Genome>],
    ) -> Result<Vec<Result<ObjectiveVector, String>>, DispatchError> {
        // Analytic part first, fanned out in-process.
        let cost_model = self.cost_model;
        let macro_config = self.macro_config.clone();
        let costs: Vec<Result<CostReport, String>> = parallel_map(jobs, self.parallelism, |job| {
            cost_model
                .network_cost(&job.genome, &macro_config)
                .map_err(|e| e.to_string())
        });

        // External part, if declared: one request per job, joined by id.
        let slots = external_slot_count(&self.objectives);
        let mut external_values: Vec<Result<Vec<f64>, String>> = vec![Ok(Vec::new()); jobs.len()];
        if slots > 0 {
            let evaluator = self
                .external
                .as_mut()
                .ok_or_else(|| DispatchError::Transport("no external evaluator attached".into()))?;
            let requests: Vec<EvaluationRequest> = jobs
                .iter()
                .map(|job| EvaluationRequest {
                    id: job.id,
                    genome: job.genome.clone(),
                    macro_config: macro_config.clone(),
                })
                .collect();
            let responses = evaluator.evaluate_batch(&requests)?;
            for (slot, response) in external_values.iter_mut().zip(responses) {
                *slot = match (response.objectives, response.error) {
                    (Some(values), None) if values.len() == slots => Ok(values),
                    (Some(values), None) => Err(format!(
                        "evaluator returned {} objectives, expected {slots}",
                        values.len()
                    )),
                    (_, Some(error)) => Err(error),
                    (None, None) => Err("response carried neither objectives nor error".into()),
                };
            }
        }

        Ok(jobs
            .iter()
            .zip(costs)
            .zip(external_values)
            .map(|((job, cost), external)| {
                let cost = cost?;
                let external = external?;
                compose_objectives(&self.objectives, &job.genome, &cost, &external)
                    .map_err(|e| e.to_string())
            })
            .collect())
    }
}
