//! The generational search loop: mating selection, variation, evaluation
//! dispatch, survival selection, hall-of-fame archive, and
//! hypervolume-plateau convergence.
//!
//! The engine is generic over a [`SearchProblem`]: any representation
//! providing random initialization, uniform mutation/crossover, a
//! canonical cache key, and batch evaluation can be searched. Two
//! problems ship with the crate: the cell-architecture search
//! ([`crate::eval::CellSearchProblem`]) and the ZDT1 engine-validation
//! benchmark ([`crate::eval::Zdt1Problem`]).
//!
//! Every run is deterministic given (config, seed, deterministic
//! evaluator): the RNG is consumed on the single loop thread only, and
//! evaluation results are joined by offspring index, so the parallelism
//! level never affects outcomes.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{dispatch, DispatchError, DispatchOutcome, EvalJob};
use crate::pareto::{
    crowded_compare, hypervolume_2d, non_dominated_sort, select_indices, CrowdedKey,
    ObjectiveVector, ParetoError,
};

/// Objective value assigned when evaluation fails beyond the retry
/// policy: finite, but worse than anything a real evaluation produces,
/// so the individual is never selected over a healthy one.
pub const FAILED_OBJECTIVE: f64 = -1e18;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error("evaluation dispatch failed: {0}")]
    Dispatch(#[from] DispatchError),
    #[error("individual {0} entered selection without objectives")]
    Unevaluated(u64),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("observer failed: {0}")]
    Observer(#[from] std::io::Error),
}

/// A representation the engine can search: initialization, uniform
/// variation operators, a canonical cache key, and batch evaluation.
///
/// `evaluate` must be a deterministic function of the genome for
/// reproducible runs, and must return one result per job in job order.
/// Per-genome failures are `Err(reason)` entries (the engine applies the
/// failure policy); a transport-level breakdown is a `DispatchError`.
pub trait SearchProblem {
    type Genome: Clone + PartialEq + Serialize + DeserializeOwned;

    fn objective_count(&self) -> usize;
    fn random_genome(&self, rng: &mut ChaCha8Rng) -> Self::Genome;
    fn mutate(&self, genome: &Self::Genome, mu_mut: f64, rng: &mut ChaCha8Rng) -> Self::Genome;
    fn crossover(
        &self,
        a: &Self::Genome,
        b: &Self::Genome,
        mu_cross: f64,
        rng: &mut ChaCha8Rng,
    ) -> (Self::Genome, Self::Genome);
    /// Canonical text of the genome; equal genomes must map to equal keys.
    fn cache_key(&self, genome: &Self::Genome) -> String;
    fn evaluate(
        &mut self,
        jobs: &[EvalJob<Self::Genome>],
    ) -> Result<Vec<Result<ObjectiveVector, String>>, DispatchError>;
}

/// One population or archive member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual<G> {
    pub genome: G,
    pub objectives: Option<ObjectiveVector>,
    /// Monotone evaluation-order id, unique within a run.
    pub id: u64,
    pub birth_generation: u64,
}

impl<G> Individual<G> {
    fn vector(&self) -> Result<&ObjectiveVector, EvolutionError> {
        self.objectives
            .as_ref()
            .ok_or(EvolutionError::Unevaluated(self.id))
    }
}

/// Engine-facing knobs of a search run (a subset of
/// [`crate::config::SearchConfig`], which adds the problem-specific
/// settings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub population_size: usize,
    pub mu_cross: f64,
    pub mu_mut: f64,
    pub max_generations: u64,
    /// Plateau window W: converged when the relative hypervolume gain
    /// over the last W generations falls below `plateau_epsilon`.
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
    pub seed: u64,
}

impl EngineSettings {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return Err(EvolutionError::Config(format!(
                "population size must be even and at least 2, got {}",
                self.population_size
            )));
        }
        for (name, p) in [("mu_cross", self.mu_cross), ("mu_mut", self.mu_mut)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvolutionError::Config(format!(
                    "{name} must be a probability in [0, 1], got {p}"
                )));
            }
        }
        if self.plateau_window == 0 {
            return Err(EvolutionError::Config("plateau window must be at least 1".into()));
        }
        if !(self.plateau_epsilon >= 0.0) {
            return Err(EvolutionError::Config("plateau epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Full state of a search run.
///
/// The evaluation cache maps canonical genome text to objective vectors;
/// it is in-memory only and deliberately absent from checkpoints (a
/// resumed run re-evaluates on demand, which is value-identical for
/// deterministic evaluators).
#[derive(Debug, Clone)]
pub struct SearchState<G> {
    pub generation: u64,
    pub population: Vec<Individual<G>>,
    /// Hall of fame: mutually non-dominated over everything evaluated,
    /// kept sorted by id.
    pub archive: Vec<Individual<G>>,
    pub rng: ChaCha8Rng,
    /// Archive hypervolume per generation, entry 0 recorded at
    /// initialization. Non-decreasing.
    pub hypervolume_history: Vec<f64>,
    pub next_id: u64,
    pub eval_cache: HashMap<String, ObjectiveVector>,
}

/// Serialized form of a [`SearchState`]: one checkpoint file per
/// generation. The config hash guards resumption against a different
/// search definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<G> {
    pub generation: u64,
    pub config_hash: String,
    pub rng: ChaCha8Rng,
    pub next_id: u64,
    pub population: Vec<Individual<G>>,
    pub archive: Vec<Individual<G>>,
    pub hypervolume_history: Vec<f64>,
}

impl<G: Clone + Serialize + DeserializeOwned> Checkpoint<G> {
    pub fn from_state(state: &SearchState<G>, config_hash: &str) -> Self {
        Checkpoint {
            generation: state.generation,
            config_hash: config_hash.to_string(),
            rng: state.rng.clone(),
            next_id: state.next_id,
            population: state.population.clone(),
            archive: state.archive.clone(),
            hypervolume_history: state.hypervolume_history.clone(),
        }
    }

    /// Rebuilds run state; the cache starts empty.
    pub fn into_state(self, config_hash: &str) -> Result<SearchState<G>, EvolutionError> {
        if self.config_hash != config_hash {
            return Err(EvolutionError::Checkpoint(format!(
                "config hash mismatch: checkpoint {}, current {config_hash}",
                self.config_hash
            )));
        }
        Ok(SearchState {
            generation: self.generation,
            population: self.population,
            archive: self.archive,
            rng: self.rng,
            hypervolume_history: self.hypervolume_history,
            next_id: self.next_id,
            eval_cache: HashMap::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, EvolutionError> {
        serde_json::from_str(text).map_err(|e| EvolutionError::Checkpoint(e.to_string()))
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    HypervolumePlateau,
    MaxGenerations,
}

/// Outcome of [`run`]: the final state plus bookkeeping.
#[derive(Debug)]
pub struct SearchResult<G> {
    pub state: SearchState<G>,
    pub stop_reason: StopReason,
    pub evaluations: u64,
    pub cache_hits: u64,
}

fn archive_hypervolume<G>(archive: &[Individual<G>], objective_count: usize) -> f64 {
    // Plateau monitoring is defined for two objectives; other dimensions
    // record zero and rely on max_generations to stop.
    if objective_count != 2 {
        return 0.0;
    }
    let reference = ObjectiveVector::new(vec![0.0, 0.0]).expect("valid reference");
    let points: Vec<ObjectiveVector> = archive
        .iter()
        .filter_map(|ind| ind.objectives.clone())
        .collect();
    hypervolume_2d(&points, &reference).expect("dimension checked")
}

/// Merges newcomers into the hall of fame: the union is filtered to its
/// non-dominated subset, duplicate canonical genomes are kept once
/// (lowest id wins), and the result is sorted by id. Size is unbounded.
pub fn update_archive<G: Clone + PartialEq>(
    archive: &[Individual<G>],
    newcomers: &[Individual<G>],
    cache_key: impl Fn(&G) -> String,
) -> Result<Vec<Individual<G>>, EvolutionError> {
    let mut merged: Vec<&Individual<G>> = archive.iter().chain(newcomers).collect();
    merged.sort_by_key(|ind| ind.id);

    let mut seen = std::collections::HashSet::new();
    let mut unique: Vec<&Individual<G>> = Vec::with_capacity(merged.len());
    for ind in merged {
        ind.vector()?;
        if seen.insert(cache_key(&ind.genome)) {
            unique.push(ind);
        }
    }

    let mut kept = Vec::new();
    for (i, candidate) in unique.iter().enumerate() {
        let v = candidate.vector()?;
        let dominated = unique
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && other.vector().map(|u| u.dominates(v)).unwrap_or(false));
        if !dominated {
            kept.push((*candidate).clone());
        }
    }
    Ok(kept)
}

/// Binary tournament under the crowded total order: two uniform picks
/// with replacement, keep the winner, repeated N times. Returns indices
/// into `population`.
pub fn mating_select<G>(
    population: &[Individual<G>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, EvolutionError> {
    let vectors: Vec<ObjectiveVector> = population
        .iter()
        .map(|ind| ind.vector().cloned())
        .collect::<Result<_, _>>()?;
    let levels = non_dominated_sort(&vectors)?;
    let key = |i: usize| CrowdedKey {
        rank: levels.rank[i],
        distance: levels.crowding[i],
        id: population[i].id,
    };
    let n = population.len();
    Ok((0..n)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if crowded_compare(&key(a), &key(b)) == Ordering::Greater {
                b
            } else {
                a
            }
        })
        .collect())
}

fn evaluate_into_individuals<P: SearchProblem>(
    problem: &mut P,
    genomes: Vec<P::Genome>,
    first_id: u64,
    generation: u64,
    cache: &mut HashMap<String, ObjectiveVector>,
) -> Result<(Vec<Individual<P::Genome>>, DispatchOutcome), EvolutionError> {
    let jobs: Vec<EvalJob<P::Genome>> = genomes
        .iter()
        .enumerate()
        .map(|(i, genome)| EvalJob {
            id: first_id + i as u64,
            key: problem.cache_key(genome),
            genome: genome.clone(),
        })
        .collect();
    let outcome = dispatch(problem, &jobs, cache)?;
    let individuals = genomes
        .into_iter()
        .zip(&outcome.vectors)
        .enumerate()
        .map(|(i, (genome, vector))| Individual {
            genome,
            objectives: Some(vector.clone()),
            id: first_id + i as u64,
            birth_generation: generation,
        })
        .collect();
    Ok((individuals, outcome))
}

/// Builds the initial state: N random genomes, evaluated, archived, with
/// the generation-0 hypervolume recorded.
pub fn initialize<P: SearchProblem>(
    settings: &EngineSettings,
    problem: &mut P,
) -> Result<SearchState<P::Genome>, EvolutionError> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let genomes: Vec<P::Genome> = (0..settings.population_size)
        .map(|_| problem.random_genome(&mut rng))
        .collect();
    let mut cache = HashMap::new();
    let (population, _) = evaluate_into_individuals(problem, genomes, 0, 0, &mut cache)?;
    let archive = update_archive(&[], &population, |g| problem.cache_key(g))?;
    let hypervolume = archive_hypervolume(&archive, problem.objective_count());
    Ok(SearchState {
        generation: 0,
        population,
        archive,
        rng,
        hypervolume_history: vec![hypervolume],
        next_id: settings.population_size as u64,
        eval_cache: cache,
    })
}

/// Advances the state by one generation: tournament mating selection,
/// pairwise crossover then mutation, offspring evaluation (cache hits
/// skip dispatch), survival selection over parents plus offspring,
/// archive update, and hypervolume recording.
///
/// On a dispatch error the state is left untouched.
pub fn step<P: SearchProblem>(
    state: &mut SearchState<P::Genome>,
    settings: &EngineSettings,
    problem: &mut P,
) -> Result<DispatchOutcome, EvolutionError> {
    let n = settings.population_size;
    debug_assert_eq!(state.population.len(), n);

    // Work on a local RNG and cache so a failed step rolls back cleanly.
    let mut rng = state.rng.clone();
    let mut cache = state.eval_cache.clone();

    let parents = mating_select(&state.population, &mut rng)?;
    let mut offspring_genomes = Vec::with_capacity(n);
    for pair in parents.chunks(2) {
        let a = &state.population[pair[0]].genome;
        let b = &state.population[pair[1]].genome;
        let (c1, c2) = problem.crossover(a, b, settings.mu_cross, &mut rng);
        offspring_genomes.push(problem.mutate(&c1, settings.mu_mut, &mut rng));
        offspring_genomes.push(problem.mutate(&c2, settings.mu_mut, &mut rng));
    }

    let (offspring, outcome) = evaluate_into_individuals(
        problem,
        offspring_genomes,
        state.next_id,
        state.generation + 1,
        &mut cache,
    )?;

    let union: Vec<Individual<P::Genome>> = state
        .population
        .iter()
        .chain(&offspring)
        .cloned()
        .collect();
    let vectors: Vec<ObjectiveVector> = union
        .iter()
        .map(|ind| ind.vector().cloned())
        .collect::<Result<_, _>>()?;
    let ids: Vec<u64> = union.iter().map(|ind| ind.id).collect();
    let selected = select_indices(&vectors, &ids, n)?;

    let archive = update_archive(&state.archive, &offspring, |g| problem.cache_key(g))?;
    let hypervolume = archive_hypervolume(&archive, problem.objective_count());
    debug_assert!(
        hypervolume + 1e-12 >= *state.hypervolume_history.last().unwrap_or(&0.0),
        "archive hypervolume must be non-decreasing"
    );

    state.population = selected.into_iter().map(|i| union[i].clone()).collect();
    state.archive = archive;
    state.hypervolume_history.push(hypervolume);
    state.generation += 1;
    state.next_id += n as u64;
    state.rng = rng;
    state.eval_cache = cache;
    Ok(outcome)
}

/// True when the run should stop: the generation count reached
/// `max_generations`, or at least `plateau_window` generations have run
/// and the relative hypervolume gain over the last window is below
/// `plateau_epsilon`.
pub fn converged<G>(state: &SearchState<G>, settings: &EngineSettings) -> bool {
    if state.generation >= settings.max_generations {
        return true;
    }
    let w = settings.plateau_window;
    if (state.generation as usize) < w {
        return false;
    }
    let history = &state.hypervolume_history;
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - w];
    let gain = if then == 0.0 {
        if now == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (now - then) / then
    };
    gain < settings.plateau_epsilon
}

/// Runs a full search: initialize, then step until [`converged`],
/// invoking `observer` after initialization and after every generation
/// (checkpointing hooks in here).
pub fn run<P: SearchProblem>(
    settings: &EngineSettings,
    problem: &mut P,
    mut observer: impl FnMut(&SearchState<P::Genome>) -> std::io::Result<()>,
) -> Result<SearchResult<P::Genome>, EvolutionError> {
    let state = initialize(settings, problem)?;
    observer(&state)?;
    resume(state, settings, problem, observer)
}

/// Continues a run from an existing state (fresh or from a checkpoint)
/// until convergence. The observer fires after each completed
/// generation.
pub fn resume<P: SearchProblem>(
    mut state: SearchState<P::Genome>,
    settings: &EngineSettings,
    problem: &mut P,
    mut observer: impl FnMut(&SearchState<P::Genome>) -> std::io::Result<()>,
) -> Result<SearchResult<P::Genome>, EvolutionError> {
    settings.validate()?;
    let mut evaluations = state.population.len() as u64;
    let mut cache_hits = 0;
    while !converged(&state, settings) {
        let outcome = step(&mut state, settings, problem)?;
        evaluations += outcome.dispatched as u64;
        cache_hits += outcome.cache_hits as u64;
        observer(&state)?;
    }
    let stop_reason = if state.generation >= settings.max_generations {
        StopReason::MaxGenerations
    } else {
        StopReason::HypervolumePlateau
    };
    Ok(SearchResult {
        state,
        stop_reason,
        evaluations,
        cache_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Zdt1Problem;

    fn settings(n: usize, max_generations: u64, seed: u64) -> EngineSettings {
        EngineSettings {
            population_size: n,
            mu_cross: 0.1,
            mu_mut: 0.1,
            max_generations,
            plateau_window: 10,
            plateau_epsilon: 1e-3,
            seed,
        }
    }

    fn ov(values: &[f64]) -> ObjectiveVector {
        ObjectiveVector::new(values.to_vec()).unwrap()
    }

    fn ind(id: u64, values: &[f64]) -> Individual<Vec<f64>> {
        Individual {
            genome: values.to_vec(),
            objectives: Some(ov(values)),
            id,
            birth_generation: 0,
        }
    }

    #[test]
    fn settings_validation() {
        assert!(settings(32, 1, 0).validate().is_ok());
        assert!(settings(3, 1, 0).validate().is_err());
        assert!(settings(0, 1, 0).validate().is_err());
        let mut bad = settings(4, 1, 0);
        bad.mu_cross = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn initialize_assigns_sequential_ids_and_archives_non_dominated() {
        let mut problem = Zdt1Problem::new(4, 1);
        let state = initialize(&settings(32, 10, 7), &mut problem).unwrap();
        assert_eq!(state.population.len(), 32);
        let ids: Vec<u64> = state.population.iter().map(|i| i.id).collect();
        assert_eq!(ids, (0..32).collect::<Vec<u64>>());
        assert_eq!(state.generation, 0);
        assert_eq!(state.hypervolume_history.len(), 1);

        // Brute-force the non-dominated subset of the initial population.
        let expected: Vec<u64> = state
            .population
            .iter()
            .filter(|a| {
                !state.population.iter().any(|b| {
                    b.objectives
                        .as_ref()
                        .unwrap()
                        .dominates(a.objectives.as_ref().unwrap())
                })
            })
            .map(|a| a.id)
            .collect();
        let archived: Vec<u64> = state.archive.iter().map(|a| a.id).collect();
        assert_eq!(archived, expected);
    }

    #[test]
    fn initialize_is_deterministic_per_seed() {
        let mut p1 = Zdt1Problem::new(4, 1);
        let mut p2 = Zdt1Problem::new(4, 1);
        let s1 = initialize(&settings(8, 10, 5), &mut p1).unwrap();
        let s2 = initialize(&settings(8, 10, 5), &mut p2).unwrap();
        assert_eq!(s1.population, s2.population);
    }

    #[test]
    fn mating_select_prefers_the_dominant_individual() {
        // One rank-0 member among rank-1 members wins every tournament
        // it enters.
        let mut population = vec![ind(0, &[10.0, 10.0])];
        for i in 1..8 {
            population.push(ind(i, &[i as f64 / 10.0, 1.0 - i as f64 / 10.0]));
        }
        let mut wins = 0;
        let trials = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..trials {
            let picks = mating_select(&population, &mut rng).unwrap();
            wins += picks.iter().filter(|&&p| p == 0).count();
        }
        let rate = wins as f64 / (trials * population.len()) as f64;
        // P(member 0 enters a 2-pick tournament) = 1 - (7/8)^2.
        let expected = 1.0 - (7.0f64 / 8.0).powi(2);
        assert!((rate - expected).abs() < 0.01, "rate {rate} vs {expected}");
    }

    #[test]
    fn mating_select_two_identical_members_is_deterministic() {
        let population = vec![ind(0, &[1.0, 1.0]), ind(1, &[1.0, 1.0])];
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            mating_select(&population, &mut a).unwrap(),
            mating_select(&population, &mut b).unwrap()
        );
    }

    #[test]
    fn update_archive_rules() {
        let key = |g: &Vec<f64>| format!("{g:?}");
        // Dominated newcomer: archive unchanged.
        let archive = vec![ind(0, &[2.0, 2.0])];
        let out = update_archive(&archive, &[ind(5, &[1.0, 1.0])], key).unwrap();
        assert_eq!(out, archive);

        // Newcomer dominating two members replaces both.
        let archive = vec![ind(0, &[2.0, 1.0]), ind(1, &[1.0, 2.0]), ind(2, &[0.5, 9.0])];
        let out = update_archive(&archive, &[ind(5, &[3.0, 3.0])], key).unwrap();
        let ids: Vec<u64> = out.iter().map(|i| i.id).collect();
        assert_eq!(ids, vec![2, 5]);

        // Duplicate canonical genome kept once (lowest id).
        let archive = vec![ind(0, &[2.0, 2.0])];
        let out = update_archive(&archive, &[ind(5, &[2.0, 2.0])], key).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 0);
    }

    #[test]
    fn update_archive_matches_brute_force_over_random_stream() {
        use rand::Rng;
        let key = |g: &Vec<f64>| format!("{g:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut archive: Vec<Individual<Vec<f64>>> = Vec::new();
        let mut all: Vec<Individual<Vec<f64>>> = Vec::new();
        for id in 0..1000u64 {
            let point = ind(id, &[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
            all.push(point.clone());
            archive = update_archive(&archive, &[point], key).unwrap();
        }
        let brute: Vec<u64> = all
            .iter()
            .filter(|a| {
                !all.iter().any(|b| {
                    b.objectives
                        .as_ref()
                        .unwrap()
                        .dominates(a.objectives.as_ref().unwrap())
                })
            })
            .map(|a| a.id)
            .collect();
        let archived: Vec<u64> = archive.iter().map(|a| a.id).collect();
        assert_eq!(archived, brute);
    }

    #[test]
    fn step_keeps_population_size_and_monotone_hypervolume() {
        let mut problem = Zdt1Problem::new(6, 1);
        let s = settings(16, 30, 13);
        let mut state = initialize(&s, &mut problem).unwrap();
        let mut last_hv = state.hypervolume_history[0];
        for _ in 0..30 {
            step(&mut state, &s, &mut problem).unwrap();
            assert_eq!(state.population.len(), 16);
            let hv = *state.hypervolume_history.last().unwrap();
            assert!(hv + 1e-12 >= last_hv);
            last_hv = hv;
        }
        assert_eq!(state.generation, 30);
        assert_eq!(state.next_id, 16 + 30 * 16);
    }

    #[test]
    fn converged_on_constant_history_and_growth() {
        let s = settings(4, 1000, 0);
        let mut state = SearchState::<Vec<f64>> {
            generation: 20,
            population: Vec::new(),
            archive: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            hypervolume_history: vec![1.0; 21],
            next_id: 0,
            eval_cache: HashMap::new(),
        };
        assert!(converged(&state, &s));

        // 1% growth per generation never plateaus at epsilon 1e-3.
        state.hypervolume_history = (0..21).map(|i| 1.01f64.powi(i)).collect();
        assert!(!converged(&state, &s));

        // Too few generations: not converged even if flat.
        state.generation = 5;
        state.hypervolume_history = vec![1.0; 6];
        assert!(!converged(&state, &s));
    }

    #[test]
    fn converged_at_logistic_plateau_index() {
        // Logistic-shaped history: find the first generation where the
        // windowed relative gain drops below epsilon, then check the
        // engine agrees at exactly that index.
        let s = settings(4, 1000, 0);
        let history: Vec<f64> = (0..60)
            .map(|i| 1.0 / (1.0 + (-0.5 * (i as f64 - 20.0)).exp()))
            .collect();
        let w = s.plateau_window;
        let mut expected = None;
        for g in w..history.len() {
            let gain = (history[g] - history[g - w]) / history[g - w];
            if gain < s.plateau_epsilon {
                expected = Some(g as u64);
                break;
            }
        }
        let expected = expected.expect("fixture must plateau");
        for g in w..history.len() {
            let state = SearchState::<Vec<f64>> {
                generation: g as u64,
                population: Vec::new(),
                archive: Vec::new(),
                rng: ChaCha8Rng::seed_from_u64(0),
                hypervolume_history: history[..=g].to_vec(),
                next_id: 0,
                eval_cache: HashMap::new(),
            };
            assert_eq!(converged(&state, &s), g as u64 >= expected, "generation {g}");
        }
    }

    #[test]
    fn run_zero_generations_returns_initial_archive() {
        let mut problem = Zdt1Problem::new(4, 1);
        let s = settings(8, 0, 21);
        let result = run(&s, &mut problem, |_| Ok(())).unwrap();
        assert_eq!(result.state.generation, 0);
        assert_eq!(result.stop_reason, StopReason::MaxGenerations);
        assert!(!result.state.archive.is_empty());
    }

    #[test]
    fn resume_from_checkpoint_matches_uninterrupted_run() {
        let s = settings(8, 12, 33);
        let mut p1 = Zdt1Problem::new(5, 1);
        let full = run(&s, &mut p1, |_| Ok(())).unwrap();

        // Capture the state at generation 6 via the observer, round-trip
        // it through a checkpoint, and continue.
        let mut snapshot = None;
        let mut p2 = Zdt1Problem::new(5, 1);
        run(&s, &mut p2, |state| {
            if state.generation == 6 {
                snapshot = Some(Checkpoint::from_state(state, "h"));
            }
            Ok(())
        })
        .unwrap();
        let restored = Checkpoint::from_json(&snapshot.unwrap().to_json())
            .unwrap()
            .into_state("h")
            .unwrap();
        let mut p3 = Zdt1Problem::new(5, 1);
        let resumed = resume(restored, &s, &mut p3, |_| Ok(())).unwrap();

        assert_eq!(resumed.state.generation, full.state.generation);
        assert_eq!(resumed.state.population, full.state.population);
        assert_eq!(resumed.state.archive, full.state.archive);
        assert_eq!(
            resumed.state.hypervolume_history,
            full.state.hypervolume_history
        );
    }

    #[test]
    fn checkpoint_rejects_config_hash_mismatch() {
        let mut problem = Zdt1Problem::new(4, 1);
        let state = initialize(&settings(4, 1, 0), &mut problem).unwrap();
        let checkpoint = Checkpoint::from_state(&state, "aaa");
        assert!(matches!(
            checkpoint.into_state("bbb"),
            Err(EvolutionError::Checkpoint(_))
        ));
    }
}
