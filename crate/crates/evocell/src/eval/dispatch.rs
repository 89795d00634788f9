//! Cached, order-independent evaluation dispatch.
//!
//! The engine hands a batch of offspring to [`dispatch`]; genomes whose
//! canonical text is already cached are filled without touching the
//! evaluator, remaining unique genomes are evaluated once each, and the
//! results are joined back by offspring index. The outcome is therefore
//! independent of evaluator parallelism and response arrival order.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::evolution::{SearchProblem, FAILED_OBJECTIVE};
use crate::pareto::ObjectiveVector;

/// Transport-level evaluation failure: the whole batch is unrecoverable
/// and the generation rolls back. Per-genome failures are not errors
/// here; they surface as failed entries handled by the worst-objective
/// policy.
#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("evaluator transport failed: {0}")]
    Transport(String),
    #[error("evaluator returned {got} results for {expected} jobs")]
    ResultCountMismatch { expected: usize, got: usize },
}

/// One genome to evaluate: its run-unique id and canonical cache key.
#[derive(Debug, Clone)]
pub struct EvalJob<G> {
    pub id: u64,
    pub key: String,
    pub genome: G,
}

/// What a dispatch round did.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutcome {
    /// One objective vector per input job, in job order.
    pub vectors: Vec<ObjectiveVector>,
    /// Unique cache misses actually sent to the evaluator.
    pub dispatched: usize,
    /// Jobs answered from the pre-existing cache.
    pub cache_hits: usize,
    /// Evaluations that failed and received worst-possible objectives.
    pub failures: usize,
}

/// Evaluates a batch through the cache.
///
/// Jobs sharing one canonical key are dispatched once; failures are
/// logged and assigned [`FAILED_OBJECTIVE`] in every coordinate (and
/// cached, so a failing genome is not re-dispatched within the run).
pub fn dispatch<P: SearchProblem>(
    problem: &mut P,
    jobs: &[EvalJob<P::Genome>],
    cache: &mut HashMap<String, ObjectiveVector>,
) -> Result<DispatchOutcome, DispatchError> {
    let mut cache_hits = 0;
    let mut miss_keys = Vec::new();
    let mut misses: Vec<EvalJob<P::Genome>> = Vec::new();
    for job in jobs {
        if cache.contains_key(&job.key) {
            cache_hits += 1;
        } else if !miss_keys.contains(&job.key) {
            miss_keys.push(job.key.clone());
            misses.push(job.clone());
        }
    }

    let mut failures = 0;
    if !misses.is_empty() {
        let results = problem.evaluate(&misses)?;
        if results.len() != misses.len() {
            return Err(DispatchError::ResultCountMismatch {
                expected: misses.len(),
                got: results.len(),
            });
        }
        let worst = ObjectiveVector::new(vec![FAILED_OBJECTIVE; problem.objective_count()])
            .expect("worst vector is valid");
        for (job, result) in misses.iter().zip(results) {
            let vector = match result {
                Ok(v) => v,
                Err(reason) => {
                    failures += 1;
                    log::warn!(
                        "evaluation of individual {} failed ({reason}); assigning worst objectives",
                        job.id
                    );
                    worst.clone()
                }
            };
            cache.insert(job.key.clone(), vector);
        }
    }

    let vectors = jobs
        .iter()
        .map(|job| cache[&job.key].clone())
        .collect();
    Ok(DispatchOutcome {
        vectors,
        dispatched: misses.len(),
        cache_hits,
        failures,
    })
}

/// Fork-join map with a bounded worker count and index-ordered results.
///
/// Work items are pulled from a shared counter by up to `parallelism`
/// threads; results land in their input slot, so the output order never
/// depends on scheduling.
pub fn parallel_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    assert!(parallelism >= 1, "parallelism must be at least 1");
    if parallelism == 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("worker filled every slot")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Zdt1Problem;
    use crate::evolution::SearchProblem;

    fn job(id: u64, values: &[f64]) -> EvalJob<crate::eval::BenchmarkGenome> {
        let genome = crate::eval::BenchmarkGenome(values.to_vec());
        EvalJob {
            id,
            key: serde_json::to_string(&genome).unwrap(),
            genome,
        }
    }

    #[test]
    fn identical_jobs_dispatch_once() {
        let mut problem = Zdt1Problem::new(3, 1);
        let mut cache = HashMap::new();
        let jobs: Vec<_> = (0..8).map(|i| job(i, &[0.5, 0.1, 0.2])).collect();
        let outcome = dispatch(&mut problem, &jobs, &mut cache).unwrap();
        assert_eq!(outcome.dispatched, 1);
        assert_eq!(outcome.cache_hits, 0);
        assert!(outcome.vectors.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn cached_jobs_skip_dispatch() {
        let mut problem = Zdt1Problem::new(3, 1);
        let mut cache = HashMap::new();
        let first: Vec<_> = (0..7).map(|i| job(i, &[i as f64 / 10.0, 0.0, 0.0])).collect();
        dispatch(&mut problem, &first, &mut cache).unwrap();

        // 32 jobs, 7 already cached: 25 dispatches.
        let second: Vec<_> = (0..32)
            .map(|i| {
                if i < 7 {
                    job(100 + i, &[i as f64 / 10.0, 0.0, 0.0])
                } else {
                    job(100 + i, &[0.001 + i as f64 / 1000.0, 0.0, 0.0])
                }
            })
            .collect();
        let outcome = dispatch(&mut problem, &second, &mut cache).unwrap();
        assert_eq!(outcome.cache_hits, 7);
        assert_eq!(outcome.dispatched, 25);
    }

    #[test]
    fn dispatch_outcome_is_parallelism_invariant() {
        let jobs: Vec<_> = (0..16)
            .map(|i| job(i, &[i as f64 / 16.0, 0.3, 0.7]))
            .collect();
        let mut serial = Zdt1Problem::new(3, 1);
        let mut cache1 = HashMap::new();
        let a = dispatch(&mut serial, &jobs, &mut cache1).unwrap();
        let mut wide = Zdt1Problem::new(3, 8);
        let mut cache2 = HashMap::new();
        let b = dispatch(&mut wide, &jobs, &mut cache2).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn failures_get_worst_objectives_and_are_cached() {
        struct Failing;
        impl SearchProblem for Failing {
            type Genome = u32;
            fn objective_count(&self) -> usize {
                2
            }
            fn random_genome(&self, _: &mut rand_chacha::ChaCha8Rng) -> u32 {
                0
            }
            fn mutate(&self, g: &u32, _: f64, _: &mut rand_chacha::ChaCha8Rng) -> u32 {
                *g
            }
            fn crossover(
                &self,
                a: &u32,
                b: &u32,
                _: f64,
                _: &mut rand_chacha::ChaCha8Rng,
            ) -> (u32, u32) {
                (*a, *b)
            }
            fn cache_key(&self, g: &u32) -> String {
                g.to_string()
            }
            fn evaluate(
                &mut self,
                jobs: &[EvalJob<u32>],
            ) -> Result<Vec<Result<ObjectiveVector, String>>, DispatchError> {
                Ok(jobs.iter().map(|_| Err("boom".into())).collect())
            }
        }
        let mut cache = HashMap::new();
        let jobs = vec![EvalJob { id: 0, key: "7".into(), genome: 7u32 }];
        let outcome = dispatch(&mut Failing, &jobs, &mut cache).unwrap();
        assert_eq!(outcome.failures, 1);
        assert_eq!(outcome.vectors[0].values(), &[FAILED_OBJECTIVE; 2]);

        // The failure is cached: no second dispatch.
        let outcome = dispatch(&mut Failing, &jobs, &mut cache).unwrap();
        assert_eq!(outcome.dispatched, 0);
        assert_eq!(outcome.cache_hits, 1);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let doubled = parallel_map(&items, 8, |x| x * 2);
        assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        let serial = parallel_map(&items, 1, |x| x * 2);
        assert_eq!(doubled, serial);
    }
}
