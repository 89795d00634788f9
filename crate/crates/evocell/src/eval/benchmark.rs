//! Engine-validation benchmark with an analytically known Pareto front.
//!
//! ZDT1 recast for maximization: `f1 = 1 - x1`,
//! `g = 1 + 9 * sum(x[1..]) / (n - 1)`, `f2 = 1 - g * (1 - sqrt(x1 / g))`.
//! The true front is reached at `x[i] = 0` for `i >= 1`, where
//! `f2 = sqrt(1 - f1)`; its hypervolume against the zero reference is
//! exactly 2/3. Variation mirrors the cell-genome operators: uniform
//! per-component resample (mutation) and per-component swap (crossover).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dispatch::{parallel_map, DispatchError, EvalJob};
use crate::evolution::SearchProblem;
use crate::pareto::ObjectiveVector;

/// A point in `[0, 1]^n`, the benchmark search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BenchmarkGenome(pub Vec<f64>);

/// Maximization-form ZDT1 objectives for one benchmark genome.
pub fn benchmark_objectives(genome: &BenchmarkGenome) -> ObjectiveVector {
    let x = &genome.0;
    let n = x.len();
    assert!(n >= 1, "benchmark genome must have at least one variable");
    let x1 = x[0];
    let g = if n > 1 {
        1.0 + 9.0 * x[1..].iter().sum::<f64>() / (n as f64 - 1.0)
    } else {
        1.0
    };
    let f1 = 1.0 - x1;
    let f2 = 1.0 - g * (1.0 - (x1 / g).sqrt());
    ObjectiveVector::new(vec![f1, f2]).expect("ZDT1 objectives are finite")
}

/// Hypervolume of the analytic front against the zero reference point:
/// the area under `f2 = sqrt(1 - f1)` on `[0, 1]`.
pub fn zdt1_front_hypervolume() -> f64 {
    2.0 / 3.0
}

/// Euclidean distance from an objective point to the analytic front
/// curve, minimized over a dense parameter grid.
pub fn zdt1_front_distance(point: &ObjectiveVector) -> f64 {
    let (p1, p2) = (point.values()[0], point.values()[1]);
    let steps = 10_000;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let f1 = i as f64 / steps as f64;
        let f2 = (1.0 - f1).sqrt();
        let d = ((p1 - f1).powi(2) + (p2 - f2).powi(2)).sqrt();
        if d < best {
            best = d;
        }
    }
    best
}

/// The ZDT1 benchmark as a searchable problem.
#[derive(Debug, Clone)]
pub struct Zdt1Problem {
    pub n_vars: usize,
    pub parallelism: usize,
}

impl Zdt1Problem {
    pub fn new(n_vars: usize, parallelism: usize) -> Self {
        assert!(n_vars >= 1 && parallelism >= 1);
        Zdt1Problem { n_vars, parallelism }
    }
}

impl SearchProblem for Zdt1Problem {
    type Genome = BenchmarkGenome;

    fn objective_count(&self) -> usize {
        2
    }

    fn random_genome(&self, rng: &mut ChaCha8Rng) -> BenchmarkGenome {
        BenchmarkGenome((0..self.n_vars).map(|_| rng.gen::<f64>()).collect())
    }

    fn mutate(&self, genome: &BenchmarkGenome, mu_mut: f64, rng: &mut ChaCha8Rng) -> BenchmarkGenome {
        let mut out = genome.clone();
        for value in &mut out.0 {
            if rng.gen::<f64>() < mu_mut {
                *value = rng.gen::<f64>();
            }
            *value = value.clamp(0.0, 1.0);
        }
        out
    }

    fn crossover(
        &self,
        a: &BenchmarkGenome,
        b: &BenchmarkGenome,
        mu_cross: f64,
        rng: &mut ChaCha8Rng,
    ) -> (BenchmarkGenome, BenchmarkGenome) {
        let mut c1 = a.clone();
        let mut c2 = b.clone();
        for i in 0..c1.0.len().min(c2.0.len()) {
            if rng.gen::<f64>() < mu_cross {
                std::mem::swap(&mut c1.0[i], &mut c2.0[i]);
            }
        }
        (c1, c2)
    }

    fn cache_key(&self, genome: &BenchmarkGenome) -> String {
        serde_json::to_string(genome).expect("benchmark genome serializes")
    }

    fn evaluate(
        &mut self,
        jobs: &[EvalJob<BenchmarkGenome>],
    ) -> Result<Vec<Result<ObjectiveVector, String>>, DispatchError> {
        Ok(parallel_map(jobs, self.parallelism, |job| {
            Ok(benchmark_objectives(&job.genome))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn genome(values: &[f64]) -> BenchmarkGenome {
        BenchmarkGenome(values.to_vec())
    }

    #[test]
    fn objective_fixtures() {
        assert_eq!(
            benchmark_objectives(&genome(&[0.0, 0.0, 0.0])).values(),
            &[1.0, 0.0]
        );
        assert_eq!(
            benchmark_objectives(&genome(&[1.0, 0.0, 0.0])).values(),
            &[0.0, 1.0]
        );
        let v = benchmark_objectives(&genome(&[0.25, 0.0, 0.0]));
        assert!((v.values()[0] - 0.75).abs() < 1e-12);
        assert!((v.values()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tail_variables_only_hurt_f2() {
        let clean = benchmark_objectives(&genome(&[0.5, 0.0, 0.0, 0.0]));
        let dirty = benchmark_objectives(&genome(&[0.5, 0.4, 0.0, 0.2]));
        assert_eq!(clean.values()[0], dirty.values()[0]);
        assert!(dirty.values()[1] < clean.values()[1]);
    }

    #[test]
    fn front_distance_is_zero_on_the_front() {
        for x1 in [0.0, 0.3, 1.0] {
            let point = benchmark_objectives(&genome(&[x1, 0.0, 0.0]));
            assert!(zdt1_front_distance(&point) < 1e-4);
        }
        // (0.5, 0) is closest to the front's (1, 0) endpoint.
        let off = ObjectiveVector::new(vec![0.5, 0.0]).unwrap();
        assert!((zdt1_front_distance(&off) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn variation_stays_in_range_and_is_deterministic() {
        let problem = Zdt1Problem::new(6, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = problem.random_genome(&mut rng);
        let b = problem.random_genome(&mut rng);
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (c1, c2) = problem.crossover(&a, &b, 0.5, &mut r1);
        let (d1, d2) = problem.crossover(&a, &b, 0.5, &mut r2);
        assert_eq!((c1.clone(), c2), (d1, d2));
        let m = problem.mutate(&c1, 0.5, &mut r1);
        assert!(m.0.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
