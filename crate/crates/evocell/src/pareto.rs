//! Pareto dominance, fast non-dominated sorting, crowding distance, the
//! crowded total order, survival selection, and the 2-objective hypervolume
//! indicator.
//!
//! All objective vectors use the maximization convention in every
//! coordinate. The functions here are pure and safe to call from any
//! thread.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from Pareto-front computations.
#[derive(Debug, Error, PartialEq)]
pub enum ParetoError {
    #[error("objective vector must have at least 2 finite values, got {0:?}")]
    InvalidVector(Vec<f64>),
    #[error("objective vectors have mixed lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("selection count must be between 1 and the union size {union}, got {requested}")]
    BadSelectionCount { requested: usize, union: usize },
    #[error("hypervolume is only implemented for 2 objectives, got {0}")]
    UnsupportedDimension(usize),
}

/// A fixed-length vector of finite objective values, all maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    /// Builds a vector, rejecting NaN/infinite entries and lengths < 2.
    pub fn new(values: Vec<f64>) -> Result<Self, ParetoError> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(ParetoError::InvalidVector(values));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True iff `self` is coordinatewise >= `other` with at least one
    /// strict inequality. Equal vectors never dominate each other.
    ///
    /// Panics if the two vectors have different lengths.
    pub fn dominates(&self, other: &Self) -> bool {
        assert_eq!(
            self.0.len(),
            other.0.len(),
            "cannot compare objective vectors of different lengths"
        );
        let mut strict = false;
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return false;
            }
            if a > b {
                strict = true;
            }
        }
        strict
    }
}

/// Pareto dominance under maximization: `v` dominates `u`.
pub fn dominates(v: &ObjectiveVector, u: &ObjectiveVector) -> bool {
    v.dominates(u)
}

/// A population partitioned into ranked non-dominated fronts with
/// per-member crowding distances.
///
/// `fronts[0]` holds the indices of the non-dominated members; every
/// rank-r member is dominated by at least one rank-(r-1) member. Indices
/// within each front are ascending (input order). Boundary members of a
/// front carry `f64::INFINITY` crowding distance.
#[derive(Debug, Clone)]
pub struct FrontLevels {
    pub fronts: Vec<Vec<usize>>,
    /// Rank of each input member (index-aligned with the input slice).
    pub rank: Vec<usize>,
    /// Crowding distance of each input member within its front.
    pub crowding: Vec<f64>,
}

/// Fast non-dominated sort (domination counts + dominated sets), with
/// crowding distances computed per front.
pub fn non_dominated_sort(pop: &[ObjectiveVector]) -> Result<FrontLevels, ParetoError> {
    if pop.is_empty() {
        return Err(ParetoError::EmptyPopulation);
    }
    let k = pop[0].len();
    for v in pop {
        if v.len() != k {
            return Err(ParetoError::LengthMismatch(k, v.len()));
        }
    }

    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if pop[i].dominates(&pop[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if pop[j].dominates(&pop[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }

    let mut rank = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        current.sort_unstable();
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        fronts.push(current);
        current = next;
        level += 1;
    }

    let mut crowding = vec![0.0f64; n];
    for front in &fronts {
        let members: Vec<ObjectiveVector> = front.iter().map(|&i| pop[i].clone()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            crowding[i] = d;
        }
    }

    Ok(FrontLevels {
        fronts,
        rank,
        crowding,
    })
}

/// Canonical NSGA-II crowding distance for one front.
///
/// Per objective, members are sorted by value; the two boundary members
/// get infinite distance and each interior member accumulates
/// `(next - prev) / (max - min)`. An objective with `max == min`
/// contributes 0 to interior members. Fronts of size <= 2 are all
/// boundary. Members are assumed mutually non-dominated (not enforced).
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let k = front[0].len();
    let mut dist = vec![0.0f64; n];
    for obj in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            front[a].values()[obj]
                .partial_cmp(&front[b].values()[obj])
                .unwrap_or(Ordering::Equal)
        });
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let min = front[order[0]].values()[obj];
        let max = front[order[n - 1]].values()[obj];
        let range = max - min;
        if range > 0.0 {
            for w in 1..n - 1 {
                let prev = front[order[w - 1]].values()[obj];
                let next = front[order[w + 1]].values()[obj];
                dist[order[w]] += (next - prev) / range;
            }
        }
    }
    dist
}

/// Rank, crowding distance, and a stable tie-break id for one member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdedKey {
    pub rank: usize,
    pub distance: f64,
    pub id: u64,
}

/// The crowded total order: lower rank first; within a rank, higher
/// crowding distance first; remaining ties broken by lower id.
pub fn crowded_compare(a: &CrowdedKey, b: &CrowdedKey) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| b.distance.partial_cmp(&a.distance).unwrap_or(Ordering::Equal))
        .then_with(|| a.id.cmp(&b.id))
}

/// Survival selection over a combined parent+offspring union.
///
/// Whole fronts are taken in rank order while they fit; from the first
/// front that does not fit, the remaining slots are filled by highest
/// crowding distance (ties by lower id). Returns exactly `n` indices into
/// `union`, fronts in rank order, fully-taken fronts in input order.
pub fn select_indices(
    union: &[ObjectiveVector],
    ids: &[u64],
    n: usize,
) -> Result<Vec<usize>, ParetoError> {
    if n == 0 || n > union.len() {
        return Err(ParetoError::BadSelectionCount {
            requested: n,
            union: union.len(),
        });
    }
    let levels = non_dominated_sort(union)?;
    let mut selected = Vec::with_capacity(n);
    let mut remaining = n;
    for front in &levels.fronts {
        if front.len() <= remaining {
            selected.extend_from_slice(front);
            remaining -= front.len();
        } else {
            let mut by_crowding = front.clone();
            by_crowding.sort_by(|&a, &b| {
                crowded_compare(
                    &CrowdedKey {
                        rank: levels.rank[a],
                        distance: levels.crowding[a],
                        id: ids[a],
                    },
                    &CrowdedKey {
                        rank: levels.rank[b],
                        distance: levels.crowding[b],
                        id: ids[b],
                    },
                )
            });
            selected.extend(by_crowding.into_iter().take(remaining));
            remaining = 0;
        }
        if remaining == 0 {
            break;
        }
    }
    Ok(selected)
}

/// 2-objective hypervolume: the area of the union of rectangles
/// `[reference, p]` over all points.
///
/// Points not strictly above the reference in both coordinates are
/// clipped out (they contribute zero area); dominated and duplicate
/// points add nothing. Errors when the dimension is not 2.
pub fn hypervolume_2d(
    points: &[ObjectiveVector],
    reference: &ObjectiveVector,
) -> Result<f64, ParetoError> {
    if reference.len() != 2 {
        return Err(ParetoError::UnsupportedDimension(reference.len()));
    }
    let (r0, r1) = (reference.values()[0], reference.values()[1]);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != 2 {
            return Err(ParetoError::UnsupportedDimension(p.len()));
        }
        let (x, y) = (p.values()[0], p.values()[1]);
        if x > r0 && y > r1 {
            pts.push((x, y));
        }
    }
    // Sweep right-to-left; each point contributes the strip above the
    // best y seen so far.
    pts.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut area = 0.0;
    let mut best_y = r1;
    for (x, y) in pts {
        if y > best_y {
            area += (x - r0) * (y - best_y);
            best_y = y;
        }
    }
    Ok(area)
}
