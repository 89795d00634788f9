//! Multi-objective evolutionary search for convolutional cell architectures.
//!
//! `evocell` evolves NASNet-style cells (pairs of normal/reduction cell
//! genomes) toward the Pareto front of competing objectives such as
//! predicted accuracy and inference speed. The engine is a generational
//! NSGA-II style loop with a hall-of-fame archive and hypervolume-based
//! convergence monitoring; accuracy can come from a built-in deterministic
//! surrogate or from an external evaluator process speaking a line-delimited
//! JSON protocol.
//!
//! The crate is organized around the search machinery:
//!
//! - [`genome`] — the cell-based search space: encoding, validity rules,
//!   canonical serialization, and uniform crossover/mutation operators.
//! - [`pareto`] — dominance, fast non-dominated sorting, crowding distance,
//!   survival selection, and the 2-objective hypervolume indicator.
//! - [`evolution`] — the generational loop: mating selection, variation,
//!   evaluation dispatch, survival, archive, and plateau detection.
//! - [`network`] — macro-architecture assembly and analytic Mult-Adds /
//!   FLOPS / parameter accounting (the deterministic objectives).
//! - [`eval`] — objective composition, the surrogate accuracy model, the
//!   external evaluator protocol, parallel dispatch with caching, and the
//!   ZDT1 benchmark used to validate the engine against a known front.
//! - [`cli`] — the `evocell` command-line surface (`search`, `cost`,
//!   `front`, `bench`).
//!
//! Runnable examples live in `examples/`; start with `surrogate_search`:
//!
//! ```bash
//! cargo run --example surrogate_search
//! ```

pub mod cli;
pub mod config;
pub mod eval;
pub mod evolution;
pub mod genome;
pub mod network;
pub mod pareto;
