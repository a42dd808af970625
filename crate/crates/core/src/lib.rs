//! Simulation and numerical analysis of self-similar fragmentation processes
//! with negative index and a finite conservative dislocation measure.
//!
//! A block of mass `m` waits an exponential time with mean `m^{-alpha}`,
//! then splits into `m s` with `s` drawn from the dislocation law. The crate
//! simulates the process, solves for the law of its extinction time, samples
//! the Markov chain driving the last fragment, builds the scaling limits near
//! extinction and tests the associated invariant measure.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod density_solver;
pub mod dislocation;
pub mod error;
pub mod frag_engine;
pub mod geometric;
pub mod invariant;
pub mod mass_partition;
pub mod renewal_limit;
pub mod rng;
pub mod spine_chain;
pub mod stats;

pub use density_solver::{Densities, GridFunction, GridSpec, SolverConfig};
pub use dislocation::{DislocationLaw, Geometry, LawKind};
pub use error::{FragError, Result};
pub use mass_partition::MassPartition;
