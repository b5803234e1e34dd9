//! Mono-molecular reaction networks whose rates are modulated by a finite
//! continuous-time Markov chain.
//!
//! Given an environment path, molecule counts have an exact conditional law:
//! multinomial survival of the initial molecules plus independent Poisson
//! counts for the bursts produced along the way. Averaging over return cycles
//! of the environment gives the stationary law as a Poisson mixture whose
//! mixing measure solves a stochastic recurrence equation. This crate builds
//! those objects, samples from them, and checks them against a brute-force
//! master-equation solver.

pub mod cli;
pub mod envpath;
pub mod error;
pub mod finite_time;
pub mod fixtures;
pub mod graph;
pub mod markov;
pub mod model;
pub mod oracle;
pub mod propagator;
pub mod quadrature;
pub mod rng;
pub mod ssa;
pub mod stationary;
pub mod stats;
pub mod structure;

pub use error::{Error, Result, Violation};
