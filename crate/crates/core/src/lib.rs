//! Multilevel Monte Carlo (MLMC) metamodeling for the variance function of a
//! stochastic simulation model.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the whole
//! algorithmic stack:
//!
//! * [`rng`] and [`normal`]: keyed random streams and the inverse normal CDF.
//! * [`model`]: the simulation-model abstraction and the input domain.
//! * [`design`]: nested shifted-Sobol' design sets and prediction sets.
//! * [`metamodel`]: Gaussian-kernel (Nadaraya-Watson) and kNN weights,
//!   leave-one-out bandwidth selection.
//! * [`estimators`]: output tables, level / refinement estimators and the
//!   telescoping MLMC surface; the single-level (SMC) baseline.
//! * [`bootstrap`]: bootstrap variance of refinement estimators.
//! * [`procedures`]: the target-accuracy and fixed-budget adaptive drivers.
//! * [`analysis`]: MISE, cost-slope fits, SMC reference cost, Sobol' indices
//!   and the Anderson-Darling normality diagnostic.
//! * [`benchmarks`]: test problems with closed-form variance functions.
//!
//! File formats, the CLI and macro-replication studies live in the
//! `mlmc-varfn` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod benchmarks;
pub mod bootstrap;
pub mod design;
pub mod error;
pub mod estimators;
pub mod metamodel;
pub mod model;
pub mod normal;
pub mod procedures;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{InputDomain, ModelError, PointSet, Points, SimulationModel};
