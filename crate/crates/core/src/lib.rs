//! Numerical laboratory for infinite-horizon fully coupled forward-backward
//! stochastic differential equations with random coefficients.
//!
//! The crate solves systems
//!   dX = b(t, X, Y, Z) dt + sigma(t, X, Y, Z) dW,
//!   dY = -f(t, X, Y, Z) dt + Z dW,
//! on a truncated horizon by Picard contraction over frozen coupling
//! arguments, with a regression-based backward solver, and provides the
//! surrounding laboratory: solvability windows for the discount weight,
//! comparison/sensitivity/stationarity harnesses, representing-field
//! diagnostics, and the stochastic-maximum-principle control machinery.

/// Crate version, exposed for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bsde;
pub mod coeff;
pub mod conditions;
pub mod control;
pub mod error;
pub mod field;
pub mod grid;
pub mod models;
pub mod picard;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use coeff::{CoefficientFlags, CoefficientSet, ConstantsRecord, Dims, EvalCtx};
pub use error::{Error, Result};
pub use grid::{NormComponent, PathTensor, PathTriple, TimeGrid, WeightedNormResult};
pub use simulate::BrownianBundle;
