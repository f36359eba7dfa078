//! Multiplicative chaos measures built from random Fourier series with
//! i.i.d. (not necessarily Gaussian) coefficients.
//!
//! The crate builds the nested interval partitions and the tree field on
//! top of them, evaluates hierarchical and continuum chaos approximants,
//! and runs Monte Carlo diagnostics for thick points, barrier moments and
//! Gaussian couplings. `experiments` wires everything into reproducible
//! named runs with pass/fail verdicts.

pub mod chaos;
pub mod coeffs;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod field;
pub mod numeric;
pub mod par;
pub mod partition;
pub mod rng;
pub mod spectral;
pub mod thick;

pub use chaos::ChaosApproximant;
pub use coeffs::{CoefficientModel, Law};
pub use error::{Error, Result};
pub use field::FieldRealization;
pub use partition::PartitionSystem;
