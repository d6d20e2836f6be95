//! Estimation, identification and inference for time-varying vector
//! autoregressions.
//!
//! The pipeline: local-linear estimation of the coefficient and covariance
//! paths ([`estimate`]), structural impulse responses with delta-method
//! covariances ([`irf`]), lag and bandwidth selection ([`select`]), a
//! bootstrap-calibrated constancy test ([`stability`]) and a Monte Carlo
//! harness for the simulation designs ([`sim`]).

pub mod error;
pub mod diagnostics;
pub mod estimate;
pub mod io;
pub mod irf;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod panel;
pub mod rng;
pub mod select;
pub mod sim;
pub mod stability;
pub mod workflow;

pub use error::{Result, TvVarError};
pub use estimate::{FitOptions, GridPoint, TvVarFit};
pub use kernel::KernelSpec;
pub use panel::ObservedPanel;
