//! Least-squares and regularized least-squares estimation of FIR models
//! driven by filtered white noise, together with the closed-form asymptotic
//! limits of the estimators' building blocks and a seeded Monte Carlo engine
//! that checks those limits empirically.
//!
//! Modules:
//! - [`signal`]: innovations, input filtering and FIR data generation.
//! - [`theory`]: autocovariances, `Sigma`, `C_Gamma` and the other limits.
//! - [`estimators`]: LS, noise variance, kernel matrices, RLS and the
//!   `S_hat(eta)` machinery with its inverse-derivative identities.
//! - [`verify`]: ensemble runner, convergence/rate/moment checks and
//!   lemma checkers producing an [`verify::McReport`].

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod rng;
pub mod signal;
pub mod theory;
pub mod verify;

pub use error::{Error, Result};
