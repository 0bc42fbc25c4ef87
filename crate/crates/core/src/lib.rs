//! Physics-residual acquisition for active learning of PDE surrogates.
//!
//! Candidate simulations are scored by the mean absolute PDE residual of a
//! surrogate's rollout; the most unphysical candidates are simulated with a
//! ground-truth solver and added to the training set.

pub mod acquisition;
pub mod al_loop;
pub mod config;
pub mod error;
pub mod residual;
mod serde_f64;
pub mod solvers;
pub mod store;
pub mod surrogate;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
