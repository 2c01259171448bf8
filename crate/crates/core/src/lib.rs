//! Bayesian image mediation analysis with soft-thresholded Gaussian process priors.

pub mod error;
pub mod evaluate;
pub mod grid;
pub mod io;
pub mod kernel_basis;
pub mod mediation;
pub mod sampler;
pub mod sem_model;
pub mod sensitivity;
pub mod simgen;
pub mod special;
pub mod stgp;

pub use error::{BimaError, Result};
