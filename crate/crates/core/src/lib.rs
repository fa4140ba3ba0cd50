//! Core library for BayesCGLM-style inference: train a dropout network on
//! correlated inputs, draw Monte Carlo dropout features from its last hidden
//! layer, fit an ensemble of GLMs on those features plus scalar covariates,
//! and summarize the aggregated posterior with credible and prediction
//! intervals. Includes the synthetic-data generators and an MCMC oracle used
//! to validate the Laplace approximation.

pub mod ensemble;
pub mod error;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod mc_dropout;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{RngStream, SeededRng};
pub use tensor::Tensor;
