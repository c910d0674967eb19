//! Gaussian-process regression over latent vectors.
//!
//! A Matérn-5/2 ARD kernel, exact posteriors through a jittered Cholesky
//! factorization, the log marginal likelihood with its analytic gradient,
//! and hyperparameter fitting by optimization or slice sampling.

mod hyper;
mod kernel;
mod posterior;

pub use hyper::{optimize_hyperparams, sample_hyperparams, HyperBounds, HyperChain, SliceConfig};
pub use kernel::{matern52, KernelHyperparams};
pub use posterior::{log_marginal_likelihood, GpPosterior};
