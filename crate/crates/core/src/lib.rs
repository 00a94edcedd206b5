//! Amortized variational inference for Bayesian inverse problems.
//!
//! An amortization network maps an observation `y` to the mean and Cholesky
//! factor of a full-rank Gaussian posterior over the unknown parameters `ξ`.
//! The network is trained once by stochastic gradient ascent on the amortized
//! evidence lower bound, after which the posterior for any new observation is
//! a single forward pass away.
//!
//! Module map:
//!
//! - [`nn`]: dense feed-forward networks with exact reverse-mode gradients.
//! - [`guide`]: the three-headed amortization network and Gaussian guide algebra.
//! - [`problems`]: priors, likelihoods and the built-in forward models.
//! - [`trainer`]: the stochastic objective, its gradient, ADAM and the training loop.
//! - [`mcmc`]: adaptive random-walk Metropolis used as a reference sampler.
//! - [`metrics`]: Kolmogorov-Smirnov comparison and re-simulation error.

pub mod error;
pub mod fd;
pub mod guide;
pub mod linalg;
pub mod mcmc;
pub mod metrics;
pub mod nn;
pub mod problems;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use guide::{AmortGrad, AmortNet, Architecture, GuideParams};
pub use nn::{Activation, FlatGrad, LayerSpec, Mlp};
pub use problems::{DataDraw, Problem, ProblemSpec};
pub use trainer::{train, TrainConfig, TrainTrace};

