//! Inverse problems: diagonal Gaussian prior, Gaussian likelihood
//! `y ~ N(f(ξ), γ² I)` and a forward model `f`.
//!
//! A new forward model only needs to implement [`ForwardModel`]; the trainer,
//! the sampler and the metrics see problems exclusively through [`Problem`].

mod elliptic;
mod ik;
mod linear;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use elliptic::{default_sensors, elliptic_conductivity, elliptic_solve, EllipticRod, ELLIPTIC_FIELD_SIGMA, ELLIPTIC_GRID_POINTS, ELLIPTIC_NOISE, ELLIPTIC_TERMS};
pub use ik::{ik_forward, ik_jacobian, InverseKinematics, IK_ARM_LENGTHS, IK_NOISE, IK_PRIOR_STD};
pub use linear::{linear_gaussian_posterior, LinGaussPosterior, LinearMap, ZeroMap};

/// Names accepted by [`ProblemSpec::by_name`].
pub const REGISTERED: [&str; 4] = ["ik", "elliptic", "lingauss", "null"];

/// Deterministic map from parameters to noise-free data.
pub trait ForwardModel: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn eval(&self, xi: &[f64]) -> Vec<f64>;

    /// Output together with the row-major `m × d` Jacobian.
    fn eval_with_jacobian(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// A ground-truth parameter and the observation it generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDraw {
    pub xi_gt: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone)]
pub struct Problem {
    name: String,
    prior_mean: Vec<f64>,
    prior_std: Vec<f64>,
    noise_scale: f64,
    forward: Arc<dyn ForwardModel>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("d", &self.param_dim())
            .field("m", &self.data_dim())
            .field("prior_mean", &self.prior_mean)
            .field("prior_std", &self.prior_std)
            .field("noise_scale", &self.noise_scale)
            .finish()
    }
}

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

impl Problem {
    pub fn new(
        name: impl Into<String>,
        prior_mean: Vec<f64>,
        prior_std: Vec<f64>,
        noise_scale: f64,
        forward: Arc<dyn ForwardModel>,
    ) -> Result<Self> {
        let d = forward.input_dim();
        check_len("prior mean", d, prior_mean.len())?;
        check_len("prior std", d, prior_std.len())?;
        if prior_std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("prior standard deviations must be positive".into()));
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return Err(Error::Config("noise scale must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            prior_mean,
            prior_std,
            noise_scale,
            forward,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn param_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.forward.output_dim()
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn prior_std(&self) -> &[f64] {
        &self.prior_std
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn forward_model(&self) -> &dyn ForwardModel {
        self.forward.as_ref()
    }

    /// `f(ξ)`, rejecting non-finite output.
    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("parameter vector", self.param_dim(), xi.len())?;
        let out = self.forward.eval(xi);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Evaluation { xi: xi.to_vec() })
        }
    }

    pub fn log_prior(&self, xi: &[f64]) -> f64 {
        xi.iter()
            .zip(&self.prior_mean)
            .zip(&self.prior_std)
            .map(|((x, m), s)| {
                let t = (x - m) / s;
                -HALF_LOG_2PI - s.ln() - 0.5 * t * t
            })
            .sum()
    }

    /// `log N(y | fx, γ² I)` for a precomputed forward output.
    pub fn log_likelihood_at(&self, fx: &[f64], y: &[f64]) -> f64 {
        let g = self.noise_scale;
        let m = y.len() as f64;
        let sq: f64 = y.iter().zip(fx).map(|(a, b)| (a - b) * (a - b)).sum();
        -m * (HALF_LOG_2PI + g.ln()) - 0.5 * sq / (g * g)
    }

    pub fn log_likelihood(&self, xi: &[f64], y: &[f64]) -> Result<f64> {
        check_len("observation", self.data_dim(), y.len())?;
        let fx = self.forward(xi)?;
        Ok(self.log_likelihood_at(&fx, y))
    }

    /// `log p(y | ξ) + log p(ξ)`.
    pub fn log_joint(&self, xi: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(xi, y)? + self.log_prior(xi))
    }

    /// Log joint and its gradient with respect to `ξ`.
    pub fn log_joint_grad(&self, xi: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.param_dim();
        let m = self.data_dim();
        check_len("parameter vector", d, xi.len())?;
        check_len("observation", m, y.len())?;
        let (fx, jac) = self.forward.eval_with_jacobian(xi);
        if !fx.iter().chain(&jac).all(|v| v.is_finite()) {
            return Err(Error::Evaluation { xi: xi.to_vec() });
        }
        let inv_var = 1.0 / (self.noise_scale * self.noise_scale);
        let resid: Vec<f64> = y.iter().zip(&fx).map(|(a, b)| (a - b) * inv_var).collect();
        let mut grad: Vec<f64> = (0..d)
            .map(|k| -(xi[k] - self.prior_mean[k]) / (self.prior_std[k] * self.prior_std[k]))
            .collect();
        for (row, r) in jac.chunks_exact(d).zip(&resid) {
            for (g, j) in grad.iter_mut().zip(row) {
                *g += j * r;
            }
        }
        Ok((self.log_likelihood_at(&fx, y) + self.log_prior(xi), grad))
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.prior_mean
            .iter()
            .zip(&self.prior_std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Ancestral draw from the data density: `ξ ~ prior`, `y = f(ξ) + γ ε`.
    pub fn sample_data<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DataDraw> {
        let xi_gt = self.sample_prior(rng);
        let fx = self.forward(&xi_gt)?;
        let y = fx
            .iter()
            .map(|v| v + self.noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(DataDraw { xi_gt, y })
    }
}

/// Serializable problem description; what a model file records about its problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ProblemSpec {
    Ik,
    Elliptic,
    #[serde(rename = "lingauss")]
    LinGauss {
        /// Row-major `m × d`, one inner vector per row.
        a: Vec<Vec<f64>>,
        gamma: f64,
        prior_mean: Vec<f64>,
        prior_std: Vec<f64>,
    },
    /// `f ≡ 0`: the likelihood carries no information and the posterior is the prior.
    Null {
        d: usize,
        m: usize,
        gamma: f64,
        prior_mean: Vec<f64>,
        prior_std: Vec<f64>,
    },
}

impl ProblemSpec {
    /// Default instance registered under `name`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ik" => Ok(ProblemSpec::Ik),
            "elliptic" => Ok(ProblemSpec::Elliptic),
            "lingauss" => Ok(ProblemSpec::LinGauss {
                a: vec![vec![1.0, 0.4], vec![-0.3, 0.9]],
                gamma: 0.5,
                prior_mean: vec![0.0, 0.0],
                prior_std: vec![1.0, 1.0],
            }),
            "null" => Ok(ProblemSpec::Null {
                d: 1,
                m: 1,
                gamma: 1.0,
                prior_mean: vec![0.0],
                prior_std: vec![1.0],
            }),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Ik => "ik",
            ProblemSpec::Elliptic => "elliptic",
            ProblemSpec::LinGauss { .. } => "lingauss",
            ProblemSpec::Null { .. } => "null",
        }
    }

    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::Ik => ik::problem(),
            ProblemSpec::Elliptic => elliptic::problem(),
            ProblemSpec::LinGauss {
                a,
                gamma,
                prior_mean,
                prior_std,
            } => {
                let m = a.len();
                let d = a.first().map_or(0, Vec::len);
                if m == 0 || d == 0 || a.iter().any(|row| row.len() != d) {
                    return Err(Error::Config("lingauss matrix must be a non-empty rectangular m × d array".into()));
                }
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                linear_gaussian_problem(&flat, m, d, *gamma, prior_mean.clone(), prior_std.clone())
            }
            ProblemSpec::Null {
                d,
                m,
                gamma,
                prior_mean,
                prior_std,
            } => {
                if *d == 0 || *m == 0 {
                    return Err(Error::Config("null problem needs positive dimensions".into()));
                }
                Problem::new("null", prior_mean.clone(), prior_std.clone(), *gamma, Arc::new(ZeroMap { d: *d, m: *m }))
            }
        }
    }
}

/// Linear-Gaussian problem `f(ξ) = A ξ` with row-major `A` of shape `m × d`.
pub fn linear_gaussian_problem(
    a: &[f64],
    m: usize,
    d: usize,
    gamma: f64,
    prior_mean: Vec<f64>,
    prior_std: Vec<f64>,
) -> Result<Problem> {
    let map = LinearMap::new(a.to_vec(), m, d)?;
    Problem::new("lingauss", prior_mean, prior_std, gamma, Arc::new(map))
}
