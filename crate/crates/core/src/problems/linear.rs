//! Linear forward maps and the closed-form conjugate posterior.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::ForwardModel;
use crate::error::{check_len, Error, Result};

/// `f(ξ) = A ξ` with row-major `A` of shape `m × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    a: Vec<f64>,
    m: usize,
    d: usize,
}

impl LinearMap {
    pub fn new(a: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::Config("linear map needs positive dimensions".into()));
        }
        check_len("linear map matrix", m * d, a.len())?;
        Ok(Self { a, m, d })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }
}

impl ForwardModel for LinearMap {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        crate::linalg::matvec(&self.a, self.m, self.d, xi)
    }

    fn eval_with_jacobian(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.eval(xi), self.a.clone())
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroMap {
    pub d: usize,
    pub m: usize,
}

impl ForwardModel for ZeroMap {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn eval(&self, _xi: &[f64]) -> Vec<f64> {
        vec![0.0; self.m]
    }

    fn eval_with_jacobian(&self, _xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.m], vec![0.0; self.m * self.d])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinGaussPosterior {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub cov: Vec<f64>,
    pub log_evidence: f64,
}

/// Exact posterior and log evidence of `y = A ξ + γ ε`, `ξ ~ N(m0, diag(s0²))`.
pub fn linear_gaussian_posterior(
    a: &[f64],
    m: usize,
    d: usize,
    gamma: f64,
    prior_mean: &[f64],
    prior_std: &[f64],
    y: &[f64],
) -> Result<LinGaussPosterior> {
    check_len("linear map matrix", m * d, a.len())?;
    check_len("prior mean", d, prior_mean.len())?;
    check_len("prior std", d, prior_std.len())?;
    check_len("observation", m, y.len())?;
    let a = DMatrix::from_row_slice(m, d, a);
    let y = DVector::from_column_slice(y);
    let m0 = DVector::from_column_slice(prior_mean);
    let prior_prec = DVector::from_iterator(d, prior_std.iter().map(|s| 1.0 / (s * s)));
    let inv_var = 1.0 / (gamma * gamma);

    let precision = a.transpose() * &a * inv_var + DMatrix::from_diagonal(&prior_prec);
    let cov = precision
        .try_inverse()
        .ok_or_else(|| Error::Domain("posterior precision is singular".into()))?;
    let rhs = a.transpose() * &y * inv_var + prior_prec.component_mul(&m0);
    let mean = &cov * rhs;

    let prior_cov = DMatrix::from_diagonal(&DVector::from_iterator(d, prior_std.iter().map(|s| s * s)));
    let marginal_cov = &a * prior_cov * a.transpose() + DMatrix::identity(m, m) * (gamma * gamma);
    let chol = marginal_cov
        .cholesky()
        .ok_or_else(|| Error::Domain("marginal covariance is not positive definite".into()))?;
    let resid = y - &a * m0;
    let w = chol.l().solve_lower_triangular(&resid).expect("cholesky factor is invertible");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let log_evidence = -0.5 * (m as f64 * (2.0 * PI).ln() + log_det + w.norm_squared());

    Ok(LinGaussPosterior {
        mean: mean.iter().copied().collect(),
        cov: cov.transpose().iter().copied().collect(),
        log_evidence,
    })
}
