//! Adaptive random-walk Metropolis targeting `log p(ξ, y)`.
//!
//! Proposals are `ξ' = ξ + s · C ε` with `ε ~ N(0, I)`. During burn-in the
//! scalar `s` follows a Robbins-Monro drift toward the target acceptance
//! rate, and (when enabled) the shape `C` is re-estimated from the burn-in
//! history at one half and three quarters of the burn-in. Both are frozen
//! after burn-in, so the kept samples come from a fixed Metropolis kernel.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::problems::Problem;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McmcInit {
    PriorMean,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_total: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub init: McmcInit,
    pub target_accept: f64,
    pub seed: u64,
    /// Re-estimate the proposal covariance from burn-in samples.
    pub adapt_covariance: bool,
}

impl McmcConfig {
    pub fn new(n_total: usize, n_burn: usize, thin: usize, seed: u64) -> Self {
        Self {
            n_total,
            n_burn,
            thin,
            init: McmcInit::PriorMean,
            target_accept: 0.3,
            seed,
            adapt_covariance: true,
        }
    }

    /// 33,000 steps, 3,000 burn-in, every 30th kept: 1,000 samples.
    pub fn default_budget(seed: u64) -> Self {
        Self::new(33_000, 3_000, 30, seed)
    }

    pub fn kept_count(&self) -> usize {
        (self.n_total - self.n_burn) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total <= self.n_burn {
            return Err(Error::Config("n_total must exceed n_burn".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    /// Scalar proposal scale used at every step.
    pub proposal_scale_history: Vec<f64>,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Values of coordinate `k` across kept samples.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }

    pub const CSV_PREFIX: &'static str = "xi_";

    pub fn to_csv(&self) -> String {
        samples_to_csv(&self.samples, self.dim())
    }
}

/// Sample CSV with header `xi_1,…,xi_d`.
pub fn samples_to_csv(samples: &[Vec<f64>], d: usize) -> String {
    let mut out = (1..=d).map(|k| format!("xi_{k}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for s in samples {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn log_target(p: &Problem, xi: &[f64], y: &[f64]) -> f64 {
    match p.log_joint(xi, y) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

fn empirical_cov_chol(history: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    let n = history.len();
    if n <= 2 * d {
        return None;
    }
    let mut mean = vec![0.0; d];
    for s in history {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for s in history {
        for i in 0..d {
            for j in 0..=i {
                cov[i * d + j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(trace > 0.0) {
        return None;
    }
    for i in 0..d {
        cov[i * d + i] += 1e-10 * trace / d as f64;
    }
    linalg::cholesky(&cov, d)
}

/// Runs one chain on the posterior `p(ξ | y)`.
pub fn rwm_sample(p: &Problem, y: &[f64], cfg: &McmcConfig) -> Result<Chain> {
    cfg.validate()?;
    let d = p.param_dim();
    check_len("observation", p.data_dim(), y.len())?;
    let mut x = match &cfg.init {
        McmcInit::PriorMean => p.prior_mean().to_vec(),
        McmcInit::Point(v) => {
            check_len("initial point", d, v.len())?;
            v.clone()
        }
    };
    let mut lp = log_target(p, &x, y);
    if !lp.is_finite() {
        return Err(Error::McmcInit { xi: x });
    }

    let mut rng = rng::stream(cfg.seed, Stream::Mcmc);
    let base_scale = 2.38 / (d as f64).sqrt();
    // Start from the prior scale; adaptation shrinks it toward the posterior.
    let mut shape = vec![0.0; d * d];
    for k in 0..d {
        shape[k * d + k] = p.prior_std()[k];
    }
    let mut log_scale = (base_scale * 0.1).ln();
    let mut adapt_t = 0usize;
    let reshape_at = [cfg.n_burn / 2, 3 * cfg.n_burn / 4];
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(if cfg.adapt_covariance { cfg.n_burn } else { 0 });

    let mut samples = Vec::with_capacity(cfg.kept_count());
    let mut scales = Vec::with_capacity(cfg.n_total);
    let mut accepted_after_burn = 0usize;
    let mut eps = vec![0.0; d];

    for t in 0..cfg.n_total {
        let burning = t < cfg.n_burn;
        if burning && cfg.adapt_covariance && reshape_at.contains(&t) && t > 0 {
            let from = cfg.n_burn / 4;
            if let Some(l) = empirical_cov_chol(&history[from.min(history.len())..], d) {
                shape = l;
                log_scale = base_scale.ln();
                adapt_t = 0;
            }
        }
        let scale = log_scale.exp();
        scales.push(scale);

        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let step = linalg::matvec(&shape, d, d, &eps);
        let proposal: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + scale * b).collect();
        let lp_new = log_target(p, &proposal, y);
        let log_ratio = lp_new - lp;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            x = proposal;
            lp = lp_new;
            if !burning {
                accepted_after_burn += 1;
            }
        }

        if burning {
            adapt_t += 1;
            let gain = (adapt_t as f64).powf(-0.6);
            log_scale += gain * (accept_prob - cfg.target_accept);
            if cfg.adapt_covariance {
                history.push(x.clone());
            }
        } else if (t - cfg.n_burn + 1) % cfg.thin == 0 {
            samples.push(x.clone());
        }
    }

    Ok(Chain {
        samples,
        acceptance_rate: accepted_after_burn as f64 / (cfg.n_total - cfg.n_burn) as f64,
        proposal_scale_history: scales,
    })
}

/// Per-dimension summary of a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub lag1_autocorr: Vec<f64>,
    pub ess: Vec<f64>,
    /// Coordinates whose samples never vary; their ESS is reported as 1.
    pub degenerate: Vec<bool>,
}

fn autocorr(x: &[f64], mean: f64, var0: f64, lag: usize) -> f64 {
    let n = x.len();
    let c: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64;
    c / var0
}

/// Effective sample size with Geyer's initial positive sequence truncation.
fn ess_geyer(x: &[f64], mean: f64, var0: f64) -> f64 {
    let n = x.len();
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocorr(x, mean, var0, 2 * m) + autocorr(x, mean, var0, 2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

pub fn chain_diagnostics(samples: &[Vec<f64>]) -> Result<Diagnostics> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::ChainTooShort(n));
    }
    let d = samples[0].len();
    let mut out = Diagnostics {
        n,
        mean: Vec::with_capacity(d),
        std: Vec::with_capacity(d),
        lag1_autocorr: Vec::with_capacity(d),
        ess: Vec::with_capacity(d),
        degenerate: Vec::with_capacity(d),
    };
    for k in 0..d {
        let x: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let var0 = ss / n as f64;
        out.mean.push(mean);
        out.std.push((ss / (n - 1) as f64).sqrt());
        if var0 > 0.0 {
            out.lag1_autocorr.push(autocorr(&x, mean, var0, 1));
            out.ess.push(ess_geyer(&x, mean, var0));
            out.degenerate.push(false);
        } else {
            out.lag1_autocorr.push(0.0);
            out.ess.push(1.0);
            out.degenerate.push(true);
        }
    }
    Ok(out)
}
