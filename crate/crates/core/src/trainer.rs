//! Amortized ELBO estimator, its reparameterized gradient, ADAM with step
//! decay, and the training loop.
//!
//! One iteration draws `N_y` observations from the data density and one
//! shared batch of `N_z` standard-normal latents, then evaluates
//!
//! ```text
//! V(φ) = (d/2) log(2πe) + (1/N_y) Σ_i [ (1/N_z) Σ_j log p(μ_i + L_i z_j, y_i) + Σ_r log L_i,rr ]
//! ```
//!
//! and takes one ascent step on `φ`.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::guide::{AmortNet, Architecture};
use crate::problems::Problem;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_iter: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub eta0: f64,
    pub alpha: f64,
    pub r: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    pub fn new(n_iter: usize, n_y: usize, n_z: usize, eta0: f64, alpha: f64, r: usize, seed: u64) -> Self {
        Self {
            n_iter,
            n_y,
            n_z,
            eta0,
            alpha,
            r,
            seed,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
        }
    }

    /// 10,000 iterations, `N_y = 32`, `N_z = 5`, `η₀ = 1e-2`, factor 0.1 every 5,000.
    pub fn ik_recipe(seed: u64) -> Self {
        Self::new(10_000, 32, 5, 1e-2, 0.1, 5_000, seed)
    }

    /// 35,000 iterations, `N_y = 64`, `N_z = 5`, `η₀ = 1e-3`, factor 0.5 every 20,000.
    pub fn elliptic_recipe(seed: u64) -> Self {
        Self::new(35_000, 64, 5, 1e-3, 0.5, 20_000, seed)
    }

    /// 5,000 iterations, `N_y = 128`, `N_z = 20`, `η₀ = 1e-2`, factor 0.1 every 2,000.
    pub fn lingauss_recipe(seed: u64) -> Self {
        Self::new(5_000, 128, 20, 1e-2, 0.1, 2_000, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str| Err(Error::Config(format!("{field} is out of range")));
        if self.n_iter == 0 {
            return bad("n_iter");
        }
        if self.n_y == 0 {
            return bad("n_y");
        }
        if self.n_z == 0 {
            return bad("n_z");
        }
        if self.r == 0 {
            return bad("r");
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad("eta0");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1");
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps");
        }
        Ok(())
    }
}

/// Default hidden sizes for a registered problem.
pub fn default_architecture(problem_name: &str) -> Architecture {
    match problem_name {
        "elliptic" => Architecture::uniform(&[50, 40, 30, 20]),
        _ => Architecture::uniform(&[20, 10]),
    }
}

/// Step decay `η₀ α^⌊k/r⌋` for zero-based iteration `k`.
pub fn lr_schedule(eta0: f64, alpha: f64, r: usize, k: usize) -> f64 {
    eta0 * alpha.powi((k / r) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected ADAM step in the ascent direction: `φ ← φ + η m̂ / (√v̂ + ε)`.
    pub fn step(&self, state: &mut AdamState, phi: &mut [f64], grad: &[f64], eta: f64) -> Result<()> {
        check_len("adam parameters", state.first_moment.len(), phi.len())?;
        check_len("adam gradient", phi.len(), grad.len())?;
        state.step_count += 1;
        let t = state.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in phi
            .iter_mut()
            .zip(grad)
            .zip(&mut state.first_moment)
            .zip(&mut state.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += eta * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// One training batch: observations and the shared latent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ys: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
}

impl Batch {
    pub fn draw<R: Rng + ?Sized>(p: &Problem, n_y: usize, n_z: usize, data_rng: &mut R, latent_rng: &mut R) -> Result<Self> {
        let ys = (0..n_y)
            .map(|_| p.sample_data(data_rng).map(|d| d.y))
            .collect::<Result<Vec<_>>>()?;
        let zs = (0..n_z)
            .map(|_| (0..p.param_dim()).map(|_| latent_rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Ok(Self { ys, zs })
    }
}

fn entropy_constant(d: usize) -> f64 {
    0.5 * d as f64 * (2.0 * PI * E).ln()
}

fn check_batch(net: &AmortNet, p: &Problem, ys: &[Vec<f64>], zs: &[Vec<f64>]) -> Result<()> {
    check_len("network parameter dim", p.param_dim(), net.param_dim())?;
    check_len("network data dim", p.data_dim(), net.data_dim())?;
    if ys.is_empty() || zs.is_empty() {
        return Err(Error::Config("need at least one observation and one latent".into()));
    }
    for y in ys {
        check_len("observation", p.data_dim(), y.len())?;
    }
    for z in zs {
        check_len("latent vector", p.param_dim(), z.len())?;
    }
    Ok(())
}

/// Per-observation braces term of `V` (without the `1/N_y` weight).
fn observation_term(net: &AmortNet, p: &Problem, y: &[f64], zs: &[Vec<f64>], obs: usize) -> Result<f64> {
    let g = net.forward(y)?;
    let d = g.dim();
    let mut acc = 0.0;
    for (j, z) in zs.iter().enumerate() {
        let xi = g.sample_unchecked(z);
        let lj = p.log_joint(&xi, y).map_err(|e| with_context(e, obs, j))?;
        acc += lj;
    }
    let log_diag: f64 = (0..d).map(|r| g.chol_at(r, r).ln()).sum();
    Ok(acc / zs.len() as f64 + log_diag)
}

fn with_context(e: Error, obs: usize, latent: usize) -> Error {
    match e {
        Error::Evaluation { .. } => Error::NonFinite {
            what: "log joint",
            iteration: 0,
            obs,
            latent: Some(latent),
        },
        other => other,
    }
}

/// Monte Carlo sample of `V(φ)` for given observations and latents.
pub fn estimate_v(net: &AmortNet, p: &Problem, ys: &[Vec<f64>], zs: &[Vec<f64>]) -> Result<f64> {
    check_batch(net, p, ys, zs)?;
    let terms = ys
        .par_iter()
        .enumerate()
        .map(|(i, y)| observation_term(net, p, y, zs, i))
        .collect::<Result<Vec<f64>>>()?;
    // Fixed ascending-index reduction keeps results independent of thread count.
    let mean = terms.iter().sum::<f64>() / ys.len() as f64;
    Ok(entropy_constant(p.param_dim()) + mean)
}

/// Value of `V` and its contribution from one observation.
fn observation_grad(net: &AmortNet, p: &Problem, y: &[f64], zs: &[Vec<f64>], obs: usize) -> Result<(f64, Vec<f64>)> {
    let g = net.forward(y)?;
    let d = g.dim();
    let nz = zs.len() as f64;
    let mut d_mu = vec![0.0; d];
    let mut d_chol = vec![0.0; d * d];
    let mut acc = 0.0;
    for (j, z) in zs.iter().enumerate() {
        let xi = g.sample_unchecked(z);
        let (lj, gx) = p.log_joint_grad(&xi, y).map_err(|e| with_context(e, obs, j))?;
        acc += lj;
        // ξ = μ + L z: ∂ξ_r/∂μ_r = 1, ∂ξ_r/∂L_rc = z_c for c ≤ r.
        for r in 0..d {
            d_mu[r] += gx[r] / nz;
            for c in 0..=r {
                d_chol[r * d + c] += gx[r] * z[c] / nz;
            }
        }
    }
    let mut log_diag = 0.0;
    for r in 0..d {
        let l = g.chol_at(r, r);
        log_diag += l.ln();
        d_chol[r * d + r] += 1.0 / l;
    }
    let mut grad = vec![0.0; net.num_params()];
    net.backward_accumulate(y, &d_mu, &d_chol, &mut grad)?;
    Ok((acc / nz + log_diag, grad))
}

/// `V(φ)` and its exact gradient at fixed draws, flat in [`AmortNet::flatten`] order.
pub fn value_and_grad_v(net: &AmortNet, p: &Problem, ys: &[Vec<f64>], zs: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    check_batch(net, p, ys, zs)?;
    let parts = ys
        .par_iter()
        .enumerate()
        .map(|(i, y)| observation_grad(net, p, y, zs, i))
        .collect::<Result<Vec<_>>>()?;
    let ny = ys.len() as f64;
    let mut grad = vec![0.0; net.num_params()];
    let mut value = 0.0;
    for (v, g) in &parts {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b / ny;
        }
    }
    Ok((entropy_constant(p.param_dim()) + value / ny, grad))
}

/// Gradient of `V(φ)` at fixed draws, split per head.
pub fn grad_v(net: &AmortNet, p: &Problem, ys: &[Vec<f64>], zs: &[Vec<f64>]) -> Result<crate::guide::AmortGrad> {
    let (_, flat) = value_and_grad_v(net, p, ys, zs)?;
    let n_mu = net.head_mu().num_params();
    let n_diag = net.head_diag().num_params();
    let mut split = flat;
    let offdiag = net.head_offdiag().map(|_| crate::nn::FlatGrad(split.split_off(n_mu + n_diag)));
    let diag = crate::nn::FlatGrad(split.split_off(n_mu));
    Ok(crate::guide::AmortGrad {
        mu: crate::nn::FlatGrad(split),
        diag,
        offdiag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// One-based iteration number.
    pub iteration: usize,
    pub v_estimate: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str = "iter,v,lr,grad_norm";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.iteration, r.v_estimate, r.lr, r.grad_norm));
        }
        out
    }

    /// Mean `V` over records `[from, to)`.
    pub fn mean_v(&self, from: usize, to: usize) -> f64 {
        let s = &self.records[from..to];
        s.iter().map(|r| r.v_estimate).sum::<f64>() / s.len() as f64
    }
}

/// Trains a freshly initialized network.
pub fn train(p: &Problem, arch: &Architecture, cfg: &TrainConfig) -> Result<(AmortNet, TrainTrace)> {
    let net = AmortNet::init(p.param_dim(), p.data_dim(), arch, cfg.seed)?;
    train_from(net, p, cfg, |_| {})
}

/// Runs the training loop from a given network; `progress` sees every record.
pub fn train_from<F>(mut net: AmortNet, p: &Problem, cfg: &TrainConfig, mut progress: F) -> Result<(AmortNet, TrainTrace)>
where
    F: FnMut(&TraceRecord),
{
    cfg.validate()?;
    check_len("network parameter dim", p.param_dim(), net.param_dim())?;
    check_len("network data dim", p.data_dim(), net.data_dim())?;
    let mut data_rng = rng::stream(cfg.seed, Stream::Data);
    let mut latent_rng = rng::stream(cfg.seed, Stream::Latent);
    let adam = Adam {
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    };
    let mut phi = net.flatten();
    let mut state = AdamState::new(phi.len());
    let mut trace = TrainTrace {
        records: Vec::with_capacity(cfg.n_iter),
    };

    for k in 0..cfg.n_iter {
        let iteration = k + 1;
        let batch = Batch::draw(p, cfg.n_y, cfg.n_z, &mut data_rng, &mut latent_rng)?;
        let (v, grad) = value_and_grad_v(&net, p, &batch.ys, &batch.zs).map_err(|e| at_iteration(e, iteration))?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "objective",
                iteration,
                obs: first_bad_observation(&net, p, &batch),
                latent: None,
            });
        }
        if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                iteration,
                obs: pos,
                latent: None,
            });
        }
        let eta = lr_schedule(cfg.eta0, cfg.alpha, cfg.r, k);
        adam.step(&mut state, &mut phi, &grad, eta)?;
        net.set_flat(&phi)?;
        let record = TraceRecord {
            iteration,
            v_estimate: v,
            lr: eta,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        };
        progress(&record);
        trace.records.push(record);
    }
    Ok((net, trace))
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { what, obs, latent, .. } => Error::NonFinite {
            what,
            iteration,
            obs,
            latent,
        },
        other => other,
    }
}

fn first_bad_observation(net: &AmortNet, p: &Problem, batch: &Batch) -> usize {
    batch
        .ys
        .iter()
        .enumerate()
        .position(|(i, y)| !observation_term(net, p, y, &batch.zs, i).map_or(false, f64::is_finite))
        .unwrap_or(0)
}
