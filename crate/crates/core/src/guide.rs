//! Full-rank Gaussian guide and the three-headed amortization network.
//!
//! The network maps an observation `y ∈ R^m` to `(μ, L)`:
//!
//! - the mean head ends in a linear layer and emits `μ` directly;
//! - the diagonal head ends in softplus and emits `diag(L)`;
//! - the off-diagonal head ends in a linear layer and emits the `(d² − d)/2`
//!   strict lower-triangle entries in row-major order, i.e.
//!   `L[1,0], L[2,0], L[2,1], L[3,0], …`.
//!
//! For `d = 1` there is no off-diagonal head.

use std::f64::consts::{E, PI};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::nn::{stack_spec, Activation, FlatGrad, Mlp};
use crate::rng::Stream;

/// Added to the softplus diagonal so the triangular solve stays well conditioned.
pub const DIAG_FLOOR: f64 = 1e-6;

/// Mean and lower Cholesky factor (row-major `d × d`) of a Gaussian guide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuideParams {
    pub mu: Vec<f64>,
    pub chol: Vec<f64>,
}

impl GuideParams {
    pub fn new(mu: Vec<f64>, chol: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        check_len("cholesky factor", d * d, chol.len())?;
        for r in 0..d {
            for c in r + 1..d {
                if chol[r * d + c] != 0.0 {
                    return Err(Error::Domain(format!("cholesky factor has nonzero upper entry ({r},{c})")));
                }
            }
        }
        let g = Self { mu, chol };
        g.check_diag()?;
        if !g.mu.iter().chain(&g.chol).all(|v| v.is_finite()) {
            return Err(Error::Domain("guide parameters must be finite".into()));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn chol_at(&self, r: usize, c: usize) -> f64 {
        self.chol[r * self.dim() + c]
    }

    /// `Σ = L Lᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        linalg::lower_outer(&self.chol, self.dim())
    }

    fn check_diag(&self) -> Result<()> {
        let d = self.dim();
        for r in 0..d {
            let v = self.chol[r * d + r];
            if !(v > 0.0) {
                return Err(Error::Domain(format!("cholesky diagonal entry {r} is {v}, must be > 0")));
            }
        }
        Ok(())
    }

    /// Reparameterized draw `μ + L z`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        check_len("latent vector", d, z.len())?;
        Ok(self.sample_unchecked(z))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|r| {
                let row = &self.chol[r * d..r * d + r + 1];
                self.mu[r] + row.iter().zip(z).map(|(l, zc)| l * zc).sum::<f64>()
            })
            .collect()
    }

    /// `log N(ξ | μ, L Lᵀ)` via the triangular solve `L w = ξ − μ`.
    pub fn log_density(&self, xi: &[f64]) -> Result<f64> {
        let d = self.dim();
        check_len("parameter vector", d, xi.len())?;
        self.check_diag()?;
        let diff: Vec<f64> = xi.iter().zip(&self.mu).map(|(x, m)| x - m).collect();
        let w = linalg::solve_lower(&self.chol, d, &diff);
        let log_det: f64 = (0..d).map(|r| self.chol[r * d + r].ln()).sum();
        Ok(-0.5 * d as f64 * (2.0 * PI).ln() - log_det - 0.5 * w.iter().map(|v| v * v).sum::<f64>())
    }

    /// `(d/2) log(2πe) + Σ log L_rr`.
    pub fn entropy(&self) -> f64 {
        let d = self.dim();
        0.5 * d as f64 * (2.0 * PI * E).ln() + (0..d).map(|r| self.chol[r * d + r].ln()).sum::<f64>()
    }
}

/// Hidden layer sizes of each head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub mu: Vec<usize>,
    pub diag: Vec<usize>,
    pub offdiag: Vec<usize>,
}

impl Architecture {
    pub fn uniform(hidden: &[usize]) -> Self {
        Self {
            mu: hidden.to_vec(),
            diag: hidden.to_vec(),
            offdiag: hidden.to_vec(),
        }
    }
}

/// Index of `L[r, c]` (c < r) within the off-diagonal head output.
#[inline]
pub fn offdiag_index(r: usize, c: usize) -> usize {
    r * (r - 1) / 2 + c
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmortNet {
    head_mu: Mlp,
    head_diag: Mlp,
    head_offdiag: Option<Mlp>,
    d: usize,
    m: usize,
}

/// Gradients for the three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct AmortGrad {
    pub mu: FlatGrad,
    pub diag: FlatGrad,
    pub offdiag: Option<FlatGrad>,
}

impl AmortGrad {
    /// Concatenation in the network's flat order (mean, diagonal, off-diagonal).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.mu.0.clone();
        out.extend_from_slice(&self.diag.0);
        if let Some(o) = &self.offdiag {
            out.extend_from_slice(&o.0);
        }
        out
    }
}

impl AmortNet {
    pub fn init(d: usize, m: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidSpec("parameter and data dimensions must be positive".into()));
        }
        let head = |hidden: &[usize], out: usize, act: Activation, index: u64| {
            let spec = stack_spec(m, hidden, out, act);
            let head_seed = crate::rng::substream(seed, Stream::Init, index).next_u64();
            Mlp::init(&spec, head_seed)
        };
        let head_mu = head(&arch.mu, d, Activation::Linear, 0)?;
        let head_diag = head(&arch.diag, d, Activation::Softplus, 1)?;
        let head_offdiag = if d > 1 {
            Some(head(&arch.offdiag, d * (d - 1) / 2, Activation::Linear, 2)?)
        } else {
            None
        };
        Self::from_heads(d, m, head_mu, head_diag, head_offdiag)
    }

    pub fn from_heads(d: usize, m: usize, head_mu: Mlp, head_diag: Mlp, head_offdiag: Option<Mlp>) -> Result<Self> {
        check_len("mean head input", m, head_mu.input_dim())?;
        check_len("mean head output", d, head_mu.output_dim())?;
        check_len("diagonal head input", m, head_diag.input_dim())?;
        check_len("diagonal head output", d, head_diag.output_dim())?;
        let last = |h: &Mlp| h.spec()[h.spec().len() - 1].activation;
        if last(&head_diag) != Activation::Softplus {
            return Err(Error::InvalidSpec("diagonal head must end in softplus".into()));
        }
        match (&head_offdiag, d) {
            (None, 1) => {}
            (Some(h), d) if d > 1 => {
                check_len("off-diagonal head input", m, h.input_dim())?;
                check_len("off-diagonal head output", d * (d - 1) / 2, h.output_dim())?;
            }
            _ => return Err(Error::InvalidSpec("off-diagonal head must exist exactly when d > 1".into())),
        }
        Ok(Self {
            head_mu,
            head_diag,
            head_offdiag,
            d,
            m,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.d
    }

    pub fn data_dim(&self) -> usize {
        self.m
    }

    pub fn head_mu(&self) -> &Mlp {
        &self.head_mu
    }

    pub fn head_diag(&self) -> &Mlp {
        &self.head_diag
    }

    pub fn head_offdiag(&self) -> Option<&Mlp> {
        self.head_offdiag.as_ref()
    }

    fn heads(&self) -> impl Iterator<Item = &Mlp> {
        [&self.head_mu, &self.head_diag].into_iter().chain(self.head_offdiag.as_ref())
    }

    pub fn num_params(&self) -> usize {
        self.heads().map(Mlp::num_params).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for h in self.heads() {
            out.extend(h.flatten());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("network parameters", self.num_params(), flat.len())?;
        let mut at = 0;
        for h in [&mut self.head_mu, &mut self.head_diag].into_iter().chain(self.head_offdiag.as_mut()) {
            let n = h.num_params();
            h.set_flat(&flat[at..at + n])?;
            at += n;
        }
        Ok(())
    }

    /// Guide parameters for one observation.
    pub fn forward(&self, y: &[f64]) -> Result<GuideParams> {
        check_len("observation", self.m, y.len())?;
        let d = self.d;
        let mu = self.head_mu.forward(y)?;
        let diag = self.head_diag.forward(y)?;
        let mut chol = vec![0.0; d * d];
        for r in 0..d {
            chol[r * d + r] = diag[r] + DIAG_FLOOR;
        }
        if let Some(h) = &self.head_offdiag {
            let off = h.forward(y)?;
            for r in 1..d {
                for c in 0..r {
                    chol[r * d + c] = off[offdiag_index(r, c)];
                }
            }
        }
        Ok(GuideParams { mu, chol })
    }

    /// Pulls gradients with respect to `μ` and `L` (row-major `d × d`; upper
    /// entries ignored) back to the three heads.
    pub fn backward(&self, y: &[f64], d_mu: &[f64], d_chol: &[f64]) -> Result<AmortGrad> {
        let mut flat = vec![0.0; self.num_params()];
        self.backward_accumulate(y, d_mu, d_chol, &mut flat)?;
        let n_mu = self.head_mu.num_params();
        let n_diag = self.head_diag.num_params();
        let offdiag = self.head_offdiag.as_ref().map(|_| FlatGrad(flat[n_mu + n_diag..].to_vec()));
        flat.truncate(n_mu + n_diag);
        let diag = FlatGrad(flat.split_off(n_mu));
        Ok(AmortGrad {
            mu: FlatGrad(flat),
            diag,
            offdiag,
        })
    }

    /// Adds the head gradients into a flat buffer laid out like [`AmortNet::flatten`].
    pub fn backward_accumulate(&self, y: &[f64], d_mu: &[f64], d_chol: &[f64], grad: &mut [f64]) -> Result<()> {
        let d = self.d;
        check_len("observation", self.m, y.len())?;
        check_len("mean gradient", d, d_mu.len())?;
        check_len("cholesky gradient", d * d, d_chol.len())?;
        check_len("gradient buffer", self.num_params(), grad.len())?;
        let n_mu = self.head_mu.num_params();
        let n_diag = self.head_diag.num_params();
        let (g_mu, rest) = grad.split_at_mut(n_mu);
        let (g_diag, g_off) = rest.split_at_mut(n_diag);
        self.head_mu.vjp_accumulate(y, d_mu, g_mu)?;
        let d_diag: Vec<f64> = (0..d).map(|r| d_chol[r * d + r]).collect();
        self.head_diag.vjp_accumulate(y, &d_diag, g_diag)?;
        if let Some(h) = &self.head_offdiag {
            let mut d_off = vec![0.0; d * (d - 1) / 2];
            for r in 1..d {
                for c in 0..r {
                    d_off[offdiag_index(r, c)] = d_chol[r * d + c];
                }
            }
            h.vjp_accumulate(y, &d_off, g_off)?;
        }
        Ok(())
    }
}
