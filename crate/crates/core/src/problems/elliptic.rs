//! Steady heat conduction in a rod with log-sinusoidal conductivity.
//!
//! `−(a u′)′ = 0` on `[0, 1]` with `u(0) = 1`, `u(1) = 0` reduces to
//! `u(x) = 1 − F(x)/F(1)` where `F(x) = ∫₀ˣ a(t)⁻¹ dt`. `F` is integrated
//! with composite Simpson on a fixed uniform grid; a query point that is not
//! an even grid node adds one short Simpson panel from the nearest even node
//! below it. The Jacobian differentiates the same quadrature exactly.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use super::{ForwardModel, Problem};
use crate::error::Result;

pub const ELLIPTIC_TERMS: usize = 5;
pub const ELLIPTIC_FIELD_SIGMA: f64 = 1.5;
pub const ELLIPTIC_GRID_POINTS: usize = 2001;
pub const ELLIPTIC_NOISE: f64 = 0.015;

/// `x_i = 0.15 + 0.0875 (i − 1)`, i = 1..9.
pub fn default_sensors() -> Vec<f64> {
    (0..9).map(|i| 0.15 + 0.0875 * i as f64).collect()
}

/// Basis functions `√2 σ / ((i − ½)π) · sin((i − ½)π x)`.
fn basis(x: f64) -> [f64; ELLIPTIC_TERMS] {
    std::array::from_fn(|k| {
        let w = (k as f64 + 0.5) * PI;
        SQRT_2 * ELLIPTIC_FIELD_SIGMA / w * (w * x).sin()
    })
}

#[inline]
fn log_field(b: &[f64; ELLIPTIC_TERMS], xi: &[f64]) -> f64 {
    b.iter().zip(xi).map(|(b, x)| b * x).sum()
}

/// Conductivity `a(x, ξ) = exp g(x, ξ)`.
pub fn elliptic_conductivity(x: f64, xi: &[f64]) -> f64 {
    log_field(&basis(x), xi).exp()
}

/// Temperature at `sensor_xs` for parameters `ξ`.
pub fn elliptic_solve(xi: &[f64], sensor_xs: &[f64]) -> Vec<f64> {
    EllipticRod::with_grid(sensor_xs.to_vec(), ELLIPTIC_GRID_POINTS).eval(xi)
}

#[derive(Debug, Clone)]
struct SensorPanel {
    /// Even grid node at or below the sensor.
    node: usize,
    /// Panel length `x − t_node`; zero when the sensor sits on the node.
    len: f64,
    mid: [f64; ELLIPTIC_TERMS],
    end: [f64; ELLIPTIC_TERMS],
}

/// Precomputed quadrature for a fixed sensor layout.
#[derive(Debug, Clone)]
pub struct EllipticRod {
    sensors: Vec<f64>,
    h: f64,
    nodes: Vec<[f64; ELLIPTIC_TERMS]>,
    panels: Vec<SensorPanel>,
}

impl EllipticRod {
    pub fn new(sensors: Vec<f64>) -> Self {
        Self::with_grid(sensors, ELLIPTIC_GRID_POINTS)
    }

    /// `points` must be odd so the grid has an even number of intervals.
    pub fn with_grid(sensors: Vec<f64>, points: usize) -> Self {
        assert!(points >= 3 && points % 2 == 1, "Simpson grid needs an odd point count");
        let intervals = points - 1;
        let h = 1.0 / intervals as f64;
        let nodes = (0..points).map(|n| basis(n as f64 * h)).collect();
        let panels = sensors
            .iter()
            .map(|&x| {
                assert!((0.0..=1.0).contains(&x), "sensor {x} outside [0, 1]");
                let mut node = ((x / h).floor() as usize).min(intervals);
                node -= node % 2;
                let len = (x - node as f64 * h).max(0.0);
                SensorPanel {
                    node,
                    len,
                    mid: basis(node as f64 * h + 0.5 * len),
                    end: basis(x),
                }
            })
            .collect();
        Self {
            sensors,
            h,
            nodes,
            panels,
        }
    }

    pub fn sensors(&self) -> &[f64] {
        &self.sensors
    }

    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        self.solve::<false>(xi).0
    }

    /// Sensor temperatures and their row-major `m × 5` Jacobian.
    pub fn eval_with_jacobian(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.solve::<true>(xi)
    }

    /// Cumulative integrals of `1/a` (index 0) and of `∂(1/a)/∂ξ_k`
    /// (indices 1..=5) at every even node.
    fn cumulative<const GRAD: bool>(&self, xi: &[f64]) -> Vec<[f64; ELLIPTIC_TERMS + 1]> {
        let point = |b: &[f64; ELLIPTIC_TERMS]| {
            let q = (-log_field(b, xi)).exp();
            let mut v = [0.0; ELLIPTIC_TERMS + 1];
            v[0] = q;
            if GRAD {
                for k in 0..ELLIPTIC_TERMS {
                    v[k + 1] = -q * b[k];
                }
            }
            v
        };
        let w = self.h / 3.0;
        let mut out = Vec::with_capacity(self.nodes.len() / 2 + 1);
        let mut acc = [0.0; ELLIPTIC_TERMS + 1];
        out.push(acc);
        let mut left = point(&self.nodes[0]);
        for pair in self.nodes[1..].chunks_exact(2) {
            let mid = point(&pair[0]);
            let right = point(&pair[1]);
            let width = if GRAD { ELLIPTIC_TERMS + 1 } else { 1 };
            for c in 0..width {
                acc[c] += w * (left[c] + 4.0 * mid[c] + right[c]);
            }
            out.push(acc);
            left = right;
        }
        out
    }

    fn solve<const GRAD: bool>(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(xi.len(), ELLIPTIC_TERMS);
        let cum = self.cumulative::<GRAD>(xi);
        let total = cum[cum.len() - 1];
        let width = if GRAD { ELLIPTIC_TERMS + 1 } else { 1 };
        let mut values = Vec::with_capacity(self.panels.len());
        let mut jac = Vec::with_capacity(if GRAD { self.panels.len() * ELLIPTIC_TERMS } else { 0 });
        for p in &self.panels {
            let mut f = cum[p.node / 2];
            if p.len > 0.0 {
                let start = &self.nodes[p.node];
                let qs = [start, &p.mid, &p.end].map(|b| (-log_field(b, xi)).exp());
                let wts = [1.0, 4.0, 1.0];
                for (j, b) in [start, &p.mid, &p.end].into_iter().enumerate() {
                    let scaled = p.len / 6.0 * wts[j] * qs[j];
                    f[0] += scaled;
                    if GRAD {
                        for k in 0..ELLIPTIC_TERMS {
                            f[k + 1] -= scaled * b[k];
                        }
                    }
                }
            }
            values.push(1.0 - f[0] / total[0]);
            if GRAD {
                for k in 1..width {
                    jac.push(-(f[k] * total[0] - f[0] * total[k]) / (total[0] * total[0]));
                }
            }
        }
        (values, jac)
    }
}

impl ForwardModel for EllipticRod {
    fn input_dim(&self) -> usize {
        ELLIPTIC_TERMS
    }

    fn output_dim(&self) -> usize {
        self.sensors.len()
    }

    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        EllipticRod::eval(self, xi)
    }

    fn eval_with_jacobian(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        EllipticRod::eval_with_jacobian(self, xi)
    }
}

pub(super) fn problem() -> Result<Problem> {
    Problem::new(
        "elliptic",
        vec![0.0; ELLIPTIC_TERMS],
        vec![1.0; ELLIPTIC_TERMS],
        ELLIPTIC_NOISE,
        Arc::new(EllipticRod::new(default_sensors())),
    )
}
