//! Planar arm on a vertical rail: slider height plus three joint angles.

use std::sync::Arc;

use super::{ForwardModel, Problem};
use crate::error::Result;

pub const IK_ARM_LENGTHS: [f64; 3] = [0.5, 0.5, 1.0];
pub const IK_PRIOR_STD: [f64; 4] = [0.25, 0.5, 0.5, 0.5];
pub const IK_NOISE: f64 = 0.01;

/// Arm end point `(f1, f2)` for `ξ = (height, θ1, θ2, θ3)`.
pub fn ik_forward(xi: &[f64]) -> [f64; 2] {
    let [l1, l2, l3] = IK_ARM_LENGTHS;
    let a1 = xi[1];
    let a2 = a1 + xi[2];
    let a3 = a2 + xi[3];
    let f1 = l1 * a1.cos() + l2 * a2.cos() + l3 * a3.cos();
    let f2 = xi[0] + l1 * a1.sin() + l2 * a2.sin() + l3 * a3.sin();
    [f1, f2]
}

/// Row-major `2 × 4` Jacobian of [`ik_forward`].
pub fn ik_jacobian(xi: &[f64]) -> [f64; 8] {
    let [l1, l2, l3] = IK_ARM_LENGTHS;
    let a1 = xi[1];
    let a2 = a1 + xi[2];
    let a3 = a2 + xi[3];
    let (s1, c1) = a1.sin_cos();
    let (s2, c2) = a2.sin_cos();
    let (s3, c3) = a3.sin_cos();
    let s_tail = l3 * s3;
    let s_mid = l2 * s2 + s_tail;
    let c_tail = l3 * c3;
    let c_mid = l2 * c2 + c_tail;
    [
        0.0,
        -(l1 * s1 + s_mid),
        -s_mid,
        -s_tail,
        1.0,
        l1 * c1 + c_mid,
        c_mid,
        c_tail,
    ]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InverseKinematics;

impl ForwardModel for InverseKinematics {
    fn input_dim(&self) -> usize {
        4
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn eval(&self, xi: &[f64]) -> Vec<f64> {
        ik_forward(xi).to_vec()
    }

    fn eval_with_jacobian(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (ik_forward(xi).to_vec(), ik_jacobian(xi).to_vec())
    }
}

pub(super) fn problem() -> Result<Problem> {
    Problem::new("ik", vec![0.0; 4], IK_PRIOR_STD.to_vec(), IK_NOISE, Arc::new(InverseKinematics))
}
