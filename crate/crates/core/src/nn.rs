//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Parameters are stored per layer as a row-major weight matrix of shape
//! `(output_dim, input_dim)` followed by a bias vector. The canonical flat
//! order used by [`FlatGrad`], [`Mlp::flatten`] and the model file is
//! layer by layer, weights row-major then bias.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Stream};

/// Above this pre-activation softplus returns its argument unchanged.
pub const SOFTPLUS_LINEAR_ABOVE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Softplus => softplus(t),
            Activation::Linear => t,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at t = 0.
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => softplus_derivative(t),
            Activation::Linear => 1.0,
        }
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > SOFTPLUS_LINEAR_ABOVE {
        t
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn softplus_derivative(t: f64) -> f64 {
    if t > SOFTPLUS_LINEAR_ABOVE {
        1.0
    } else {
        1.0 / (1.0 + (-t).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn num_params(&self) -> usize {
        self.output_dim * self.input_dim + self.output_dim
    }
}

/// Builds a ReLU stack `input → hidden… → output` with the given output activation.
pub fn stack_spec(input_dim: usize, hidden: &[usize], output_dim: usize, out: Activation) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() { out } else { Activation::Relu };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::InvalidSpec("network needs at least one layer".into()));
    }
    for (i, layer) in spec.iter().enumerate() {
        if layer.input_dim == 0 || layer.output_dim == 0 {
            return Err(Error::InvalidSpec(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && spec[i - 1].output_dim != layer.input_dim {
            return Err(Error::NotChainable {
                layer: i,
                input_dim: layer.input_dim,
                prev_output: spec[i - 1].output_dim,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major, `output_dim × input_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient with respect to every parameter of an [`Mlp`], in canonical flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGrad(pub Vec<f64>);

impl FlatGrad {
    pub fn zeros(n: usize) -> Self {
        FlatGrad(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Parameters of a feed-forward network together with its layer specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: Vec<LayerSpec>,
    layers: Vec<Layer>,
}

impl Mlp {
    /// He-style initialization: weights `N(0, 2 / input_dim)`, biases zero.
    pub fn init(spec: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_spec(spec)?;
        let mut rng = rng::stream(seed, Stream::Init);
        let layers = spec
            .iter()
            .map(|s| {
                let scale = (2.0 / s.input_dim as f64).sqrt();
                let weights = (0..s.input_dim * s.output_dim)
                    .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect::<Vec<f64>>();
                Layer {
                    weights,
                    bias: vec![0.0; s.output_dim],
                }
            })
            .collect();
        Ok(Self {
            spec: spec.to_vec(),
            layers,
        })
    }

    pub fn from_layers(spec: &[LayerSpec], layers: Vec<Layer>) -> Result<Self> {
        validate_spec(spec)?;
        check_len("layer count", spec.len(), layers.len())?;
        for (s, l) in spec.iter().zip(&layers) {
            check_len("layer weights", s.input_dim * s.output_dim, l.weights.len())?;
            check_len("layer bias", s.output_dim, l.bias.len())?;
        }
        Ok(Self {
            spec: spec.to_vec(),
            layers,
        })
    }

    pub fn from_flat(spec: &[LayerSpec], flat: &[f64]) -> Result<Self> {
        validate_spec(spec)?;
        let total: usize = spec.iter().map(LayerSpec::num_params).sum();
        check_len("flat parameters", total, flat.len())?;
        let mut layers = Vec::with_capacity(spec.len());
        let mut at = 0;
        for s in spec {
            let nw = s.input_dim * s.output_dim;
            let weights = flat[at..at + nw].to_vec();
            at += nw;
            let bias = flat[at..at + s.output_dim].to_vec();
            at += s.output_dim;
            layers.push(Layer { weights, bias });
        }
        Ok(Self {
            spec: spec.to_vec(),
            layers,
        })
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec[self.spec.len() - 1].output_dim
    }

    pub fn num_params(&self) -> usize {
        self.spec.iter().map(LayerSpec::num_params).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrites all parameters from canonical flat order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameters", self.num_params(), flat.len())?;
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        for (s, l) in self.spec.iter().zip(&self.layers) {
            a = affine(l, s, &a).into_iter().map(|t| s.activation.apply(t)).collect();
        }
        Ok(a)
    }

    /// Vector-Jacobian products of `out_grad` with the output, with respect
    /// to the parameters and to the input.
    pub fn vjp(&self, x: &[f64], out_grad: &[f64]) -> Result<(FlatGrad, Vec<f64>)> {
        let mut grad = FlatGrad::zeros(self.num_params());
        let input_grad = self.vjp_accumulate(x, out_grad, &mut grad.0)?;
        Ok((grad, input_grad))
    }

    /// Like [`Mlp::vjp`] but adds the parameter gradient into `grad`.
    pub fn vjp_accumulate(&self, x: &[f64], out_grad: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), x.len())?;
        check_len("output gradient", self.output_dim(), out_grad.len())?;
        check_len("gradient buffer", self.num_params(), grad.len())?;

        // Forward pass keeping each layer's input and pre-activation.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (s, l) in self.spec.iter().zip(&self.layers) {
            let z = affine(l, s, &a);
            let next = z.iter().map(|&t| s.activation.apply(t)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }

        let mut offsets = Vec::with_capacity(self.spec.len());
        let mut at = 0;
        for s in &self.spec {
            offsets.push(at);
            at += s.num_params();
        }

        let mut upstream = out_grad.to_vec();
        for li in (0..self.layers.len()).rev() {
            let s = &self.spec[li];
            let l = &self.layers[li];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&pre[li])
                .map(|(g, &t)| g * s.activation.derivative(t))
                .collect();
            let input = &inputs[li];
            let off = offsets[li];
            let nw = s.input_dim * s.output_dim;
            let (gw, gb) = grad[off..off + s.num_params()].split_at_mut(nw);
            for (o, &dl) in delta.iter().enumerate() {
                if dl != 0.0 {
                    let row = &mut gw[o * s.input_dim..(o + 1) * s.input_dim];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += dl * v;
                    }
                }
                gb[o] += dl;
            }
            let mut down = vec![0.0; s.input_dim];
            for (o, &dl) in delta.iter().enumerate() {
                if dl != 0.0 {
                    let row = &l.weights[o * s.input_dim..(o + 1) * s.input_dim];
                    for (g, w) in down.iter_mut().zip(row) {
                        *g += w * dl;
                    }
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }
}

#[inline]
fn affine(l: &Layer, s: &LayerSpec, x: &[f64]) -> Vec<f64> {
    l.weights
        .chunks_exact(s.input_dim)
        .zip(&l.bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::finite_diff;
    use proptest::prelude::*;

    fn single(act: Activation, w: Vec<f64>, b: Vec<f64>, n_in: usize) -> Mlp {
        let n_out = b.len();
        Mlp::from_layers(&[LayerSpec::new(n_in, n_out, act)], vec![Layer { weights: w, bias: b }]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = [LayerSpec::new(2, 3, Activation::Relu)];
        let a = Mlp::init(&spec, 7).unwrap();
        let b = Mlp::init(&spec, 7).unwrap();
        let bits = |m: &Mlp| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&Mlp::init(&spec, 8).unwrap()));
    }

    #[test]
    fn init_rejects_unchainable_spec() {
        let spec = [LayerSpec::new(2, 3, Activation::Relu), LayerSpec::new(4, 1, Activation::Linear)];
        assert!(matches!(Mlp::init(&spec, 0), Err(Error::NotChainable { layer: 1, .. })));
        assert!(Mlp::init(&[], 0).is_err());
        assert!(Mlp::init(&[LayerSpec::new(0, 1, Activation::Linear)], 0).is_err());
    }

    #[test]
    fn init_zero_biases() {
        let m = Mlp::init(&[LayerSpec::new(5, 5, Activation::Linear)], 3).unwrap();
        assert!(m.layers()[0].bias.iter().all(|&b| b == 0.0));
        assert!(m.layers()[0].weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn forward_activations() {
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        let lin = single(Activation::Linear, eye.clone(), vec![0.0, 0.0], 2);
        assert_eq!(lin.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let relu = single(Activation::Relu, eye, vec![0.0, 0.0], 2);
        assert_eq!(relu.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        let sp = single(Activation::Softplus, vec![1.0], vec![0.0], 1);
        assert!((sp.forward(&[0.0]).unwrap()[0] - 0.693_147_180_559_945_3).abs() < 1e-15);
        assert!(matches!(lin.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn softplus_large_and_small() {
        assert_eq!(softplus(31.0), 31.0);
        assert!((softplus(30.0) - 30.0).abs() < 1e-12);
        assert!(softplus(-700.0) > 0.0);
        assert_eq!(softplus(1e300), 1e300);
    }

    #[test]
    fn linear_layer_vjp_is_outer_product() {
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = single(Activation::Linear, w.clone(), vec![0.5, -0.5], 3);
        let x = [0.1, -0.2, 0.3];
        let g = [2.0, -1.0];
        let (pg, ig) = m.vjp(&x, &g).unwrap();
        let mut expect = Vec::new();
        for gi in g {
            for xi in x {
                expect.push(gi * xi);
            }
        }
        expect.extend_from_slice(&g);
        assert_eq!(pg.0, expect);
        assert_eq!(ig, vec![1.0 * 2.0 - 4.0, 2.0 * 2.0 - 5.0, 3.0 * 2.0 - 6.0]);
    }

    #[test]
    fn zero_out_grad_gives_zero() {
        let spec = stack_spec(3, &[4, 5], 2, Activation::Softplus);
        let m = Mlp::init(&spec, 1).unwrap();
        let (pg, ig) = m.vjp(&[0.3, -1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!(pg.0.iter().all(|&v| v == 0.0));
        assert!(ig.iter().all(|&v| v == 0.0));
        assert!(m.vjp(&[0.3, -1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let spec = vec![LayerSpec::new(3, 6, Activation::Relu), LayerSpec::new(6, 2, Activation::Softplus)];
        let net = Mlp::init(&spec, 11).unwrap();
        let x = [0.4, -0.7, 1.1];
        let g = [0.8, -1.3];
        let (pg, ig) = net.vjp(&x, &g).unwrap();
        let phi = net.flatten();
        let scalar_phi = |p: &[f64]| {
            let n = Mlp::from_flat(&spec, p).unwrap();
            n.forward(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = finite_diff(scalar_phi, &phi, 1e-5);
        for (a, b) in pg.0.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
        }
        let scalar_x = |xv: &[f64]| net.forward(xv).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let fdx = finite_diff(scalar_x, &x, 1e-5);
        for (a, b) in ig.iter().zip(&fdx) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3));
        }
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
        num / den
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn vjp_agrees_with_central_differences(
            seed in 0u64..10_000,
            n_in in 1usize..4,
            h1 in 1usize..6,
            n_out in 1usize..4,
            out_act in prop_oneof![Just(Activation::Linear), Just(Activation::Softplus), Just(Activation::Relu)],
            xs in proptest::collection::vec(-2.0f64..2.0, 4),
            gs in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let spec = stack_spec(n_in, &[h1], n_out, out_act);
            let mut net = Mlp::init(&spec, seed).unwrap();
            // Nonzero biases move ReLU kinks away from the origin.
            let mut flat = net.flatten();
            for (i, v) in flat.iter_mut().enumerate() {
                *v += 0.05 * ((i as f64) * 0.37).sin();
            }
            net.set_flat(&flat).unwrap();
            let x = &xs[..n_in];
            let g = &gs[..n_out];
            let (pg, ig) = net.vjp(x, g).unwrap();
            let scalar = |p: &[f64]| {
                Mlp::from_flat(&spec, p).unwrap().forward(x).unwrap().iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
            };
            let fd = finite_diff(scalar, &flat, 1e-6);
            prop_assert!(rel_err(&pg.0, &fd) < 1e-4, "param rel err {}", rel_err(&pg.0, &fd));
            let scalar_x = |xv: &[f64]| net.forward(xv).unwrap().iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            let fdx = finite_diff(scalar_x, x, 1e-6);
            prop_assert!(rel_err(&ig, &fdx) < 1e-4);
        }

        #[test]
        fn forward_is_bitwise_repeatable(seed in 0u64..1000, x in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let net = Mlp::init(&stack_spec(3, &[7, 4], 2, Activation::Softplus), seed).unwrap();
            let a = net.forward(&x).unwrap();
            let b = net.forward(&x).unwrap();
            prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn softplus_strictly_positive(t in -700.0f64..700.0) {
            prop_assert!(softplus(t) > 0.0);
        }

        #[test]
        fn flat_round_trip(seed in 0u64..1000, h in 1usize..8) {
            let spec = stack_spec(2, &[h, 3], 4, Activation::Linear);
            let net = Mlp::init(&spec, seed).unwrap();
            let back = Mlp::from_flat(&spec, &net.flatten()).unwrap();
            prop_assert_eq!(back, net);
        }
    }
}
