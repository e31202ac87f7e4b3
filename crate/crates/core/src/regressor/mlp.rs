//! Softplus multilayer perceptron with hand-written backpropagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Units per layer, input first.
pub const LAYER_SIZES: [usize; 4] = [1, 8, 12, 3];

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Weights and biases of the `1-8-12-3` network. Softplus follows every
/// affine layer; the scalar input enters raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Pre-activations and activations of one forward pass.
pub(crate) struct Trace {
    /// `activations[0]` is the input.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> [f64; 3] {
        let a = self.activations.last().expect("non-empty trace");
        [a[0], a[1], a[2]]
    }
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self { layers: LAYER_SIZES.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    /// Weights from `N(0, std^2)`, zero biases.
    pub fn init(seed: u64, std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite init std");
        let mut p = Self::zeros();
        for layer in &mut p.layers {
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn from_flat(&self, flat: &[f64]) -> Self {
        let mut p = self.clone();
        p.values_mut().zip(flat).for_each(|(d, s)| *d = *s);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let shapes: Vec<(usize, usize)> = self.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        let expected: Vec<(usize, usize)> = LAYER_SIZES.windows(2).map(|w| (w[0], w[1])).collect();
        if shapes != expected {
            return Err(Error::Malformed(format!("layer shapes {shapes:?}, expected {expected:?}")));
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Malformed("layer array lengths do not match shape".into()));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameter"));
            }
        }
        Ok(())
    }

    pub(crate) fn trace(&self, varsigma: f64) -> Trace {
        let mut activations = vec![vec![varsigma]];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.affine(activations.last().expect("input present"));
            activations.push(z.iter().map(|&v| softplus(v).max(f64::MIN_POSITIVE)).collect());
            pre.push(z);
        }
        Trace { activations, pre }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub(crate) fn backward(&self, trace: &Trace, d_out: [f64; 3], grad: &mut MlpParams) {
        let mut upstream = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            let dz: Vec<f64> = upstream.iter().zip(&trace.pre[l]).map(|(g, &z)| g * sigmoid(z)).collect();
            let g = &mut grad.layers[l];
            for o in 0..layer.outputs {
                g.biases[o] += dz[o];
                for i in 0..layer.inputs {
                    g.weights[o * layer.inputs + i] += dz[o] * input[i];
                }
            }
            if l > 0 {
                upstream = (0..layer.inputs)
                    .map(|i| (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * dz[o]).sum())
                    .collect();
            }
        }
    }
}

/// Dirichlet concentrations `(alpha_TR, alpha_FPR, alpha_FNR)` for a similarity value.
pub fn forward(params: &MlpParams, varsigma: f64) -> Result<[f64; 3]> {
    if !varsigma.is_finite() {
        return Err(Error::NonFinite("similarity input"));
    }
    Ok(params.trace(varsigma).output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_network_outputs_log_two() {
        let a = forward(&MlpParams::zeros(), 0.7).unwrap();
        for v in a {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(forward(&MlpParams::zeros(), f64::NAN).is_err());
        assert!(forward(&MlpParams::zeros(), f64::INFINITY).is_err());
    }

    #[test]
    fn parameter_count_and_flat_round_trip() {
        let p = MlpParams::init(3, 0.1);
        assert_eq!(p.n_params(), 8 + 8 + 96 + 12 + 36 + 3);
        assert_eq!(p.from_flat(&p.flatten()), p);
        p.validate().unwrap();
        assert_eq!(MlpParams::init(3, 0.1), p);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    proptest! {
        #[test]
        fn output_is_positive_and_continuous(seed in 0u64..1000, std in 0.1..3.0_f64, s in -5.0..5.0_f64) {
            let p = MlpParams::init(seed, std);
            let a = forward(&p, s).unwrap();
            prop_assert!(a.iter().all(|&v| v > 0.0));
            let b = forward(&p, s + 1e-9).unwrap();
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-6);
            }
        }
    }
}
