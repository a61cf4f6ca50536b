//! Small feedforward networks: tanh hidden layers, linear scalar output.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Layer sizes and flat weight storage of one scalar-output network.
///
/// Weights are stored layer by layer, each as a row-major `out x in` matrix
/// followed by `out` biases.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Network {
    /// Feature dimension of the input layer.
    pub input_dim: usize,
    /// Hidden layer widths (1 to 3 layers in the search space).
    pub hidden: Vec<usize>,
    /// Flat parameter vector.
    pub weights: Vec<f64>,
}

impl Network {
    /// Parameter count for a given architecture.
    pub fn param_count(input_dim: usize, hidden: &[usize]) -> usize {
        let mut count = 0;
        let mut prev = input_dim;
        for &h in hidden {
            count += h * prev + h;
            prev = h;
        }
        count + prev + 1
    }

    /// Seeded initialization, uniform in `±1/sqrt(fan_in)` per layer.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(Self::param_count(input_dim, hidden));
        let mut prev = input_dim;
        for &h in hidden.iter().chain(std::iter::once(&1)) {
            let bound = 1.0 / (prev as f64).sqrt();
            for _ in 0..h * prev + h {
                weights.push(rng.gen_range(-bound..bound));
            }
            prev = h;
        }
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::param_count(self.input_dim, &self.hidden);
        if self.weights.len() != expected {
            return Err(Error::Config(format!(
                "weight vector length {} does not match architecture ({} expected)",
                self.weights.len(),
                expected
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    /// Evaluate the network on one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_dim {
            return Err(Error::Config(format!(
                "feature length {} does not match input dimension {}",
                features.len(),
                self.input_dim
            )));
        }
        let mut activ: Vec<f64> = features.to_vec();
        let mut offset = 0;
        for &h in &self.hidden {
            activ = self.layer(&activ, h, &mut offset, true);
        }
        let out = self.layer(&activ, 1, &mut offset, false);
        Ok(out[0])
    }

    fn layer(&self, input: &[f64], out_dim: usize, offset: &mut usize, tanh: bool) -> Vec<f64> {
        let n_in = input.len();
        let w = &self.weights[*offset..*offset + out_dim * n_in];
        let b = &self.weights[*offset + out_dim * n_in..*offset + out_dim * n_in + out_dim];
        *offset += out_dim * n_in + out_dim;
        (0..out_dim)
            .map(|o| {
                let mut z = b[o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                if tanh {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Forward pass plus the gradient of the output with respect to every
    /// weight (one backward sweep; the output is scalar).
    pub fn forward_with_gradient(&self, features: &[f64], grad: &mut DVector<f64>) -> Result<f64> {
        self.forward_with_gradients(features, grad, None)
    }

    /// Like [`Self::forward_with_gradient`], optionally also producing the
    /// gradient with respect to the input features (needed to differentiate
    /// through the output-feedback recursion).
    pub fn forward_with_gradients(
        &self,
        features: &[f64],
        grad: &mut DVector<f64>,
        mut input_grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        if features.len() != self.input_dim {
            return Err(Error::Config(format!(
                "feature length {} does not match input dimension {}",
                features.len(),
                self.input_dim
            )));
        }
        debug_assert_eq!(grad.len(), self.n_params());

        // forward, keeping activations per layer
        let n_layers = self.hidden.len() + 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(features.to_vec());
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            let out_dim = if l < self.hidden.len() { self.hidden[l] } else { 1 };
            let prev = activations[l].clone();
            let act = self.layer(&prev, out_dim, &mut offset, l < self.hidden.len());
            activations.push(act);
        }
        let output = activations[n_layers][0];

        // backward: delta = d(output)/d(pre-activation)
        let mut delta: Vec<f64> = vec![1.0];
        for l in (0..n_layers).rev() {
            let out_dim = if l < self.hidden.len() { self.hidden[l] } else { 1 };
            let input = &activations[l];
            let n_in = input.len();
            let base = offsets[l];
            // weight and bias gradients of this layer
            for o in 0..out_dim {
                let d = delta[o];
                let row = base + o * n_in;
                for i in 0..n_in {
                    grad[row + i] = d * input[i];
                }
                grad[base + out_dim * n_in + o] = d;
            }
            if l > 0 {
                // propagate to the previous layer through W and tanh'
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..out_dim {
                    let d = delta[o];
                    let row = base + o * n_in;
                    for (i, pd) in prev_delta.iter_mut().enumerate() {
                        *pd += d * self.weights[row + i];
                    }
                }
                for (i, pd) in prev_delta.iter_mut().enumerate() {
                    let a = activations[l][i];
                    *pd *= 1.0 - a * a; // tanh'
                }
                delta = prev_delta;
            } else if let Some(gi) = input_grad.as_deref_mut() {
                for (i, g) in gi.iter_mut().enumerate() {
                    *g = 0.0;
                    for o in 0..out_dim {
                        *g += delta[o] * self.weights[base + o * n_in + i];
                    }
                }
            }
        }
        Ok(output)
    }
}
