use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Activation};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Output nodes are `OUTPUT_SCALE * sigmoid(z)`.
pub const OUTPUT_SCALE: f64 = 100.0;

/// Dense layer `a_out = g(W a_in + b)` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub output_scale: f64,
}

/// Scaled output sigmoid, kept strictly inside `(0, scale)`.
#[inline]
pub(crate) fn output_unit(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl FnnModel {
    /// Network with `layer_sizes = [n_in, hidden.., n_out]`, weights drawn from
    /// `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must have >= 2 positive entries, got {layer_sizes:?}"
            )));
        }
        let mut rng = stream(seed, Purpose::Init, 0);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-r..r)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            output_scale: OUTPUT_SCALE,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        let mut m = Self::new(layer_sizes, activation, 0)?;
        for l in &mut m.layers {
            l.weights.fill(0.0);
        }
        Ok(m)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.nrows()
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer for a batch `x` of shape `(n, n_inputs)`; entry 0 is
    /// the input itself and the last entry is the scaled output.
    pub(crate) fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.ncols(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights.t());
            z += &layer.bias.view().insert_axis(Axis(0));
            if i == last {
                let scale = self.output_scale;
                z.mapv_inplace(|v| scale * output_unit(v));
            } else {
                let g = self.activation;
                z.mapv_inplace(|v| g.apply(v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Outputs for a batch of shape `(n, n_inputs)`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(x)?.pop().expect("output layer"))
    }

    /// Output for one normalized feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView1::from(x).insert_axis(Axis(0));
        Ok(self.forward_batch(view)?.row(0).to_vec())
    }

    pub fn to_file(&self, norm_fingerprint: Option<String>) -> ModelFile {
        ModelFile {
            layer_sizes: self.layer_sizes(),
            activation: self.activation,
            output_scale: self.output_scale,
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.iter().copied().collect())
                .collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
            norm_fingerprint,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let sizes = &file.layer_sizes;
        let n_layers = sizes.len().saturating_sub(1);
        if n_layers == 0 || file.weights.len() != n_layers || file.biases.len() != n_layers {
            return Err(Error::invalid("model file layer counts are inconsistent"));
        }
        let layers = (0..n_layers)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let weights = Array2::from_shape_vec((fan_out, fan_in), file.weights[i].clone())
                    .map_err(|_| Error::DimensionMismatch {
                        expected: fan_in * fan_out,
                        got: file.weights[i].len(),
                    })?;
                if file.biases[i].len() != fan_out {
                    return Err(Error::DimensionMismatch {
                        expected: fan_out,
                        got: file.biases[i].len(),
                    });
                }
                Ok(Layer {
                    weights,
                    bias: Array1::from(file.biases[i].clone()),
                })
            })
            .collect::<Result<_>>()?;
        if !(file.output_scale > 0.0) {
            return Err(Error::invalid("output scale must be > 0"));
        }
        Ok(Self {
            layers,
            activation: file.activation,
            output_scale: file.output_scale,
        })
    }
}

/// On-disk model: sizes, activation, output scale, row-major weights, biases, and
/// the fingerprint of the normalization statistics used in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_scale: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub norm_fingerprint: Option<String>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}
