//! Training objective and its exact gradient.
//!
//! For a batch of `N'` samples with eight outputs each,
//!
//! ```text
//! L2: data = (1/N') sum_k mean_j (yhat_kj - y_kj)^2,  penalty = a_w sum w^2 + a_b sum b^2
//! L1: data = (1/N') sum_k mean_j |yhat_kj - y_kj|,    penalty = a_w sum |w| + a_b sum |b|
//! ```
//!
//! Every weight and every bias (output layer included) is penalized. The L1
//! subgradient at zero is taken as zero.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::{FnnModel, LossNorm, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// Mean error term without regularization (the reported MSE or MAE).
    pub data: f64,
    pub weight_penalty: f64,
    pub bias_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &FnnModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_batch(model: &FnnModel, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if y.ncols() != model.n_outputs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_outputs(),
            got: y.ncols(),
        });
    }
    Ok(())
}

fn penalties(model: &FnnModel, norm: LossNorm) -> (f64, f64) {
    let f = |v: &f64| match norm {
        LossNorm::L1 => v.abs(),
        LossNorm::L2 => v * v,
    };
    let w = model.layers.iter().map(|l| l.weights.iter().map(f).sum::<f64>()).sum();
    let b = model.layers.iter().map(|l| l.bias.iter().map(f).sum::<f64>()).sum();
    (w, b)
}

pub(crate) fn data_term(pred: ArrayView2<f64>, y: ArrayView2<f64>, norm: LossNorm) -> f64 {
    let n = (pred.nrows() * pred.ncols()) as f64;
    let s: f64 = match norm {
        LossNorm::L1 => Zip::from(pred).and(y).fold(0.0, |acc, p, t| acc + (p - t).abs()),
        LossNorm::L2 => Zip::from(pred).and(y).fold(0.0, |acc, p, t| acc + (p - t) * (p - t)),
    };
    s / n
}

fn assemble(model: &FnnModel, data: f64, cfg: &TrainConfig) -> LossParts {
    let (wp, bp) = penalties(model, cfg.loss_norm);
    LossParts {
        total: data + cfg.alpha_w * wp + cfg.alpha_b * bp,
        data,
        weight_penalty: wp,
        bias_penalty: bp,
    }
}

pub fn loss(
    model: &FnnModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<LossParts> {
    check_batch(model, x, y)?;
    let pred = model.forward_batch(x)?;
    Ok(assemble(model, data_term(pred.view(), y, cfg.loss_norm), cfg))
}

/// Loss and its gradient with respect to every weight and bias, by backpropagation.
pub fn gradients(
    model: &FnnModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(LossParts, Gradients)> {
    check_batch(model, x, y)?;
    let acts = model.forward_trace(x)?;
    let out = acts.last().expect("output");
    let parts = assemble(model, data_term(out.view(), y, cfg.loss_norm), cfg);

    let count = (out.nrows() * out.ncols()) as f64;
    let scale = model.output_scale;
    // dL/dz at the output: dL/dyhat * yhat (1 - yhat / scale)
    let mut delta = Array2::zeros(out.raw_dim());
    Zip::from(&mut delta).and(out).and(y).for_each(|d, &p, &t| {
        let dl = match cfg.loss_norm {
            LossNorm::L2 => 2.0 * (p - t) / count,
            LossNorm::L1 => sign(p - t) / count,
        };
        *d = dl * p * (1.0 - p / scale);
    });

    let mut grads = Gradients::zeros_like(model);
    for l in (0..model.layers.len()).rev() {
        let input = &acts[l];
        grads.weights[l] = delta.t().dot(input);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let g = model.activation;
            let mut back = delta.dot(&model.layers[l].weights);
            Zip::from(&mut back)
                .and(input)
                .for_each(|b, &a| *b *= g.derivative_from_output(a));
            delta = back;
        }
    }

    for (l, layer) in model.layers.iter().enumerate() {
        match cfg.loss_norm {
            LossNorm::L2 => {
                grads.weights[l].scaled_add(2.0 * cfg.alpha_w, &layer.weights);
                grads.biases[l].scaled_add(2.0 * cfg.alpha_b, &layer.bias);
            }
            LossNorm::L1 => {
                Zip::from(&mut grads.weights[l])
                    .and(&layer.weights)
                    .for_each(|g, &w| *g += cfg.alpha_w * sign(w));
                Zip::from(&mut grads.biases[l])
                    .and(&layer.bias)
                    .for_each(|g, &b| *g += cfg.alpha_b * sign(b));
            }
        }
    }
    Ok((parts, grads))
}
