use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{data_term, gradients, loss, Gradients};
use super::metrics::r_squared;
use super::{Design, FnnModel, LossNorm};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent with a constant step.
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_norm: LossNorm,
    pub alpha_w: f64,
    pub alpha_b: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without a better validation data term.
    pub patience: Option<usize>,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_norm: LossNorm::L2,
            alpha_w: 0.001,
            alpha_b: 0.001,
            epochs: 400,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
            patience: Some(40),
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_w >= 0.0 && self.alpha_b >= 0.0) || !self.alpha_w.is_finite() || !self.alpha_b.is_finite() {
            return Err(Error::invalid("regularization coefficients must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be >= 1 when set"));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::invalid("Adam needs 0 <= beta < 1 and epsilon > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full training objective after the epoch.
    pub loss: f64,
    /// Training error term without regularization.
    pub data_term: f64,
    pub train_r2: f64,
    pub val_r2: f64,
    pub val_data_term: f64,
}

/// Weight distribution of one layer at the end of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPercentiles {
    pub epoch: usize,
    pub layer: usize,
    /// Values at [`WeightPercentiles::LEVELS`].
    pub values: Vec<f64>,
}

impl WeightPercentiles {
    pub const LEVELS: [f64; 7] = [0.0, 5.0, 25.0, 50.0, 75.0, 95.0, 100.0];

    fn of(epoch: usize, layer: usize, weights: &Array2<f64>) -> Self {
        let mut w: Vec<f64> = weights.iter().copied().collect();
        w.sort_by(f64::total_cmp);
        let last = (w.len() - 1) as f64;
        let values = Self::LEVELS
            .iter()
            .map(|p| {
                let pos = p / 100.0 * last;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                w[lo] + (pos - lo as f64) * (w[hi] - w[lo])
            })
            .collect();
        Self { epoch, layer, values }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation data term.
    pub model: FnnModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub weight_percentiles: Vec<WeightPercentiles>,
    pub stopped_early: bool,
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,data_term,train_r2,val_r2\n");
    for r in history {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.epoch, r.loss, r.data_term, r.train_r2, r.val_r2
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_percentiles_csv(path: &Path, rows: &[WeightPercentiles]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("epoch,layer");
    for p in WeightPercentiles::LEVELS {
        out.push_str(&format!(",p{p}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{}", r.epoch, r.layer));
        for v in &r.values {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Row order determined by content alone, so the caller's ordering of the training
/// set cannot influence the run.
fn canonical_order(d: &Design) -> Vec<usize> {
    let keys: Vec<[u8; 32]> = (0..d.len())
        .map(|k| {
            let mut h = Sha256::new();
            for v in d.x.row(k).iter().chain(d.y.row(k).iter()) {
                h.update(v.to_le_bytes());
            }
            h.finalize().into()
        })
        .collect();
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    idx
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    step: i32,
}

fn apply_update(
    model: &mut FnnModel,
    grads: &Gradients,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    match (cfg.optimizer, adam) {
        (Optimizer::Adam { beta1, beta2, epsilon }, Some(state)) => {
            state.step += 1;
            let c1 = 1.0 - beta1.powi(state.step);
            let c2 = 1.0 - beta2.powi(state.step);
            let lr = cfg.learning_rate;
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            };
            for (l, layer) in model.layers.iter_mut().enumerate() {
                ndarray::Zip::from(&mut layer.weights)
                    .and(&grads.weights[l])
                    .and(&mut state.m.weights[l])
                    .and(&mut state.v.weights[l])
                    .for_each(|p, &g, m, v| update(p, g, m, v));
                ndarray::Zip::from(&mut layer.bias)
                    .and(&grads.biases[l])
                    .and(&mut state.m.biases[l])
                    .and(&mut state.v.biases[l])
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
        _ => {
            for (l, layer) in model.layers.iter_mut().enumerate() {
                layer.weights.scaled_add(-cfg.learning_rate, &grads.weights[l]);
                layer.bias.scaled_add(-cfg.learning_rate, &grads.biases[l]);
            }
        }
    }
}

/// Mini-batch training with early stopping on the validation data term.
pub fn train(
    mut model: FnnModel,
    train_set: &Design,
    validation: &Design,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let canonical = canonical_order(train_set);
    let mut adam = matches!(cfg.optimizer, Optimizer::Adam { .. }).then(|| AdamState {
        m: Gradients::zeros_like(&model),
        v: Gradients::zeros_like(&model),
        step: 0,
    });

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut percentiles = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let mut order = canonical.clone();
        order.shuffle(&mut stream(cfg.seed, Purpose::Shuffle, epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.select(chunk);
            let (parts, grads) = gradients(&model, batch.x.view(), batch.y.view(), cfg)?;
            if !parts.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: parts.total,
                });
            }
            apply_update(&mut model, &grads, cfg, &mut adam);
        }

        let parts = loss(&model, train_set.x.view(), train_set.y.view(), cfg)?;
        if !parts.total.is_finite() || model.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
            return Err(Error::Divergence {
                epoch,
                loss: parts.total,
            });
        }
        let train_pred = model.forward_batch(train_set.x.view())?;
        let val_pred = model.forward_batch(validation.x.view())?;
        let val_data = data_term(val_pred.view(), validation.y.view(), cfg.loss_norm);
        history.push(EpochRecord {
            epoch,
            loss: parts.total,
            data_term: parts.data,
            train_r2: r_squared(train_pred.view(), train_set.y.view()).unwrap_or(f64::NAN),
            val_r2: r_squared(val_pred.view(), validation.y.view()).unwrap_or(f64::NAN),
            val_data_term: val_data,
        });
        percentiles.extend(
            model
                .layers
                .iter()
                .enumerate()
                .map(|(l, layer)| WeightPercentiles::of(epoch, l, &layer.weights)),
        );
        log::debug!(
            "epoch {epoch}: loss {:.5} train R2 {:.4} val R2 {:.4}",
            parts.total,
            history[epoch - 1].train_r2,
            history[epoch - 1].val_r2
        );

        if val_data < best.0 {
            best = (val_data, model.clone(), epoch);
        } else if cfg.patience.is_some_and(|p| epoch - best.2 >= p) {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        model: best.1,
        best_epoch: best.2,
        history,
        weight_percentiles: percentiles,
        stopped_early,
    })
}

/// Predictions for every row of `design`.
pub(crate) fn predictions(model: &FnnModel, design: &Design) -> Result<Array2<f64>> {
    model.forward_batch(design.x.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnn::Activation;
    use ndarray::Array2;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Design {
        // Smooth map from 4 inputs to 8 outputs in (10, 90).
        let mut rng = stream(seed, Purpose::Sampling, 0);
        let x: Array2<f64> = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 8), |(k, j)| {
            let s: f64 = x[[k, j % 4]] * if j < 4 { 1.0 } else { -0.5 } + 0.3 * x[[k, (j + 1) % 4]];
            50.0 + 30.0 * s.tanh()
        });
        Design { x, y }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 150,
            batch_size: 16,
            learning_rate: 0.01,
            alpha_w: 0.0,
            alpha_b: 0.0,
            patience: None,
            optimizer: Optimizer::adam(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_a_smooth_map() {
        let (tr, va) = (toy(200, 1), toy(60, 2));
        let m = FnnModel::new(&[4, 16, 8], Activation::Tanh, 5).unwrap();
        let out = train(m, &tr, &va, &cfg()).unwrap();
        let best = &out.history[out.best_epoch - 1];
        assert!(best.train_r2 > 0.9, "train R2 {}", best.train_r2);
        assert!(best.val_r2 > 0.9, "val R2 {}", best.val_r2);
        assert_eq!(out.history.len(), 150);
        assert_eq!(out.weight_percentiles.len(), 300);
        let first = out.history[0].loss;
        let last = out.history.last().unwrap().loss;
        assert!(last < 0.2 * first);
    }

    #[test]
    fn sgd_decreases_loss() {
        let (tr, va) = (toy(120, 3), toy(40, 4));
        let m = FnnModel::new(&[4, 12, 8], Activation::Sigmoid, 5).unwrap();
        let c = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.002,
            epochs: 40,
            ..cfg()
        };
        let out = train(m, &tr, &va, &c).unwrap();
        assert!(out.history.last().unwrap().loss < 0.5 * out.history[0].loss);
    }

    #[test]
    fn runs_are_deterministic_and_order_free() {
        let (tr, va) = (toy(50, 1), toy(20, 2));
        let c = TrainConfig { epochs: 5, ..cfg() };
        let m = FnnModel::new(&[4, 6, 8], Activation::Sigmoid, 9).unwrap();
        let a = train(m.clone(), &tr, &va, &c).unwrap();
        let b = train(m.clone(), &tr, &va, &c).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);

        let reversed: Vec<usize> = (0..tr.len()).rev().collect();
        let r = train(m, &tr.select(&reversed), &va, &c).unwrap();
        assert_eq!(a.model, r.model);
    }

    #[test]
    fn early_stopping_keeps_best_snapshot() {
        let (tr, va) = (toy(40, 1), toy(20, 2));
        let c = TrainConfig {
            epochs: 400,
            patience: Some(5),
            learning_rate: 0.05,
            ..cfg()
        };
        let m = FnnModel::new(&[4, 32, 8], Activation::Tanh, 2).unwrap();
        let out = train(m, &tr, &va, &c).unwrap();
        let best = out
            .history
            .iter()
            .min_by(|a, b| a.val_data_term.total_cmp(&b.val_data_term))
            .unwrap();
        assert_eq!(best.epoch, out.best_epoch);
        let val_pred = predictions(&out.model, &va).unwrap();
        let d = data_term(val_pred.view(), va.y.view(), LossNorm::L2);
        assert_eq!(d, best.val_data_term);
        if out.stopped_early {
            assert_eq!(out.history.len(), out.best_epoch + 5);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (tr, va) = (toy(20, 1), toy(10, 2));
        let c = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e300,
            alpha_w: 1.0,
            epochs: 3,
            ..cfg()
        };
        let m = FnnModel::new(&[4, 4, 8], Activation::Tanh, 2).unwrap();
        assert!(matches!(train(m, &tr, &va, &c), Err(Error::Divergence { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { alpha_w: -1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn percentiles_interpolate() {
        let w = Array2::from_shape_vec((1, 5), vec![4.0, 0.0, 1.0, 3.0, 2.0]).unwrap();
        let p = WeightPercentiles::of(1, 0, &w);
        assert_eq!(p.values, vec![0.0, 0.2, 1.0, 2.0, 3.0, 3.8, 4.0]);
    }
}
