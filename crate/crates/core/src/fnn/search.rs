use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::r_squared;
use super::train::{predictions, train, TrainConfig};
use super::{Activation, Design, FnnModel, LossNorm, TargetTransform};
use crate::datagen::{fit_norm, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Number of measured samples placed on the training side of every fold.
const REAL_TRAIN_COUNT: usize = 3;
const REAL_MIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden: Vec<usize>,
    pub loss_norm: LossNorm,
    pub activation: Activation,
    pub alpha_b: f64,
    pub alpha_w: f64,
}

impl Hyperparams {
    pub fn layer_sizes(&self, n_inputs: usize, n_outputs: usize) -> Vec<usize> {
        let mut sizes = vec![n_inputs];
        sizes.extend(&self.hidden);
        sizes.push(n_outputs);
        sizes
    }

    /// `base` with this candidate's loss norm and coefficients.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            loss_norm: self.loss_norm,
            alpha_w: self.alpha_w,
            alpha_b: self.alpha_b,
            ..base.clone()
        }
    }

    pub fn hidden_label(&self) -> String {
        let parts: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} alpha_b={} alpha_w={}",
            self.hidden_label(),
            self.loss_norm,
            self.activation,
            self.alpha_b,
            self.alpha_w
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpace {
    pub hidden: Vec<Vec<usize>>,
    pub loss_norms: Vec<LossNorm>,
    pub activations: Vec<Activation>,
    pub alpha_b: Vec<f64>,
    pub alpha_w: Vec<f64>,
}

impl Default for CandidateSpace {
    /// Four structures, two norms, two activations and two magnitudes per penalty.
    fn default() -> Self {
        Self {
            hidden: vec![vec![112], vec![256], vec![140, 112], vec![140, 112, 84]],
            loss_norms: vec![LossNorm::L1, LossNorm::L2],
            activations: vec![Activation::Sigmoid, Activation::Tanh],
            alpha_b: vec![0.01, 0.001],
            alpha_w: vec![0.01, 0.001],
        }
    }
}

impl CandidateSpace {
    /// All combinations in declaration order (structure outermost).
    pub fn combinations(&self) -> Result<Vec<Hyperparams>> {
        if self.hidden.is_empty()
            || self.loss_norms.is_empty()
            || self.activations.is_empty()
            || self.alpha_b.is_empty()
            || self.alpha_w.is_empty()
        {
            return Err(Error::invalid("every candidate list must be non-empty"));
        }
        if self.hidden.iter().any(|h| h.contains(&0)) {
            return Err(Error::invalid("hidden layers must have at least one node"));
        }
        let mut out = Vec::new();
        for h in &self.hidden {
            for &loss_norm in &self.loss_norms {
                for &activation in &self.activations {
                    for &alpha_b in &self.alpha_b {
                        for &alpha_w in &self.alpha_w {
                            out.push(Hyperparams {
                                hidden: h.clone(),
                                loss_norm,
                                activation,
                                alpha_b,
                                alpha_w,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub hyperparams: Hyperparams,
    pub train_r2: f64,
    pub val_r2: f64,
    /// Position in declaration order, used as the final tie-break.
    pub order: usize,
}

fn rank(rows: &mut [GridRow]) {
    rows.sort_by(|a, b| {
        b.val_r2
            .total_cmp(&a.val_r2)
            .then(b.train_r2.total_cmp(&a.train_r2))
            .then(a.order.cmp(&b.order))
    });
}

fn fit_and_score(
    hyper: &Hyperparams,
    train_set: &Design,
    validation: &Design,
    base: &TrainConfig,
) -> Result<(FnnModel, f64, f64)> {
    let cfg = hyper.train_config(base);
    let sizes = hyper.layer_sizes(train_set.x.ncols(), train_set.y.ncols());
    let model = FnnModel::new(&sizes, hyper.activation, base.seed)?;
    let out = train(model, train_set, validation, &cfg)?;
    let tr = r_squared(predictions(&out.model, train_set)?.view(), train_set.y.view())?;
    let va = r_squared(predictions(&out.model, validation)?.view(), validation.y.view())?;
    Ok((out.model, tr, va))
}

/// Trains one model per combination and returns every row, best first.
pub fn grid_search(
    space: &CandidateSpace,
    train_set: &Design,
    validation: &Design,
    base: &TrainConfig,
) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for (order, hyper) in space.combinations()?.into_iter().enumerate() {
        let (_, train_r2, val_r2) = fit_and_score(&hyper, train_set, validation, base)?;
        log::info!("{hyper}: train R2 {train_r2:.4}, validation R2 {val_r2:.4}");
        rows.push(GridRow {
            hyperparams: hyper,
            train_r2,
            val_r2,
            order,
        });
    }
    rank(&mut rows);
    Ok(rows)
}

/// The best `k` rows of each hidden structure, structures in declaration order.
pub fn top_per_structure(rows: &[GridRow], k: usize) -> Vec<GridRow> {
    let mut ranked = rows.to_vec();
    rank(&mut ranked);
    let mut structures: Vec<(usize, Vec<usize>)> = Vec::new();
    for r in &ranked {
        let first = ranked
            .iter()
            .filter(|o| o.hyperparams.hidden == r.hyperparams.hidden)
            .map(|o| o.order)
            .min()
            .unwrap_or(r.order);
        if !structures.iter().any(|(_, h)| *h == r.hyperparams.hidden) {
            structures.push((first, r.hyperparams.hidden.clone()));
        }
    }
    structures.sort();
    let mut out = Vec::new();
    for (_, h) in structures {
        let mut group: Vec<GridRow> = ranked.iter().filter(|r| r.hyperparams.hidden == h).cloned().collect();
        group.truncate(k);
        // Table layout lists the better of the pair last.
        group.reverse();
        out.extend(group);
    }
    out
}

pub fn write_grid_csv(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut out = String::from("hidden,loss,activation,alpha_b,alpha_w,train_r2,val_r2\n");
    for r in rows {
        let h = &r.hyperparams;
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{:.6},{:.6}\n",
            h.hidden_label(),
            h.loss_norm,
            h.activation,
            h.alpha_b,
            h.alpha_w,
            r.train_r2,
            r.val_r2
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSpec {
    pub k: usize,
    pub seed: u64,
    /// Measured-sample copies per synthetic sample on each side of a fold.
    pub real_ratio: f64,
    pub transform: TargetTransform,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            real_ratio: 0.1,
            transform: TargetTransform::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    /// Synthetic indices (into the synthetic subset) held out in this fold.
    pub validation_ids: Vec<usize>,
    pub train_r2: f64,
    pub val_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub mean_train_r2: f64,
    pub mean_val_r2: f64,
}

impl CvReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("fold,train_r2,val_r2\n");
        for f in &self.folds {
            out.push_str(&format!("{},{:.6},{:.6}\n", f.fold, f.train_r2, f.val_r2));
        }
        out.push_str(&format!("mean,{:.6},{:.6}\n", self.mean_train_r2, self.mean_val_r2));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Balanced fold assignment of `n` items: fold sizes differ by at most one.
pub(crate) fn fold_ids(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::CrossValidation, 0));
    let mut folds = vec![Vec::new(); k];
    for (pos, id) in order.into_iter().enumerate() {
        folds[pos % k].push(id);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

fn real_copies<'a>(reals: &[&'a Sample], count: usize, ratio: f64) -> Vec<&'a Sample> {
    if reals.is_empty() {
        return Vec::new();
    }
    let slots = ((count as f64 * ratio).round() as usize).max(reals.len());
    (0..slots).map(|i| reals[i % reals.len()]).collect()
}

/// k-fold cross-validation. Synthetic samples are split into `k` near-equal folds;
/// measured samples, when present, are re-dealt for every fold with three (plus
/// duplicates) on the training side and the rest on the validation side.
/// Normalization is refitted on each fold's training side.
pub fn cross_validate(
    samples: &[Sample],
    hyper: &Hyperparams,
    base: &TrainConfig,
    spec: &CvSpec,
) -> Result<CvReport> {
    let synthetic: Vec<&Sample> = samples.iter().filter(|s| s.origin == Origin::Synthetic).collect();
    let real: Vec<&Sample> = samples.iter().filter(|s| s.origin == Origin::Real).collect();
    if spec.k < 2 {
        return Err(Error::invalid("cross-validation needs k >= 2"));
    }
    if synthetic.len() < 2 * spec.k {
        return Err(Error::invalid(format!(
            "{} synthetic samples are too few for {} folds",
            synthetic.len(),
            spec.k
        )));
    }
    if !real.is_empty() && real.len() < REAL_MIN_COUNT {
        return Err(Error::invalid(format!(
            "at least {REAL_MIN_COUNT} measured samples are required, got {}",
            real.len()
        )));
    }

    let folds = fold_ids(synthetic.len(), spec.k, spec.seed);
    let mut out = Vec::with_capacity(spec.k);
    for (f, val_ids) in folds.iter().enumerate() {
        let mut train_side: Vec<&Sample> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, ids)| ids.iter().map(|&i| synthetic[i]))
            .collect();
        let mut val_side: Vec<&Sample> = val_ids.iter().map(|&i| synthetic[i]).collect();
        if !real.is_empty() {
            let mut dealt = real.clone();
            dealt.shuffle(&mut stream(spec.seed, Purpose::CrossValidation, f as u64 + 1));
            let (rt, rv) = dealt.split_at(REAL_TRAIN_COUNT);
            let (nt, nv) = (train_side.len(), val_side.len());
            train_side.extend(real_copies(rt, nt, spec.real_ratio));
            val_side.extend(real_copies(rv, nv, spec.real_ratio));
        }
        let owned: Vec<Sample> = train_side.iter().map(|s| (*s).clone()).collect();
        let stats = fit_norm(&owned)?;
        let tr = Design::new(&train_side, &stats, spec.transform)?;
        let va = Design::new(&val_side, &stats, spec.transform)?;
        let (_, train_r2, val_r2) = fit_and_score(hyper, &tr, &va, base)?;
        log::info!("fold {}: train R2 {train_r2:.4}, validation R2 {val_r2:.4}", f + 1);
        out.push(CvFold {
            fold: f + 1,
            validation_ids: val_ids.clone(),
            train_r2,
            val_r2,
        });
    }
    let k = out.len() as f64;
    Ok(CvReport {
        mean_train_r2: out.iter().map(|f| f.train_r2).sum::<f64>() / k,
        mean_val_r2: out.iter().map(|f| f.val_r2).sum::<f64>() / k,
        folds: out,
    })
}
