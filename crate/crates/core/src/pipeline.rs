//! Dataset-level training and evaluation shared by the command-line tool and the
//! end-to-end tests.

use serde::{Deserialize, Serialize};

use crate::datagen::{
    augment_shift, corrupt_all, fit_norm, split, Dataset, NoiseSpec, NormStats, Origin, Sample,
    SplitManifest, SplitSpec,
};
use crate::error::{Error, Result};
use crate::fnn::{
    per_entry_r_squared, r_squared, train, Design, FnnModel, Hyperparams, TargetTransform,
    TrainConfig, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub split: SplitSpec,
    pub hyperparams: Hyperparams,
    pub train: TrainConfig,
    #[serde(default)]
    pub transform: TargetTransform,
    /// Maximum lag of the shift augmentation; 0 disables it.
    #[serde(default)]
    pub augment_shift: u32,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: FnnModel,
    pub stats: NormStats,
    pub manifest: SplitManifest,
    pub outcome: TrainOutcome,
    pub transform: TargetTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub overall: f64,
    pub per_entry: Vec<f64>,
    pub n_samples: usize,
}

/// Synthetic and measured samples of a dataset, each in stored order.
pub fn partition(samples: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    samples.iter().cloned().partition(|s| s.origin == Origin::Synthetic)
}

/// Augments (optionally), splits, fits normalization on the training side only, and
/// trains one model.
pub fn train_on_dataset(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Trained> {
    let source = if cfg.augment_shift > 0 {
        augment_shift(dataset, cfg.augment_shift, cfg.split.seed)
    } else {
        dataset.clone()
    };
    let (synthetic, real) = partition(&source.samples);
    let manifest = split(synthetic.len(), real.len(), &cfg.split)?;
    let train_side = SplitManifest::resolve(&manifest.train, &synthetic, &real)?;
    let val_side = SplitManifest::resolve(&manifest.validation, &synthetic, &real)?;
    let owned: Vec<Sample> = train_side.iter().map(|s| (*s).clone()).collect();
    let stats = fit_norm(&owned)?;
    let tr = Design::new(&train_side, &stats, cfg.transform)?;
    let va = Design::new(&val_side, &stats, cfg.transform)?;
    let sizes = cfg.hyperparams.layer_sizes(tr.x.ncols(), tr.y.ncols());
    let model = FnnModel::new(&sizes, cfg.hyperparams.activation, cfg.train.seed)?;
    let train_cfg = cfg.hyperparams.train_config(&cfg.train);
    let outcome = train(model, &tr, &va, &train_cfg)?;
    Ok(Trained {
        model: outcome.model.clone(),
        stats,
        manifest,
        outcome,
        transform: cfg.transform,
    })
}

/// Test-side samples of `dataset` under `manifest`.
pub fn test_samples(dataset: &Dataset, manifest: &SplitManifest) -> Result<Vec<Sample>> {
    let (synthetic, real) = partition(&dataset.samples);
    Ok(SplitManifest::resolve(&manifest.test, &synthetic, &real)?
        .into_iter()
        .cloned()
        .collect())
}

/// R² of `model` on `samples`, after optional corruption with `noise`.
pub fn evaluate(
    model: &FnnModel,
    stats: &NormStats,
    transform: TargetTransform,
    samples: &[Sample],
    noise: Option<&NoiseSpec>,
) -> Result<Evaluation> {
    if stats.dim() != model.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_inputs(),
            got: stats.dim(),
        });
    }
    let corrupted;
    let samples = match noise {
        Some(spec) => {
            corrupted = corrupt_all(samples, spec)?;
            &corrupted[..]
        }
        None => samples,
    };
    let refs: Vec<&Sample> = samples.iter().collect();
    let d = Design::new(&refs, stats, transform)?;
    let pred = model.forward_batch(d.x.view())?;
    Ok(Evaluation {
        overall: r_squared(pred.view(), d.y.view())?,
        per_entry: per_entry_r_squared(pred.view(), d.y.view())?,
        n_samples: d.len(),
    })
}
