use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::FnnModel;
use crate::datagen::{NormStats, Sample};
use crate::error::{Error, Result};
use crate::isotherm::IsothermParams;

/// How stored targets are presented to the network.
///
/// The bi-Langmuir isotherm is unchanged when the two binding sites swap labels,
/// so a chromatogram determines the parameter vector only up to that swap. With
/// `SiteCanonical` each target is replaced by the member of its pair whose site I
/// has the larger component-1 retention, which makes the regression well posed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetTransform {
    #[default]
    Raw,
    SiteCanonical,
}

impl TargetTransform {
    pub fn apply(self, y: &IsothermParams) -> IsothermParams {
        match self {
            TargetTransform::Raw => *y,
            TargetTransform::SiteCanonical => y.site_canonical(),
        }
    }
}

impl std::str::FromStr for TargetTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(TargetTransform::Raw),
            "site-canonical" | "canonical" => Ok(TargetTransform::SiteCanonical),
            other => Err(Error::InvalidInput(format!("unknown target transform `{other}`"))),
        }
    }
}

/// Normalized inputs and (transformed) targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Design {
    pub fn new(samples: &[&Sample], stats: &NormStats, transform: TargetTransform) -> Result<Self> {
        let x = Self::inputs(samples, stats)?;
        let mut y = Array2::zeros((samples.len(), 8));
        for (k, s) in samples.iter().enumerate() {
            let t = s
                .target
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("sample {k} has no target")))?;
            for (j, v) in transform.apply(t).as_array().iter().enumerate() {
                y[[k, j]] = *v;
            }
        }
        Ok(Self { x, y })
    }

    /// Normalized feature matrix only.
    pub fn inputs(samples: &[&Sample], stats: &NormStats) -> Result<Array2<f64>> {
        let dim = stats.dim();
        let mut x = Array2::zeros((samples.len(), dim));
        for (k, s) in samples.iter().enumerate() {
            let z = stats.apply(&s.features())?;
            x.row_mut(k).assign(&ndarray::ArrayView1::from(&z[..]));
        }
        Ok(x)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Rows `idx` in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(ndarray::Axis(0), idx),
            y: self.y.select(ndarray::Axis(0), idx),
        }
    }
}

/// Normalizes a raw sample with `stats` and evaluates the network.
pub fn predict(model: &FnnModel, stats: Option<&NormStats>, sample: &Sample) -> Result<IsothermParams> {
    let stats = stats.ok_or_else(|| Error::invalid("normalization statistics are required"))?;
    if stats.dim() != model.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_inputs(),
            got: stats.dim(),
        });
    }
    let z = stats.apply(&sample.features())?;
    IsothermParams::from_slice(&model.forward(&z)?)
}
