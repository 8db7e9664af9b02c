//! Feed-forward network mapping normalized `(response, injection)` vectors to the
//! eight isotherm parameters.
//!
//! Hidden layers use a sigmoid or tanh activation; the output layer applies a
//! sigmoid scaled by 100 so every estimate lies inside the prior range `(0, 100)`.

mod data;
mod loss;
mod metrics;
mod model;
mod search;
mod train;

pub use data::{predict, Design, TargetTransform};
pub use loss::{gradients, loss, Gradients, LossParts};
pub use metrics::{per_entry_r_squared, r_squared};
pub use model::{FnnModel, Layer, ModelFile, OUTPUT_SCALE};
pub use search::{
    cross_validate, grid_search, top_per_structure, write_grid_csv, CandidateSpace, CvFold,
    CvReport, CvSpec, GridRow, Hyperparams,
};
pub use train::{
    train, write_history_csv, write_percentiles_csv, EpochRecord, Optimizer, TrainConfig,
    TrainOutcome, WeightPercentiles,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Hidden-layer activation. ReLU is deliberately absent: units that stop firing
/// never recover under gradient training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a = g(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidInput(format!(
                "unknown activation `{other}` (expected sigmoid or tanh)"
            ))),
        }
    }
}

/// Norm used for both the data term and the regularization penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossNorm {
    L1,
    L2,
}

impl LossNorm {
    pub fn name(self) -> &'static str {
        match self {
            LossNorm::L1 => "L1",
            LossNorm::L2 => "L2",
        }
    }
}

impl fmt::Display for LossNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "L1" | "MAE" => Ok(LossNorm::L1),
            "L2" | "MSE" => Ok(LossNorm::L2),
            other => Err(Error::InvalidInput(format!("unknown loss norm `{other}`"))),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
