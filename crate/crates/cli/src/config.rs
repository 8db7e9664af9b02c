use std::path::Path;

use anyhow::{Context, Result};
use chromfit::column::{ColumnConfig, DetectorSpec};
use chromfit::datagen::SplitSpec;
use chromfit::fnn::{Activation, CandidateSpace, Hyperparams, LossNorm, TargetTransform, TrainConfig};
use chromfit::variational::VariationalConfig;
use serde::{Deserialize, Serialize};

use crate::Invalid;

/// Everything a run can be configured with. Every section is optional in the file;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub column: ColumnConfig,
    pub detector: DetectorSpec,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub grid: CandidateSpace,
    pub variational: VariationalConfig,
    /// Column used while fitting; coarser than data generation by default.
    pub fit_column: ColumnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            column: ColumnConfig::default(),
            detector: DetectorSpec::default(),
            split: SplitSpec::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            grid: CandidateSpace::default(),
            variational: VariationalConfig::default(),
            fit_column: ColumnConfig {
                n_cells: 50,
                ..ColumnConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub transform: TargetTransform,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 48],
            activation: Activation::Sigmoid,
            transform: TargetTransform::SiteCanonical,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<()> {
        self.column.validate()?;
        self.fit_column.validate()?;
        self.detector.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        self.variational.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Invalid("hidden layers must have at least one node".into()).into());
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            hidden: self.model.hidden.clone(),
            loss_norm: self.train.loss_norm,
            activation: self.model.activation,
            alpha_b: self.train.alpha_b,
            alpha_w: self.train.alpha_w,
        }
    }

    /// Writes the effective configuration next to a command's outputs.
    pub fn echo(&self, dir: &Path, command: &str) -> Result<()> {
        let text = format!(
            "# effective configuration of `chromfit {command}`\n{}",
            toml::to_string(self).context("serializing config")?
        );
        let path = dir.join("config.toml");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Command-line overrides for the training section.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// Hidden layer sizes, e.g. `64,48`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<Activation>,
    /// `L1` or `L2`.
    #[arg(long)]
    pub loss: Option<LossNorm>,
    #[arg(long)]
    pub alpha_w: Option<f64>,
    #[arg(long)]
    pub alpha_b: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Use Adam instead of plain gradient descent.
    #[arg(long)]
    pub adam: bool,
    /// `raw` or `site-canonical`.
    #[arg(long)]
    pub target_transform: Option<TargetTransform>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(h) = &self.hidden {
            cfg.model.hidden = h.clone();
        }
        if let Some(a) = self.activation {
            cfg.model.activation = a;
        }
        if let Some(t) = self.target_transform {
            cfg.model.transform = t;
        }
        let t = &mut cfg.train;
        if let Some(v) = self.loss {
            t.loss_norm = v;
        }
        if let Some(v) = self.alpha_w {
            t.alpha_w = v;
        }
        if let Some(v) = self.alpha_b {
            t.alpha_b = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.patience {
            t.patience = Some(v);
        }
        if self.adam {
            t.optimizer = chromfit::fnn::Optimizer::adam();
        }
    }
}
