use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Sample;
use crate::error::{Error, Result};

/// Per-feature mean and population standard deviation of the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Statistics over the feature vectors of `training`. Constant features get
/// `std = 0` exactly.
pub fn fit_norm(training: &[Sample]) -> Result<NormStats> {
    let rows: Vec<Vec<f64>> = training.iter().map(Sample::features).collect();
    NormStats::fit(&rows)
}

/// `sample` with every feature standardized; see [`NormStats::apply`].
pub fn normalize(sample: &Sample, stats: &NormStats) -> Result<Sample> {
    let z = stats.apply(&sample.features())?;
    let n_t = sample.response.len();
    Ok(Sample {
        response: z[..n_t].to_vec(),
        injection: [z[n_t], z[n_t + 1]],
        ..sample.clone()
    })
}

impl NormStats {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot fit normalization on an empty set"))?;
        let dim = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for i in 0..dim {
            if rows.iter().all(|r| r[i] == first[i]) {
                mean[i] = first[i];
                std[i] = 0.0;
            } else {
                std[i] = (std[i] / n).sqrt();
            }
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, or `x - mean` where `std == 0`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { v - m })
            .collect())
    }

    /// SHA-256 over the little-endian bytes of all statistics.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self.mean.iter().chain(&self.std) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("stats serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if stats.mean.len() != stats.std.len() {
            return Err(Error::format(path, "mean and std lengths differ"));
        }
        Ok(stats)
    }
}
