//! Synthetic supervised data: random isotherms and injections, simulated outlet
//! responses, regridding of measured chromatograms, and dataset files.

mod noise;
mod norm;
mod split;

pub use noise::{augment_shift, corrupt, corrupt_all, shift_response, NoiseKind, NoiseSpec};
pub use norm::{fit_norm, normalize, NormStats};
pub use split::{split, SampleRef, SplitManifest, SplitSpec};

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::column::{
    self, auto_horizon, total_response, Chromatogram, ColumnConfig, DetectorSpec,
    InjectionProfile,
};
use crate::error::{Error, Result};
use crate::interp::MonotoneHermite;
use crate::isotherm::{Concentration2, IsothermParams};
use crate::rng::{stream, Purpose};

/// Upper end of the uniform prior on every isotherm parameter.
pub const TARGET_UPPER: f64 = 100.0;
/// Upper end of the uniform prior on injected concentrations (mM).
pub const INJECTION_UPPER: f64 = 30.0;
/// Number of draws used to pick a common horizon for a dataset.
pub const PILOT_DRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Real,
}

/// One `(x, y)` pair. The model input is `(response, injection)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub response: Vec<f64>,
    pub injection: [f64; 2],
    pub target: Option<IsothermParams>,
    pub origin: Origin,
}

impl Sample {
    /// Feature vector `(r_1, .., r_NT, hbar_1, hbar_2)`.
    pub fn features(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.response.len() + 2);
        x.extend_from_slice(&self.response);
        x.extend_from_slice(&self.injection);
        x
    }

    pub fn n_features(&self) -> usize {
        self.response.len() + 2
    }
}

pub fn sample_target<R: Rng + ?Sized>(rng: &mut R) -> IsothermParams {
    let values: [f64; 8] = std::array::from_fn(|_| rng.random_range(0.0..TARGET_UPPER));
    IsothermParams::new(values).expect("uniform draws are nonnegative")
}

pub fn sample_injection<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    [
        rng.random_range(0.0..INJECTION_UPPER),
        rng.random_range(0.0..INJECTION_UPPER),
    ]
}

/// Target and injection of synthetic sample `index` under `seed`.
pub fn draw(seed: u64, index: usize) -> (IsothermParams, [f64; 2]) {
    let mut rng = stream(seed, Purpose::Sampling, index as u64);
    let target = sample_target(&mut rng);
    let injection = sample_injection(&mut rng);
    (target, injection)
}

/// Detector response of one simulated injection. `column.horizon` must be set.
pub fn simulate_response(
    column: &ColumnConfig,
    detector: &DetectorSpec,
    params: &IsothermParams,
    injection: [f64; 2],
) -> Result<Vec<f64>> {
    let profile = InjectionProfile::new(injection[0], injection[1], column.injection_duration)?;
    let outlet = column::simulate(column, params, &profile, Concentration2::ZERO)?;
    Ok(total_response(&outlet, detector)?.response)
}

/// Horizon used for every sample of a dataset: the explicit one, or the largest
/// automatic horizon over a pilot batch of prior draws.
pub fn resolve_horizon(column: &ColumnConfig, seed: u64) -> Result<f64> {
    if let Some(t) = column.horizon {
        return Ok(t);
    }
    let horizons: Vec<f64> = (0..PILOT_DRAWS)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Purpose::Pilot, k as u64);
            let params = sample_target(&mut rng);
            let inj = sample_injection(&mut rng);
            let profile = InjectionProfile::new(inj[0], inj[1], column.injection_duration)?;
            auto_horizon(column, &params, &profile, Concentration2::ZERO)
        })
        .collect::<Result<_>>()?;
    Ok(horizons.into_iter().fold(0.0, f64::max))
}

/// Dataset description stored next to the sample matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub column: ColumnConfig,
    pub detector: DetectorSpec,
    pub seed: u64,
    pub n_time_points: usize,
    pub horizon: f64,
    pub n_samples: usize,
    /// Indices of samples that come from measurements rather than simulation.
    #[serde(default)]
    pub real_indices: Vec<usize>,
    /// Per-sample time shifts applied by augmentation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

pub const META_FILE: &str = "meta.json";
pub const SAMPLES_FILE: &str = "samples.csv";

/// Simulates `n` synthetic samples. Sample `k` uses its own random stream, so the
/// result does not depend on the number of worker threads.
pub fn generate(
    n: usize,
    column: &ColumnConfig,
    detector: &DetectorSpec,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    column.validate()?;
    detector.validate()?;
    let horizon = resolve_horizon(column, seed)?;
    let column = column.with_horizon(horizon);
    let samples = (0..n)
        .into_par_iter()
        .map(|k| {
            let (target, injection) = draw(seed, k);
            let response = simulate_response(&column, detector, &target, injection).map_err(
                |e| Error::Sample {
                    index: k,
                    source: Box::new(e),
                },
            )?;
            Ok(Sample {
                response,
                injection,
                target: Some(target),
                origin: Origin::Synthetic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta: DatasetMeta {
            n_time_points: column.n_time_points,
            horizon,
            column,
            detector: *detector,
            seed,
            n_samples: n,
            real_indices: Vec::new(),
            shifts: None,
        },
        samples,
    })
}

/// Monotone Hermite interpolant of `series` on `target_grid`; zero outside the span.
pub fn regrid(series: &Chromatogram, target_grid: &[f64]) -> Result<Chromatogram> {
    if target_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("target grid must be strictly increasing"));
    }
    let interp = MonotoneHermite::new(&series.time, &series.response)?;
    let response = target_grid.iter().map(|&t| interp.eval(t)).collect();
    Ok(Chromatogram {
        time: target_grid.to_vec(),
        response,
    })
}

/// Real sample from a measured chromatogram, regridded onto the dataset time grid.
pub fn real_sample(
    measured: &Chromatogram,
    injection: [f64; 2],
    target: Option<IsothermParams>,
    grid: &[f64],
) -> Result<Sample> {
    let on_grid = if measured.time == grid {
        measured.clone()
    } else {
        regrid(measured, grid)?
    };
    if injection.iter().any(|h| !h.is_finite() || *h < 0.0) {
        return Err(Error::invalid("injection must be >= 0"));
    }
    Ok(Sample {
        response: on_grid.response,
        injection,
        target,
        origin: Origin::Real,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_grid(&self) -> Vec<f64> {
        self.meta.column.output_grid(self.meta.horizon)
    }

    fn header(n_t: usize) -> String {
        let mut cols: Vec<String> = (1..=n_t).map(|i| format!("r_{i}")).collect();
        cols.push("h_1".into());
        cols.push("h_2".into());
        cols.extend((1..=8).map(|j| format!("y_{j}")));
        cols.join(",")
    }

    /// Writes `meta.json` and `samples.csv` into `dir` (created if missing). Each row is
    /// `r_1..r_NT, h_1, h_2, y_1..y_8`; missing targets are left empty.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join(META_FILE);
        let mut meta = self.meta.clone();
        meta.n_samples = self.samples.len();
        meta.real_indices = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.origin == Origin::Real)
            .map(|(i, _)| i)
            .collect();
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;

        let path = dir.join(SAMPLES_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(w, "{}", Self::header(self.meta.n_time_points)).map_err(io)?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            for v in s.response.iter().chain(&s.injection) {
                line.push_str(&format!("{v:e},"));
            }
            match &s.target {
                Some(y) => {
                    let cells: Vec<String> = y.as_array().iter().map(|v| format!("{v:e}")).collect();
                    line.push_str(&cells.join(","));
                }
                None => line.push_str(",,,,,,,"),
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e))?;
        meta.column.validate()?;

        let path = dir.join(SAMPLES_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let n_t = meta.n_time_points;
        let width = n_t + 2 + 8;
        let mut samples = Vec::with_capacity(meta.n_samples);
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(&path, "empty file"))?
            .map_err(|e| Error::io(&path, e))?;
        if header.trim_end() != Self::header(n_t) {
            return Err(Error::format(&path, "unexpected header"));
        }
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim_end().split(',').collect();
            if cells.len() != width {
                return Err(Error::format(
                    &path,
                    format!("row {}: expected {width} fields, got {}", row + 1, cells.len()),
                ));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::format(&path, format!("row {}: {e}", row + 1)))
            };
            let response = cells[..n_t].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let injection = [num(cells[n_t])?, num(cells[n_t + 1])?];
            let target = if cells[n_t + 2..].iter().all(|s| s.trim().is_empty()) {
                None
            } else {
                let y = cells[n_t + 2..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
                Some(IsothermParams::from_slice(&y)?)
            };
            let origin = if meta.real_indices.binary_search(&samples.len()).is_ok() {
                Origin::Real
            } else {
                Origin::Synthetic
            };
            samples.push(Sample {
                response,
                injection,
                target,
                origin,
            });
        }
        if samples.len() != meta.n_samples {
            return Err(Error::format(
                &path,
                format!("meta lists {} samples, file has {}", meta.n_samples, samples.len()),
            ));
        }
        Ok(Self { meta, samples })
    }
}
