//! Measurement-error scenarios and time-shift augmentation.
//!
//! Multiplicative scenarios replace each response entry `x_i` by `x_i (1 + e_i)`;
//! the time lag scenario shifts the response by a uniform draw from `{-m, .., m}`
//! with zero fill. The two injection entries are never touched.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Dataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Poisson { lambda: f64, divisor: f64 },
    TimeShift { max_shift: u32 },
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseKind::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            NoiseKind::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            NoiseKind::Poisson { lambda, divisor } => {
                lambda.is_finite() && lambda > 0.0 && divisor.is_finite() && divisor > 0.0
            }
            NoiseKind::TimeShift { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid noise parameters: {self}")))
        }
    }

    /// The four scenarios used for robustness reports.
    pub fn defaults() -> [NoiseKind; 4] {
        [
            NoiseKind::Normal { mean: 0.04, std: 0.1 },
            NoiseKind::Uniform { lo: -0.2, hi: 0.1 },
            NoiseKind::Poisson { lambda: 5.0, divisor: 100.0 },
            NoiseKind::TimeShift { max_shift: 1 },
        ]
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Normal { mean, std } => write!(f, "normal:{mean}:{std}"),
            NoiseKind::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            NoiseKind::Poisson { lambda, divisor } => write!(f, "poisson:{lambda}:{divisor}"),
            NoiseKind::TimeShift { max_shift } => write!(f, "shift:{max_shift}"),
        }
    }
}

/// Parses `normal:MEAN:STD`, `uniform:LO:HI`, `poisson:LAMBDA:DIVISOR` or `shift:M`.
impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::invalid(format!("noise spec `{s}` is missing a field")))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("noise spec `{s}`: {e}")))
        };
        let expect = |n: usize| {
            if parts.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(format!("noise spec `{s}` expects {} fields", n - 1)))
            }
        };
        let kind = match parts[0] {
            "normal" => {
                expect(3)?;
                NoiseKind::Normal { mean: num(1)?, std: num(2)? }
            }
            "uniform" => {
                expect(3)?;
                NoiseKind::Uniform { lo: num(1)?, hi: num(2)? }
            }
            "poisson" => {
                expect(3)?;
                NoiseKind::Poisson { lambda: num(1)?, divisor: num(2)? }
            }
            "shift" => {
                expect(2)?;
                let m: u32 = parts[1]
                    .parse()
                    .map_err(|e| Error::invalid(format!("noise spec `{s}`: {e}")))?;
                NoiseKind::TimeShift { max_shift: m }
            }
            other => return Err(Error::invalid(format!("unknown noise kind `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

/// Shifts `response` by `tau` entries (positive = later), filling with zeros.
pub fn shift_response(response: &[f64], tau: i64) -> Vec<f64> {
    let n = response.len() as i64;
    (0..n)
        .map(|i| {
            let src = i - tau;
            if (0..n).contains(&src) {
                response[src as usize]
            } else {
                0.0
            }
        })
        .collect()
}

fn draw_shift<R: Rng + ?Sized>(rng: &mut R, m: u32) -> i64 {
    let m = m as i64;
    rng.random_range(-m..=m)
}

/// Applies one draw of `kind` to the response block of `sample`.
pub fn corrupt<R: Rng + ?Sized>(sample: &Sample, kind: &NoiseKind, rng: &mut R) -> Result<Sample> {
    kind.validate()?;
    let response = match *kind {
        NoiseKind::Normal { mean, std } => {
            let dist = Normal::new(mean, std).map_err(|e| Error::invalid(e.to_string()))?;
            sample.response.iter().map(|x| x * (1.0 + dist.sample(rng))).collect()
        }
        NoiseKind::Uniform { lo, hi } => sample
            .response
            .iter()
            .map(|x| {
                let e = if lo == hi { lo } else { rng.random_range(lo..hi) };
                x * (1.0 + e)
            })
            .collect(),
        NoiseKind::Poisson { lambda, divisor } => {
            let dist = Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?;
            sample
                .response
                .iter()
                .map(|x| {
                    let k: f64 = dist.sample(rng);
                    x * (1.0 + k / divisor)
                })
                .collect()
        }
        NoiseKind::TimeShift { max_shift } => {
            shift_response(&sample.response, draw_shift(rng, max_shift))
        }
    };
    Ok(Sample {
        response,
        ..sample.clone()
    })
}

/// Corrupts every sample, sample `k` drawing from its own stream of `spec.seed`.
pub fn corrupt_all(samples: &[Sample], spec: &NoiseSpec) -> Result<Vec<Sample>> {
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| corrupt(s, &spec.kind, &mut stream(spec.seed, Purpose::Noise, k as u64)))
        .collect()
}

/// Shifts every synthetic response once by an independent uniform lag in
/// `{-m, .., m}`. The applied lags are recorded in the metadata.
pub fn augment_shift(dataset: &Dataset, max_shift: u32, seed: u64) -> Dataset {
    let mut shifts = Vec::with_capacity(dataset.len());
    let samples = dataset
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if s.origin == Origin::Real || max_shift == 0 {
                shifts.push(0);
                return s.clone();
            }
            let tau = draw_shift(&mut stream(seed, Purpose::Augment, k as u64), max_shift);
            shifts.push(tau);
            Sample {
                response: shift_response(&s.response, tau),
                ..s.clone()
            }
        })
        .collect();
    let mut meta = dataset.meta.clone();
    meta.shifts = Some(shifts);
    Dataset { meta, samples }
}
