//! Train/validation/test partition with optional up-weighting of measured samples.
//!
//! Test samples come from synthetic data only. Of the rest, a fixed fraction goes to
//! training and the remainder to validation. Measured samples are split three to
//! training and the others to validation, then repeated in each set until they make
//! up `real_ratio` of that set's synthetic count.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Measured samples placed in the training set; the rest go to validation.
pub const REAL_TRAIN_COUNT: usize = 3;
/// Minimum number of measured samples when any are supplied.
pub const REAL_MIN_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub train_fraction_of_rest: f64,
    pub seed: u64,
    /// Target count of measured-sample slots per synthetic sample in a set.
    pub real_ratio: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            train_fraction_of_rest: 0.75,
            seed: 0,
            real_ratio: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.test_fraction) || !open(self.train_fraction_of_rest) {
            return Err(Error::invalid("split fractions must lie in (0, 1)"));
        }
        if !(self.real_ratio > 0.0 && self.real_ratio.is_finite()) {
            return Err(Error::invalid("real_ratio must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRef {
    Synthetic(usize),
    Real(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<SampleRef>,
    pub validation: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

/// Repeats `reals` round-robin to `max(round(ratio * n_synthetic), reals.len())` slots.
pub(crate) fn real_slots(reals: &[usize], n_synthetic: usize, ratio: f64) -> Vec<SampleRef> {
    if reals.is_empty() {
        return Vec::new();
    }
    let slots = ((n_synthetic as f64 * ratio).round() as usize).max(reals.len());
    (0..slots).map(|k| SampleRef::Real(reals[k % reals.len()])).collect()
}

/// Partitions `n_synthetic` simulated samples and `n_real` measured ones.
pub fn split(n_synthetic: usize, n_real: usize, spec: &SplitSpec) -> Result<SplitManifest> {
    spec.validate()?;
    if n_real > 0 && n_real < REAL_MIN_COUNT {
        return Err(Error::invalid(format!(
            "at least {REAL_MIN_COUNT} measured samples are required, got {n_real}"
        )));
    }
    if n_synthetic < 3 {
        return Err(Error::invalid("need at least three synthetic samples to split"));
    }
    let mut rng = stream(spec.seed, Purpose::Splitting, 0);
    let mut order: Vec<usize> = (0..n_synthetic).collect();
    order.shuffle(&mut rng);
    let n_test = ((spec.test_fraction * n_synthetic as f64).round() as usize).clamp(1, n_synthetic - 2);
    let rest = n_synthetic - n_test;
    let n_train = ((spec.train_fraction_of_rest * rest as f64).round() as usize).clamp(1, rest - 1);

    let synth = |ids: &[usize]| {
        let mut v: Vec<usize> = ids.to_vec();
        v.sort_unstable();
        v.into_iter().map(SampleRef::Synthetic).collect::<Vec<_>>()
    };
    let test = synth(&order[..n_test]);
    let mut train = synth(&order[n_test..n_test + n_train]);
    let mut validation = synth(&order[n_test + n_train..]);

    if n_real > 0 {
        let mut reals: Vec<usize> = (0..n_real).collect();
        reals.shuffle(&mut rng);
        let (rt, rv) = reals.split_at(REAL_TRAIN_COUNT);
        let n_train_syn = train.len();
        let n_val_syn = validation.len();
        train.extend(real_slots(rt, n_train_syn, spec.real_ratio));
        validation.extend(real_slots(rv, n_val_syn, spec.real_ratio));
    }
    Ok(SplitManifest {
        train,
        validation,
        test,
    })
}

impl SplitManifest {
    pub fn resolve<'a>(
        refs: &[SampleRef],
        synthetic: &'a [Sample],
        real: &'a [Sample],
    ) -> Result<Vec<&'a Sample>> {
        refs.iter()
            .map(|r| match *r {
                SampleRef::Synthetic(i) => synthetic.get(i),
                SampleRef::Real(j) => real.get(j),
            }
            .ok_or_else(|| Error::invalid(format!("split refers to missing sample {r:?}"))))
            .collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}
