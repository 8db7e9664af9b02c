use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};

fn check(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if target.nrows() < 2 {
        return Err(Error::invalid("R² needs at least two samples"));
    }
    Ok(())
}

/// `1 - sum_k |yhat_k - y_k|^2 / sum_k |ybar - y_k|^2` with `|.|^2` the mean square
/// over a row and `ybar` the column-wise target mean.
pub fn r_squared(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check(pred, target)?;
    let mean = target.mean_axis(Axis(0)).expect("non-empty");
    let residual: f64 = (&pred - &target).iter().map(|d| d * d).sum();
    let spread: f64 = (&target - &mean.insert_axis(Axis(0))).iter().map(|d| d * d).sum();
    if spread == 0.0 {
        return Err(Error::invalid("R² undefined: all targets identical"));
    }
    Ok(1.0 - residual / spread)
}

/// R² of every output column on its own.
pub fn per_entry_r_squared(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Vec<f64>> {
    check(pred, target)?;
    (0..target.ncols())
        .map(|j| {
            let p = pred.column(j).insert_axis(Axis(1));
            let t = target.column(j).insert_axis(Axis(1));
            r_squared(p, t)
        })
        .collect()
}
