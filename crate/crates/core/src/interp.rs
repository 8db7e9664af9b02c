//! Shape-preserving piecewise cubic Hermite interpolation.
//!
//! Knot derivatives come from the local four-point Lagrange polynomial, which makes
//! the interpolant exact for cubic data. A Hyman-type filter then clips each
//! derivative into the monotonicity box `[0, 3 min(|s_left|, |s_right|)]` (signed with
//! the neighbouring secants) and zeroes it at local extrema, so monotone data yields a
//! monotone interpolant and peaks do not overshoot.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneHermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneHermite {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::invalid("interpolation needs at least two knots"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("knots and values must be finite"));
        }
        let d = limited_slopes(x, y);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.d
    }

    /// Value at `t`; zero outside the knot span.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if !(t >= self.x[0] && t <= self.x[n - 1]) {
            return 0.0;
        }
        let k = (self.x.partition_point(|&xk| xk <= t)).clamp(1, n - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// Derivative at `x[i]` of the Lagrange polynomial through the knots `stencil`.
fn lagrange_derivative(x: &[f64], y: &[f64], stencil: std::ops::Range<usize>, i: usize) -> f64 {
    let xi = x[i];
    let mut total = 0.0;
    for j in stencil.clone() {
        let weight = if j == i {
            stencil.clone().filter(|&k| k != i).map(|k| 1.0 / (xi - x[k])).sum()
        } else {
            let mut w = 1.0 / (x[j] - xi);
            for k in stencil.clone().filter(|&k| k != i && k != j) {
                w *= (xi - x[k]) / (x[j] - x[k]);
            }
            w
        };
        total += weight * y[j];
    }
    total
}

fn limited_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let secant: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
        .collect();
    if n == 2 {
        return vec![secant[0]; 2];
    }
    let width = n.min(4);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(1).min(n - width);
            let raw = lagrange_derivative(x, y, start..start + width, i);
            let left = (i > 0).then(|| secant[i - 1]);
            let right = (i < n - 1).then(|| secant[i]);
            let (sign, bound) = match (left, right) {
                (Some(l), Some(r)) => {
                    if l * r <= 0.0 {
                        return 0.0;
                    }
                    (l.signum(), 3.0 * l.abs().min(r.abs()))
                }
                (Some(s), None) | (None, Some(s)) => {
                    if s == 0.0 {
                        return 0.0;
                    }
                    (s.signum(), 3.0 * s.abs())
                }
                (None, None) => unreachable!(),
            };
            sign * (sign * raw).clamp(0.0, bound)
        })
        .collect()
}
