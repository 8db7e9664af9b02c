//! Competitive Bi-Langmuir adsorption isotherm for a two-component system.
//!
//! For component `mu` and binding sites `I` and `II`:
//!
//! ```text
//! q_mu(c) = a_I,mu c_mu / (1 + b_I,1 c_1 + b_I,2 c_2) + a_II,mu c_mu / (1 + b_II,1 c_1 + b_II,2 c_2)
//! ```
//!
//! Parameter vectors are always stored in the order
//! `[a_I1, b_I1, a_II1, b_II1, a_I2, b_I2, a_II2, b_II2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concentrations this far below zero are treated as solver undershoot and clamped.
pub const UNDERSHOOT_TOLERANCE: f64 = 1e-12;

/// Names of the eight parameters in storage order.
pub const PARAM_NAMES: [&str; 8] = [
    "a_I1", "b_I1", "a_II1", "b_II1", "a_I2", "b_I2", "a_II2", "b_II2",
];

/// The eight Bi-Langmuir coefficients. All entries are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct IsothermParams([f64; 8]);

impl IsothermParams {
    pub fn new(values: [f64; 8]) -> Result<Self> {
        for (name, v) in PARAM_NAMES.iter().zip(values) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "isotherm parameter {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; 8] = values
            .try_into()
            .map_err(|_| Error::DimensionMismatch {
                expected: 8,
                got: values.len(),
            })?;
        Self::new(arr)
    }

    /// Linear isotherm with retention coefficient `a1` for component 1 and `a2` for
    /// component 2, all placed on site I.
    pub fn linear(a1: f64, a2: f64) -> Result<Self> {
        Self::new([a1, 0.0, 0.0, 0.0, a2, 0.0, 0.0, 0.0])
    }

    pub fn zeros() -> Self {
        Self([0.0; 8])
    }

    pub fn as_array(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }

    /// Retention coefficient of `component` (0 or 1) on `site` (0 = I, 1 = II).
    pub fn a(&self, site: usize, component: usize) -> f64 {
        self.0[4 * component + 2 * site]
    }

    /// Association constant of `component` on `site`.
    pub fn b(&self, site: usize, component: usize) -> f64 {
        self.0[4 * component + 2 * site + 1]
    }

    /// Parameters with the roles of the two components exchanged.
    pub fn swap_components(&self) -> Self {
        let v = self.0;
        Self([v[4], v[5], v[6], v[7], v[0], v[1], v[2], v[3]])
    }

    /// Parameters with the labels of the two binding sites exchanged. The isotherm is
    /// unchanged by this relabeling.
    pub fn swap_sites(&self) -> Self {
        let v = self.0;
        Self([v[2], v[3], v[0], v[1], v[6], v[7], v[4], v[5]])
    }

    /// Representative of the site-relabeling orbit: site I carries the larger
    /// component-1 retention coefficient (ties broken lexicographically on the
    /// remaining site-I entries).
    pub fn site_canonical(&self) -> Self {
        let site = |s: usize| [self.a(s, 0), self.a(s, 1), self.b(s, 0), self.b(s, 1)];
        let (first, second) = (site(0), site(1));
        match first.partial_cmp(&second) {
            Some(std::cmp::Ordering::Less) => self.swap_sites(),
            _ => *self,
        }
    }

    /// Sum of the linear (infinite dilution) retention coefficients per component.
    pub fn henry(&self) -> [f64; 2] {
        [self.a(0, 0) + self.a(1, 0), self.a(0, 1) + self.a(1, 1)]
    }

    /// Stationary-phase amounts, assuming `c` is already validated.
    #[inline]
    pub(crate) fn q_raw(&self, c1: f64, c2: f64) -> [f64; 2] {
        let v = &self.0;
        // Denominators written as 1 + (x + y) so the result is bitwise symmetric
        // under component exchange.
        let d1 = 1.0 + (v[1] * c1 + v[5] * c2);
        let d2 = 1.0 + (v[3] * c1 + v[7] * c2);
        [
            v[0] * c1 / d1 + v[2] * c1 / d2,
            v[4] * c2 / d1 + v[6] * c2 / d2,
        ]
    }

    /// Jacobian `dq_mu / dc_j`, assuming `c` is already validated.
    #[inline]
    pub(crate) fn jacobian_raw(&self, c1: f64, c2: f64) -> [[f64; 2]; 2] {
        let v = &self.0;
        let d1 = 1.0 + (v[1] * c1 + v[5] * c2);
        let d2 = 1.0 + (v[3] * c1 + v[7] * c2);
        let (s1, s2) = (d1 * d1, d2 * d2);
        // Site-wise: d/dc_j [a_mu c_mu / D] = a_mu (delta_mu,j / D - c_mu b_j / D^2)
        let j11 = v[0] * (1.0 / d1 - c1 * v[1] / s1) + v[2] * (1.0 / d2 - c1 * v[3] / s2);
        let j12 = -(v[0] * c1 * v[5] / s1 + v[2] * c1 * v[7] / s2);
        let j21 = -(v[4] * c2 * v[1] / s1 + v[6] * c2 * v[3] / s2);
        let j22 = v[4] * (1.0 / d1 - c2 * v[5] / s1) + v[6] * (1.0 / d2 - c2 * v[7] / s2);
        [[j11, j12], [j21, j22]]
    }

    /// Stationary-phase amounts `q(c)`.
    pub fn eval(&self, c: Concentration2) -> Result<Concentration2> {
        let c = c.validated()?;
        let [q1, q2] = self.q_raw(c.c1, c.c2);
        Ok(Concentration2 { c1: q1, c2: q2 })
    }

    /// Exact partial derivatives `dq_mu/dc_j` as a row-major 2x2 matrix.
    pub fn jacobian(&self, c: Concentration2) -> Result<[[f64; 2]; 2]> {
        let c = c.validated()?;
        Ok(self.jacobian_raw(c.c1, c.c2))
    }
}

impl TryFrom<[f64; 8]> for IsothermParams {
    type Error = Error;

    fn try_from(value: [f64; 8]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<IsothermParams> for [f64; 8] {
    fn from(p: IsothermParams) -> Self {
        p.0
    }
}

/// Mobile-phase (or stationary-phase) concentration pair in mM.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Concentration2 {
    pub c1: f64,
    pub c2: f64,
}

impl Concentration2 {
    pub const ZERO: Self = Self { c1: 0.0, c2: 0.0 };

    pub fn new(c1: f64, c2: f64) -> Self {
        Self { c1, c2 }
    }

    /// Clamps tiny negative undershoot to zero and rejects anything else invalid.
    pub fn validated(self) -> Result<Self> {
        let fix = |v: f64, name: &str| -> Result<f64> {
            if !v.is_finite() {
                Err(Error::invalid(format!("concentration {name} is not finite")))
            } else if v < -UNDERSHOOT_TOLERANCE {
                Err(Error::invalid(format!("concentration {name} = {v} is negative")))
            } else {
                Ok(v.max(0.0))
            }
        };
        Ok(Self {
            c1: fix(self.c1, "c1")?,
            c2: fix(self.c2, "c2")?,
        })
    }

    pub fn swapped(self) -> Self {
        Self {
            c1: self.c2,
            c2: self.c1,
        }
    }
}
