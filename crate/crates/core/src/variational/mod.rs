//! Injection-weighted, first-moment-regularized least squares for the isotherm
//! parameters, minimized with a box-constrained Nelder–Mead simplex.
//!
//! ```text
//! J(y) = sum_s w_s sum_i (r_s,i(y) - r_obs_s,i)^2
//!      + alpha sum_s w_s (sum_i t_i (r_s,i(y) - r_obs_s,i))^2,   w_s = 1 / sum_i r_obs_s,i^2
//! ```

mod simplex;

pub use simplex::{minimize, SimplexOptions, SimplexResult};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::column::{self, total_response, Chromatogram, ColumnConfig, DetectorSpec, InjectionProfile};
use crate::error::{Error, Result};
use crate::interp::MonotoneHermite;
use crate::isotherm::{Concentration2, IsothermParams};

/// One measured elution profile with the injection that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub chromatogram: Chromatogram,
    pub injection: InjectionProfile,
    weight: f64,
}

impl Observation {
    pub fn new(chromatogram: Chromatogram, injection: InjectionProfile) -> Result<Self> {
        injection.validate()?;
        let weight = weight_normalize(std::slice::from_ref(&chromatogram))?[0];
        Ok(Self {
            chromatogram,
            injection,
            weight,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// `w_s = 1 / SS_s`, so that `w_s SS_s = 1` for every observation.
pub fn weight_normalize(chromatograms: &[Chromatogram]) -> Result<Vec<f64>> {
    chromatograms
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let ss = c.sum_of_squares();
            if ss > 0.0 && ss.is_finite() {
                Ok(1.0 / ss)
            } else {
                Err(Error::invalid(format!(
                    "observation {k} has no signal (sum of squares {ss})"
                )))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    /// Weighted least-squares term.
    pub data: f64,
    /// Weighted first-moment term, before multiplication by alpha.
    pub moment: f64,
    pub total: f64,
}

/// Simulated detector response on the observation's time grid.
pub fn simulate_observation(
    y: &IsothermParams,
    obs: &Observation,
    column: &ColumnConfig,
    detector: &DetectorSpec,
) -> Result<Vec<f64>> {
    let time = &obs.chromatogram.time;
    let horizon = *time.last().expect("chromatogram is non-empty");
    let cfg = ColumnConfig {
        n_time_points: time.len(),
        ..column.with_horizon(horizon)
    };
    let outlet = column::simulate(&cfg, y, &obs.injection, Concentration2::ZERO)?;
    let sim = total_response(&outlet, detector)?;
    let on_grid = sim
        .time
        .iter()
        .zip(time)
        .all(|(a, b)| (a - b).abs() <= 1e-9 * horizon);
    if on_grid {
        return Ok(sim.response);
    }
    let mut knots = vec![0.0];
    knots.extend(&sim.time);
    let mut values = vec![0.0];
    values.extend(&sim.response);
    let h = MonotoneHermite::new(&knots, &values)?;
    Ok(time.iter().map(|&t| h.eval(t)).collect())
}

/// Per-observation `(sum_i res_i^2, sum_i t_i res_i)` for residual `sim - obs`.
fn residual_sums(
    y: &IsothermParams,
    obs: &Observation,
    column: &ColumnConfig,
    detector: &DetectorSpec,
) -> Result<(f64, f64)> {
    let sim = simulate_observation(y, obs, column, detector)?;
    let c = &obs.chromatogram;
    let mut ss = 0.0;
    let mut moment = 0.0;
    for ((r, o), t) in sim.iter().zip(&c.response).zip(&c.time) {
        let res = r - o;
        ss += res * res;
        moment += t * res;
    }
    Ok((ss, moment))
}

pub fn objective(
    y: &IsothermParams,
    observations: &[Observation],
    column: &ColumnConfig,
    detector: &DetectorSpec,
    alpha: f64,
) -> Result<ObjectiveParts> {
    let mut data = 0.0;
    let mut moment = 0.0;
    for obs in observations {
        let (ss, m) = residual_sums(y, obs, column, detector)?;
        data += obs.weight * ss;
        moment += obs.weight * m * m;
    }
    Ok(ObjectiveParts {
        data,
        moment,
        total: data + alpha * moment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationalConfig {
    pub alpha: f64,
    /// Upper edge of the box; the lower edge is zero.
    pub upper: [f64; 8],
    pub initial: IsothermParams,
    pub max_iterations: usize,
    /// Relative spread of simplex values at which the search stops.
    pub tolerance: f64,
    /// Absolute floor on the spread.
    pub abs_tolerance: f64,
    /// Initial simplex edge as a fraction of each starting coordinate.
    pub initial_step: f64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            upper: [100.0; 8],
            initial: IsothermParams::new([1.0; 8]).expect("valid"),
            max_iterations: 2000,
            tolerance: 1e-8,
            abs_tolerance: 1e-12,
            initial_step: 0.1,
        }
    }
}

impl VariationalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be finite and >= 0"));
        }
        if self.upper.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            return Err(Error::invalid("upper bounds must be finite and > 0"));
        }
        if self.initial.as_array().iter().zip(&self.upper).any(|(v, u)| v > u) {
            return Err(Error::invalid("initial guess lies outside the box"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max iterations must be >= 1"));
        }
        if !(self.tolerance >= 0.0 && self.abs_tolerance >= 0.0 && self.initial_step > 0.0) {
            return Err(Error::invalid("tolerances must be >= 0 and the initial step > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimate: IsothermParams,
    pub objective: ObjectiveParts,
    pub initial_objective: ObjectiveParts,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
    /// Best-so-far objective per iteration.
    pub trace: Vec<f64>,
    pub weights: Vec<f64>,
    /// Weighted squared residual of each observation at the estimate.
    pub residuals: Vec<f64>,
    pub config: VariationalConfig,
    pub column: ColumnConfig,
    pub detector: DetectorSpec,
}

impl FitReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn fit(
    observations: &[Observation],
    column: &ColumnConfig,
    detector: &DetectorSpec,
    cfg: &VariationalConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if observations.is_empty() {
        return Err(Error::invalid("at least one observation is required"));
    }
    let eval = |x: &[f64]| -> Result<f64> {
        let y = IsothermParams::from_slice(x)?;
        Ok(objective(&y, observations, column, detector, cfg.alpha)?.total)
    };
    let x0 = cfg.initial.to_vec();
    let step: Vec<f64> = x0
        .iter()
        .zip(&cfg.upper)
        .map(|(v, u)| if *v > 0.0 { cfg.initial_step * v } else { cfg.initial_step * 0.01 * u })
        .collect();
    let opts = SimplexOptions {
        lower: vec![0.0; 8],
        upper: cfg.upper.to_vec(),
        step,
        max_iterations: cfg.max_iterations,
        rel_tolerance: cfg.tolerance,
        abs_tolerance: cfg.abs_tolerance,
    };
    let result = minimize(eval, &x0, &opts)?;
    if !result.converged {
        log::warn!("variational fit stopped at the iteration cap ({})", cfg.max_iterations);
    }
    let estimate = IsothermParams::from_slice(&result.x)?;
    let residuals = observations
        .iter()
        .map(|o| residual_sums(&estimate, o, column, detector).map(|(ss, _)| o.weight * ss))
        .collect::<Result<_>>()?;
    Ok(FitReport {
        estimate,
        objective: objective(&estimate, observations, column, detector, cfg.alpha)?,
        initial_objective: objective(&cfg.initial, observations, column, detector, cfg.alpha)?,
        iterations: result.iterations,
        evaluations: result.evaluations,
        converged: result.converged,
        trace: result.trace,
        weights: observations.iter().map(Observation::weight).collect(),
        residuals,
        config: cfg.clone(),
        column: column.clone(),
        detector: *detector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub data: f64,
    pub moment: f64,
    pub total: f64,
    pub converged: bool,
    pub estimate: IsothermParams,
}

/// Fits once per `alpha` and tabulates the objective components.
pub fn alpha_sweep(
    observations: &[Observation],
    column: &ColumnConfig,
    detector: &DetectorSpec,
    cfg: &VariationalConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let r = fit(observations, column, detector, &VariationalConfig { alpha, ..cfg.clone() })?;
            Ok(SweepRow {
                alpha,
                data: r.objective.data,
                moment: r.objective.moment,
                total: r.objective.total,
                converged: r.converged,
                estimate: r.estimate,
            })
        })
        .collect()
}

/// Log-spaced grid `10^lo .. 10^hi` with `n` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chrom(values: &[f64]) -> Chromatogram {
        let t = (1..=values.len()).map(|i| i as f64).collect();
        Chromatogram::new(t, values.to_vec()).unwrap()
    }

    fn coarse() -> ColumnConfig {
        ColumnConfig {
            n_cells: 40,
            n_time_points: 60,
            horizon: Some(600.0),
            ..ColumnConfig::default()
        }
    }

    fn observe(y: &IsothermParams, h: [f64; 2], column: &ColumnConfig) -> Observation {
        let inj = InjectionProfile::new(h[0], h[1], column.injection_duration).unwrap();
        let outlet = column::simulate(column, y, &inj, Concentration2::ZERO).unwrap();
        let c = total_response(&outlet, &DetectorSpec::default()).unwrap();
        Observation::new(c, inj).unwrap()
    }

    #[test]
    fn weights_equalize_energy() {
        let w = weight_normalize(&[chrom(&[2.0]), chrom(&[1.0])]).unwrap();
        assert_eq!(w, vec![0.25, 1.0]);
        let w = weight_normalize(&[chrom(&[1.0, 1.0]), chrom(&[1.0, 1.0])]).unwrap();
        assert_eq!(w[0], w[1]);
        assert!(weight_normalize(&[chrom(&[0.0, 0.0])]).is_err());
    }

    #[test]
    fn scaling_a_chromatogram_rescales_its_weight() {
        let a = weight_normalize(&[chrom(&[1.0, 2.0])]).unwrap()[0];
        let b = weight_normalize(&[chrom(&[3.0, 6.0])]).unwrap()[0];
        assert!((a / b - 9.0).abs() < 1e-12);
    }

    #[test]
    fn self_consistent_data_has_zero_objective() {
        let col = coarse();
        let y = IsothermParams::new([2.0, 0.1, 1.0, 0.05, 1.5, 0.1, 0.5, 0.02]).unwrap();
        let obs = vec![observe(&y, [5.0, 15.0], &col), observe(&y, [30.0, 30.0], &col)];
        let p = objective(&y, &obs, &col, &DetectorSpec::default(), 1.0).unwrap();
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn moment_term_is_linear_in_alpha() {
        let col = coarse();
        let y = IsothermParams::new([2.0, 0.1, 1.0, 0.05, 1.5, 0.1, 0.5, 0.02]).unwrap();
        let obs = vec![observe(&y, [5.0, 15.0], &col)];
        let other = IsothermParams::new([2.2, 0.1, 1.0, 0.05, 1.5, 0.1, 0.5, 0.02]).unwrap();
        let d = DetectorSpec::default();
        let p0 = objective(&other, &obs, &col, &d, 0.0).unwrap();
        let p1 = objective(&other, &obs, &col, &d, 1e-6).unwrap();
        let p2 = objective(&other, &obs, &col, &d, 2e-6).unwrap();
        assert_eq!(p0.total, p0.data);
        assert_eq!(p1.data, p2.data);
        assert!(((p2.total - p2.data) - 2.0 * (p1.total - p1.data)).abs() <= 1e-12 * p2.total);
    }

    #[test]
    fn moment_term_detects_a_time_shift() {
        let col = coarse();
        let y = IsothermParams::linear(1.0, 2.0).unwrap();
        let obs = observe(&y, [10.0, 10.0], &col);
        let mut shifted = obs.chromatogram.clone();
        shifted.response = crate::datagen::shift_response(&shifted.response, 2);
        let later = Observation::new(shifted, obs.injection).unwrap();
        let p = objective(&y, &[later], &col, &DetectorSpec::default(), 1.0).unwrap();
        assert!(p.moment > 0.0);
        assert!(p.total > p.data);
    }

    #[test]
    fn fit_never_worsens_and_stays_feasible() {
        let col = coarse();
        let truth = IsothermParams::linear(1.0, 2.0).unwrap();
        let obs = vec![observe(&truth, [10.0, 10.0], &col)];
        let cfg = VariationalConfig {
            initial: IsothermParams::new([1.2, 0.1, 0.1, 0.1, 2.0, 0.1, 0.1, 0.1]).unwrap(),
            max_iterations: 60,
            ..VariationalConfig::default()
        };
        let r = fit(&obs, &col, &DetectorSpec::default(), &cfg).unwrap();
        assert!(r.objective.total <= r.initial_objective.total);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.estimate.as_array().iter().all(|v| (0.0..=100.0).contains(v)));
        assert_eq!(r.trace.len(), r.iterations + 1);
    }

    #[test]
    fn optimal_initial_guess_is_returned() {
        let col = coarse();
        let y = IsothermParams::linear(1.0, 2.0).unwrap();
        let obs = vec![observe(&y, [10.0, 10.0], &col)];
        let cfg = VariationalConfig {
            initial: y,
            max_iterations: 30,
            ..VariationalConfig::default()
        };
        let r = fit(&obs, &col, &DetectorSpec::default(), &cfg).unwrap();
        assert_eq!(r.objective.total, 0.0);
        assert_eq!(r.estimate, y);
    }

    #[test]
    fn empty_observation_list_is_rejected() {
        let cfg = VariationalConfig::default();
        assert!(fit(&[], &coarse(), &DetectorSpec::default(), &cfg).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(-3.0, 1.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[4] - 10.0).abs() < 1e-12);
    }
}
