//! Equilibrium-dispersive column model and detector response.
//!
//! The two-component system
//!
//! ```text
//! dC/dt + F dq(C)/dt + u dC/dx = D_a d2C/dx2,   0 < x <= L
//! C - (D_a/u) dC/dx = h(t)  at x = 0,   dC/dx = 0  at x = L
//! ```
//!
//! is advanced in the conserved variable `U = C + F q(C)` on a cell-centered grid.
//! Convection is first-order upwind, diffusion is second-order central, and time
//! stepping is explicit. After every step the mobile-phase concentration is recovered
//! cell by cell from `U` with a damped Newton iteration on the 2x2 system whose
//! Jacobian is `I + F J_q(C)`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isotherm::{Concentration2, IsothermParams};

/// Largest multiple of the dead time used when the horizon is chosen automatically.
pub const AUTO_HORIZON_CAP: u32 = 20;
/// Relative outlet level below which elution counts as complete.
pub const AUTO_HORIZON_LEVEL: f64 = 1e-4;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// Physical and numerical constants of the column and the output time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnConfig {
    /// Column length in cm.
    pub length: f64,
    /// Mobile phase velocity in cm/s.
    pub velocity: f64,
    /// Stationary/mobile phase ratio.
    pub phase_ratio: f64,
    /// Apparent dispersion in cm^2/s. Derived from `plate_count` when absent.
    pub diffusion: Option<f64>,
    pub plate_count: u32,
    /// Number of finite-volume cells.
    pub n_cells: usize,
    /// Simulated time span in s. Chosen per run when absent.
    pub horizon: Option<f64>,
    /// Number of points on the output grid `t_i = i T / N_T`, `i = 1..N_T`.
    pub n_time_points: usize,
    /// Length of the rectangular injection in s.
    pub injection_duration: f64,
    /// Fraction of the explicit stability limit used as time step.
    pub cfl_safety: f64,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        Self {
            length: 15.0,
            velocity: 0.125,
            phase_ratio: 0.78,
            diffusion: None,
            plate_count: 9000,
            n_cells: 200,
            horizon: None,
            n_time_points: 800,
            injection_duration: 10.0,
            cfl_safety: 0.5,
        }
    }
}

impl ColumnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive(self.length, "length")?;
        positive(self.velocity, "velocity")?;
        positive(self.phase_ratio, "phase_ratio")?;
        positive(self.injection_duration, "injection_duration")?;
        positive(self.cfl_safety, "cfl_safety")?;
        if let Some(d) = self.diffusion {
            positive(d, "diffusion")?;
        }
        if self.plate_count == 0 {
            return Err(Error::invalid("plate_count must be >= 1"));
        }
        if self.n_cells < 10 {
            return Err(Error::invalid(format!(
                "n_cells must be >= 10, got {}",
                self.n_cells
            )));
        }
        if self.n_time_points < 2 {
            return Err(Error::invalid("n_time_points must be >= 2"));
        }
        if let Some(t) = self.horizon {
            if !t.is_finite() || t <= self.dead_time() {
                return Err(Error::invalid(format!(
                    "horizon {t} s must exceed the dead time {} s",
                    self.dead_time()
                )));
            }
        }
        Ok(())
    }

    /// Dead time `T0 = L / u`.
    pub fn dead_time(&self) -> f64 {
        self.length / self.velocity
    }

    /// Apparent dispersion, `L u / (2 N)` unless given explicitly.
    pub fn diffusion_coefficient(&self) -> f64 {
        self.diffusion
            .unwrap_or(self.length * self.velocity / (2.0 * self.plate_count as f64))
    }

    pub fn cell_width(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Internal time step before clipping to output or injection boundaries.
    pub fn time_step(&self) -> f64 {
        let dx = self.cell_width();
        let d = self.diffusion_coefficient();
        self.cfl_safety * (dx / self.velocity).min(dx * dx / (2.0 * d))
    }

    /// Output instants `t_i = i T / N_T` for `i = 1..=N_T`.
    pub fn output_grid(&self, horizon: f64) -> Vec<f64> {
        let n = self.n_time_points;
        (1..=n).map(|i| i as f64 * horizon / n as f64).collect()
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            horizon: Some(horizon),
            ..self.clone()
        }
    }
}

/// Rectangular injection `h_mu(t) = H(duration - t) hbar_mu` with `H(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionProfile {
    pub hbar: [f64; 2],
    pub duration: f64,
}

impl InjectionProfile {
    pub fn new(hbar1: f64, hbar2: f64, duration: f64) -> Result<Self> {
        let p = Self {
            hbar: [hbar1, hbar2],
            duration,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hbar.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::invalid(format!(
                "injected concentrations must be finite and >= 0, got {:?}",
                self.hbar
            )));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::invalid("injection duration must be > 0"));
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            hbar: [self.hbar[1], self.hbar[0]],
            duration: self.duration,
        }
    }

    #[inline]
    fn at(&self, t: f64) -> [f64; 2] {
        if t < self.duration {
            self.hbar
        } else {
            [0.0, 0.0]
        }
    }
}

/// Inlet concentration at time `t`.
pub fn boundary_value(profile: &InjectionProfile, t: f64) -> Result<Concentration2> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("time must be >= 0, got {t}")));
    }
    let [c1, c2] = profile.at(t);
    Ok(Concentration2 { c1, c2 })
}

/// Detector calibration `f_cal,mu(c) = gain_mu c` and saturation limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub gains: [f64; 2],
    /// Saturation limit; `None` means unbounded.
    pub r_max: Option<f64>,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            gains: [1.0, 1.0],
            r_max: None,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gains.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::invalid("detector gains must be > 0"));
        }
        if let Some(r) = self.r_max {
            if !(r > 0.0) {
                return Err(Error::invalid("r_max must be > 0"));
            }
        }
        Ok(())
    }
}

/// Per-component outlet concentration history on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Outlet {
    pub time: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl Outlet {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "c1", "c2"])?;
        for i in 0..self.len() {
            w.write_record([sig9(self.time[i]), sig9(self.c1[i]), sig9(self.c2[i])])?;
        }
        w.flush()
    }
}

/// Detector response on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromatogram {
    pub time: Vec<f64>,
    pub response: Vec<f64>,
}

impl Chromatogram {
    pub fn new(time: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if time.len() != response.len() {
            return Err(Error::DimensionMismatch {
                expected: time.len(),
                got: response.len(),
            });
        }
        if time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        if response.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("response contains non-finite values"));
        }
        Ok(Self { time, response })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.response.iter().map(|r| r * r).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "response"])?;
        for (t, r) in self.time.iter().zip(&self.response) {
            w.write_record([sig9(*t), sig9(*r)])?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a `t,response` CSV. Extra columns are ignored.
    pub fn read_csv<R: Read>(reader: R) -> std::result::Result<Self, String> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(|e| e.to_string())?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| format!("missing column `{name}`"))
        };
        let (ti, ri) = (col("t")?, col("response")?);
        let (mut time, mut response) = (Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let parse = |i: usize| -> std::result::Result<f64, String> {
                rec.get(i)
                    .ok_or_else(|| format!("row {}: missing field", line + 1))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 1))
            };
            time.push(parse(ti)?);
            response.push(parse(ri)?);
        }
        if time.len() < 2 {
            return Err("chromatogram needs at least two rows".into());
        }
        Chromatogram::new(time, response).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|m| Error::format(path, m))
    }
}

/// Nine significant digits in scientific notation.
pub(crate) fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// `r_i = min(sum_mu gain_mu C_mu(L, t_i), r_max)`.
pub fn total_response(outlet: &Outlet, detector: &DetectorSpec) -> Result<Chromatogram> {
    detector.validate()?;
    if outlet.c1.len() != outlet.len() || outlet.c2.len() != outlet.len() {
        return Err(Error::DimensionMismatch {
            expected: outlet.len(),
            got: outlet.c1.len().min(outlet.c2.len()),
        });
    }
    let cap = detector.r_max.unwrap_or(f64::INFINITY);
    let [g1, g2] = detector.gains;
    let response = outlet
        .c1
        .iter()
        .zip(&outlet.c2)
        .map(|(a, b)| (g1 * a + g2 * b).min(cap))
        .collect();
    Ok(Chromatogram {
        time: outlet.time.clone(),
        response,
    })
}

/// Mass bookkeeping of one run, per unit cross-section (mM cm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBalance {
    pub initial: [f64; 2],
    pub inflow: [f64; 2],
    pub outflow: [f64; 2],
    /// Mobile plus stationary phase content at the final time.
    pub retained: [f64; 2],
    /// Smallest mobile-phase concentration seen anywhere during the run.
    pub min_concentration: f64,
}

/// Outlet history for one injection. Uses `config.horizon` when set, otherwise the
/// automatically chosen horizon of [`auto_horizon`].
pub fn simulate(
    config: &ColumnConfig,
    params: &IsothermParams,
    profile: &InjectionProfile,
    initial: Concentration2,
) -> Result<Outlet> {
    simulate_detailed(config, params, profile, initial).map(|(o, _)| o)
}

pub fn simulate_detailed(
    config: &ColumnConfig,
    params: &IsothermParams,
    profile: &InjectionProfile,
    initial: Concentration2,
) -> Result<(Outlet, MassBalance)> {
    config.validate()?;
    profile.validate()?;
    let initial = initial.validated()?;
    let horizon = match config.horizon {
        Some(t) => t,
        None => auto_horizon(config, params, profile, initial)?,
    };
    let grid = config.output_grid(horizon);
    Solver::new(config, params, profile, initial)?.run(&grid)
}

/// Smallest multiple `k T0` (capped at [`AUTO_HORIZON_CAP`]) after which the outlet
/// stays below [`AUTO_HORIZON_LEVEL`] of its peak for the rest of the capped run.
pub fn auto_horizon(
    config: &ColumnConfig,
    params: &IsothermParams,
    profile: &InjectionProfile,
    initial: Concentration2,
) -> Result<f64> {
    let t0 = config.dead_time();
    let cap = AUTO_HORIZON_CAP as f64 * t0;
    let probe = ColumnConfig {
        n_time_points: config.n_time_points.max(50 * AUTO_HORIZON_CAP as usize),
        horizon: Some(cap),
        ..config.clone()
    };
    probe.validate()?;
    let (outlet, _) =
        Solver::new(&probe, params, profile, initial.validated()?)?.run(&probe.output_grid(cap))?;
    let total: Vec<f64> = outlet.c1.iter().zip(&outlet.c2).map(|(a, b)| a + b).collect();
    let peak = total.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(t0 * 2.0);
    }
    let level = AUTO_HORIZON_LEVEL * peak;
    // Index of the last grid point still above the level.
    let last = total.iter().rposition(|&r| r >= level).unwrap_or(0);
    let t_last = outlet.time[last];
    let k = ((t_last / t0).floor() as u32 + 1).clamp(2, AUTO_HORIZON_CAP);
    Ok(k as f64 * t0)
}

struct Solver<'a> {
    params: &'a IsothermParams,
    profile: &'a InjectionProfile,
    n: usize,
    dx: f64,
    dt_max: f64,
    velocity: f64,
    diffusion: f64,
    phase_ratio: f64,
    conc: Vec<[f64; 2]>,
    conserved: Vec<[f64; 2]>,
    flux: Vec<[f64; 2]>,
}

impl<'a> Solver<'a> {
    fn new(
        config: &ColumnConfig,
        params: &'a IsothermParams,
        profile: &'a InjectionProfile,
        initial: Concentration2,
    ) -> Result<Self> {
        let n = config.n_cells;
        let dx = config.cell_width();
        let dt_max = config.time_step();
        let velocity = config.velocity;
        let diffusion = config.diffusion_coefficient();
        let courant = velocity * dt_max / dx;
        let diff = 2.0 * diffusion * dt_max / (dx * dx);
        if courant + diff > 1.0 {
            return Err(Error::Cfl {
                courant,
                diffusion: diff,
            });
        }
        let phase_ratio = config.phase_ratio;
        let g = [initial.c1, initial.c2];
        let qg = params.q_raw(g[0], g[1]);
        let u0 = [g[0] + phase_ratio * qg[0], g[1] + phase_ratio * qg[1]];
        Ok(Self {
            params,
            profile,
            n,
            dx,
            dt_max,
            velocity,
            diffusion,
            phase_ratio,
            conc: vec![g; n],
            conserved: vec![u0; n],
            flux: vec![[0.0; 2]; n + 1],
        })
    }

    fn content(&self) -> [f64; 2] {
        let mut s = [0.0; 2];
        for u in &self.conserved {
            s[0] += u[0] * self.dx;
            s[1] += u[1] * self.dx;
        }
        s
    }

    fn run(mut self, grid: &[f64]) -> Result<(Outlet, MassBalance)> {
        let horizon = *grid.last().expect("non-empty output grid");
        let initial = self.content();
        let mut inflow = [0.0; 2];
        let mut outflow = [0.0; 2];
        let mut min_conc = f64::INFINITY;

        let mut out = Outlet {
            time: grid.to_vec(),
            c1: Vec::with_capacity(grid.len()),
            c2: Vec::with_capacity(grid.len()),
        };
        let mut t = 0.0;
        let mut prev = self.conc[self.n - 1];
        let mut next_out = 0;
        let eps = 1e-12 * horizon;

        while next_out < grid.len() {
            let mut dt = self.dt_max.min(horizon - t);
            // land exactly on the end of the injection
            let end = self.profile.duration;
            if t < end && t + dt > end {
                dt = end - t;
            }
            if dt <= eps {
                dt = eps.max(horizon - t);
            }
            self.fluxes(t);
            for k in 0..2 {
                inflow[k] += dt * self.flux[0][k];
                outflow[k] += dt * self.flux[self.n][k];
            }
            let t_new = t + dt;
            self.advance(dt, t_new)?;
            let cur = self.conc[self.n - 1];
            for c in &self.conc {
                min_conc = min_conc.min(c[0]).min(c[1]);
            }
            while next_out < grid.len() && (grid[next_out] <= t_new + eps) {
                let tau = grid[next_out];
                let w = ((tau - t) / dt).clamp(0.0, 1.0);
                let v1 = prev[0] + w * (cur[0] - prev[0]);
                let v2 = prev[1] + w * (cur[1] - prev[1]);
                out.c1.push(clamp_output(v1));
                out.c2.push(clamp_output(v2));
                next_out += 1;
            }
            prev = cur;
            t = t_new;
        }
        let balance = MassBalance {
            initial,
            inflow,
            outflow,
            retained: self.content(),
            min_concentration: min_conc,
        };
        Ok((out, balance))
    }

    fn fluxes(&mut self, t: f64) {
        let (u, d, dx, n) = (self.velocity, self.diffusion, self.dx, self.n);
        // Danckwerts inlet: total flux u h(t) through the face at x = 0.
        let h = self.profile.at(t);
        self.flux[0] = [u * h[0], u * h[1]];
        for i in 1..n {
            let (l, r) = (self.conc[i - 1], self.conc[i]);
            self.flux[i] = [
                u * l[0] - d * (r[0] - l[0]) / dx,
                u * l[1] - d * (r[1] - l[1]) / dx,
            ];
        }
        // zero-gradient outlet
        let last = self.conc[n - 1];
        self.flux[n] = [u * last[0], u * last[1]];
    }

    fn advance(&mut self, dt: f64, t: f64) -> Result<()> {
        let ratio = dt / self.dx;
        for i in 0..self.n {
            let (fl, fr) = (self.flux[i], self.flux[i + 1]);
            let u = &mut self.conserved[i];
            u[0] -= ratio * (fr[0] - fl[0]);
            u[1] -= ratio * (fr[1] - fl[1]);
            if !(u[0].is_finite() && u[1].is_finite()) {
                return Err(Error::NonFinite { cell: i, time: t });
            }
            let target = *u;
            self.conc[i] = recover_concentration(self.params, self.phase_ratio, target, self.conc[i])
                .ok_or(Error::NonConvergence { cell: i, time: t })?;
        }
        Ok(())
    }
}

fn clamp_output(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Solves `C + F q(C) = U` for `C >= 0`, starting from `guess`.
fn recover_concentration(
    params: &IsothermParams,
    phase_ratio: f64,
    target: [f64; 2],
    guess: [f64; 2],
) -> Option<[f64; 2]> {
    let u = [target[0].max(0.0), target[1].max(0.0)];
    if u[0] == 0.0 && u[1] == 0.0 {
        return Some([0.0, 0.0]);
    }
    let scale = 1.0 + u[0].abs().max(u[1].abs());
    let residual = |c: [f64; 2]| {
        let q = params.q_raw(c[0], c[1]);
        [c[0] + phase_ratio * q[0] - u[0], c[1] + phase_ratio * q[1] - u[1]]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());

    let mut c = [guess[0].max(0.0), guess[1].max(0.0)];
    // A component with no conserved content has no mobile-phase concentration.
    for k in 0..2 {
        if u[k] == 0.0 {
            c[k] = 0.0;
        }
    }
    let mut r = residual(c);
    let mut rn = norm(r);
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= NEWTON_TOL * scale {
            return Some(c);
        }
        let j = params.jacobian_raw(c[0], c[1]);
        let (a, b) = (1.0 + phase_ratio * j[0][0], phase_ratio * j[0][1]);
        let (cc, d) = (phase_ratio * j[1][0], 1.0 + phase_ratio * j[1][1]);
        let det = a * d - b * cc;
        if !(det.is_finite() && det != 0.0) {
            return None;
        }
        let step = [(r[0] * d - b * r[1]) / det, (a * r[1] - cc * r[0]) / det];
        let mut lambda = 1.0;
        loop {
            let trial = [
                (c[0] - lambda * step[0]).max(0.0),
                (c[1] - lambda * step[1]).max(0.0),
            ];
            let tr = residual(trial);
            let tn = norm(tr);
            if tn < rn || lambda < 1e-6 {
                if tn >= rn && rn > NEWTON_TOL * scale * 1e3 {
                    return None;
                }
                c = trial;
                r = tr;
                rn = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if rn <= NEWTON_TOL * scale * 1e3 {
        Some(c)
    } else {
        None
    }
}
