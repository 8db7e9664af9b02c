use chromfit::column::{simulate_detailed, ColumnConfig, InjectionProfile, Outlet};
use chromfit::{simulate, Concentration2, IsothermParams};

fn desk(horizon: f64, n_time_points: usize) -> ColumnConfig {
    ColumnConfig {
        horizon: Some(horizon),
        n_time_points,
        ..ColumnConfig::default()
    }
}

/// Apex time from the grid maximum refined by a parabola through its neighbours.
fn apex(time: &[f64], y: &[f64]) -> f64 {
    let k = (0..y.len())
        .max_by(|&a, &b| y[a].total_cmp(&y[b]))
        .unwrap();
    if k == 0 || k + 1 == y.len() {
        return time[k];
    }
    let (l, c, r) = (y[k - 1], y[k], y[k + 1]);
    let h = time[k + 1] - time[k];
    time[k] + 0.5 * h * (l - r) / (l - 2.0 * c + r)
}

fn trapezoid(time: &[f64], y: &[f64]) -> f64 {
    // the grid starts at dt, and the outlet is empty at t = 0
    let mut total = 0.5 * time[0] * y[0];
    for i in 1..time.len() {
        total += 0.5 * (time[i] - time[i - 1]) * (y[i] + y[i - 1]);
    }
    total
}

#[test]
fn unretained_tracer_arrives_at_dead_time() {
    let cfg = desk(600.0, 6000);
    let inj = InjectionProfile::new(0.01, 0.01, 10.0).unwrap();
    let out = simulate(&cfg, &IsothermParams::zeros(), &inj, Concentration2::ZERO).unwrap();
    let expected = 5.0 + cfg.dead_time();
    let got = apex(&out.time, &out.c1);
    assert!((got - expected).abs() <= 0.02 * expected, "apex {got} vs {expected}");
}

#[test]
fn linear_retention_time() {
    for a in [0.5, 1.0, 2.0] {
        let cfg = desk(1200.0, 12000);
        let params = IsothermParams::linear(a, a).unwrap();
        let inj = InjectionProfile::new(0.01, 0.01, 10.0).unwrap();
        let out = simulate(&cfg, &params, &inj, Concentration2::ZERO).unwrap();
        let expected = 5.0 + cfg.dead_time() * (1.0 + cfg.phase_ratio * a);
        let got = apex(&out.time, &out.c1);
        assert!(
            (got - expected).abs() <= 0.02 * expected,
            "a = {a}: apex {got} vs {expected}"
        );
    }
}

#[test]
fn mass_balance_by_outlet_quadrature() {
    let params = IsothermParams::new([9.54, 0.91, 9.53, 1.0, 2.74, 0.43, 1.8, 0.08]).unwrap();
    let inj = InjectionProfile::new(5.0, 15.0, 10.0).unwrap();
    let cfg = desk(20.0 * 120.0, 4000);
    let (out, mb) = simulate_detailed(&cfg, &params, &inj, Concentration2::ZERO).unwrap();
    let u = cfg.velocity;
    for (k, series) in [&out.c1, &out.c2].into_iter().enumerate() {
        let inflow = u * inj.hbar[k] * inj.duration;
        let outflow = u * trapezoid(&out.time, series);
        let rel = (outflow + mb.retained[k] - inflow).abs() / inflow;
        assert!(rel <= 0.01, "component {k}: relative imbalance {rel}");
    }
}

#[test]
fn component_swap_is_exact() {
    let params = IsothermParams::new([9.54, 0.91, 9.53, 1.0, 2.74, 0.43, 1.8, 0.08]).unwrap();
    let inj = InjectionProfile::new(5.0, 15.0, 10.0).unwrap();
    let cfg = desk(900.0, 400);
    let a = simulate(&cfg, &params, &inj, Concentration2::ZERO).unwrap();
    let b = simulate(&cfg, &params.swap_components(), &inj.swapped(), Concentration2::ZERO).unwrap();
    assert_eq!(a.c1, b.c2);
    assert_eq!(a.c2, b.c1);
}

fn l2_distance(a: &Outlet, b: &Outlet) -> f64 {
    a.c1.iter()
        .zip(&b.c1)
        .chain(a.c2.iter().zip(&b.c2))
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// With resolved dispersion and a weakly nonlinear isotherm the outlet converges at
/// the upwind rate. The rectangular inlet pulse keeps the coarse levels
/// pre-asymptotic (observed orders 0.64 then 0.80 on these levels).
#[test]
fn refinement_converges() {
    let params = IsothermParams::new([1.0, 0.02, 0.5, 0.01, 0.5, 0.01, 0.25, 0.02]).unwrap();
    let inj = InjectionProfile::new(2.0, 2.0, 10.0).unwrap();
    let run = |cells: usize| {
        let cfg = ColumnConfig {
            n_cells: cells,
            diffusion: Some(0.02),
            ..desk(800.0, 400)
        };
        simulate(&cfg, &params, &inj, Concentration2::ZERO).unwrap()
    };
    let outs: Vec<Outlet> = [100, 200, 400, 800].iter().map(|&n| run(n)).collect();
    let changes: Vec<f64> = outs.windows(2).map(|w| l2_distance(&w[0], &w[1])).collect();
    assert!(changes[1] < changes[0] && changes[2] < changes[1], "{changes:?}");
    let order = (changes[1] / changes[2]).log2();
    assert!(order >= 0.75, "empirical order {order}, changes {changes:?}");
}

#[test]
fn stays_nonnegative_for_steep_isotherms() {
    let params = IsothermParams::new([90.0, 95.0, 3.0, 0.5, 60.0, 80.0, 99.0, 2.0]).unwrap();
    let inj = InjectionProfile::new(30.0, 0.5, 10.0).unwrap();
    let (out, mb) = simulate_detailed(&desk(2400.0, 800), &params, &inj, Concentration2::ZERO).unwrap();
    assert!(mb.min_concentration >= -1e-9);
    assert!(out.c1.iter().chain(&out.c2).all(|&v| v >= 0.0 && v.is_finite()));
}

#[test]
fn auto_horizon_covers_elution() {
    let cfg = ColumnConfig::default();
    let params = IsothermParams::linear(1.0, 0.5).unwrap();
    let inj = InjectionProfile::new(1.0, 1.0, 10.0).unwrap();
    let t = chromfit::column::auto_horizon(&cfg, &params, &inj, Concentration2::ZERO).unwrap();
    let t0 = cfg.dead_time();
    assert_eq!(t % t0, 0.0);
    assert!(t > t0 * (1.0 + 0.78) && t <= 20.0 * t0, "{t}");
}
