//! Box-constrained Nelder–Mead. Trial points are projected onto the box before
//! evaluation, so every evaluated point is feasible.

use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Initial edge length per coordinate.
    pub step: Vec<f64>,
    pub max_iterations: usize,
    /// Stop when the spread of vertex values falls below
    /// `rel_tolerance * |f_best| + abs_tolerance`.
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after initialization and after every iteration.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn minimize<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = x0.len();
    let (lo, hi) = (&opts.lower, &opts.upper);
    let mut start = x0.to_vec();
    project(&mut start, lo, hi);

    let mut vertices = vec![start.clone()];
    for j in 0..n {
        let mut v = start.clone();
        // Step inward when the outward step would leave the box.
        v[j] = if v[j] + opts.step[j] <= hi[j] {
            v[j] + opts.step[j]
        } else {
            v[j] - opts.step[j]
        };
        project(&mut v, lo, hi);
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.par_iter().map(|v| f(v)).collect::<Result<_>>()?;
    let mut evaluations = n + 1;
    let eval = |x: &mut Vec<f64>, evaluations: &mut usize| -> Result<f64> {
        project(x, lo, hi);
        *evaluations += 1;
        f(x)
    };

    let mut order: Vec<usize> = (0..=n).collect();
    let sort = |order: &mut Vec<usize>, values: &[f64]| {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    };
    sort(&mut order, &values);
    let mut trace = vec![values[order[0]]];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let spread = values[worst] - values[best];
        if spread <= opts.rel_tolerance * values[best].abs() + opts.abs_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&vertices[i]) {
                *c += v / n as f64;
            }
        }
        let mut xr = affine(&centroid, &vertices[worst], -1.0);
        let fr = eval(&mut xr, &mut evaluations)?;
        if fr < values[best] {
            let mut xe = affine(&centroid, &vertices[worst], -2.0);
            let fe = eval(&mut xe, &mut evaluations)?;
            if fe < fr {
                vertices[worst] = xe;
                values[worst] = fe;
            } else {
                vertices[worst] = xr;
                values[worst] = fr;
            }
        } else if fr < values[second] {
            vertices[worst] = xr;
            values[worst] = fr;
        } else {
            let outside = fr < values[worst];
            let mut xc = if outside {
                affine(&centroid, &xr, 0.5)
            } else {
                affine(&centroid, &vertices[worst], 0.5)
            };
            let fc = eval(&mut xc, &mut evaluations)?;
            if fc < if outside { fr } else { values[worst] } {
                vertices[worst] = xc;
                values[worst] = fc;
            } else {
                let anchor = vertices[best].clone();
                let shrunk: Vec<(usize, Vec<f64>)> = (0..=n)
                    .filter(|&i| i != best)
                    .map(|i| {
                        let mut v = affine(&anchor, &vertices[i], 0.5);
                        project(&mut v, lo, hi);
                        (i, v)
                    })
                    .collect();
                let fs: Vec<f64> = shrunk.par_iter().map(|(_, v)| f(v)).collect::<Result<_>>()?;
                evaluations += n;
                for ((i, v), fv) in shrunk.into_iter().zip(fs) {
                    vertices[i] = v;
                    values[i] = fv;
                }
            }
        }
        sort(&mut order, &values);
        trace.push(values[order[0]].min(*trace.last().expect("seeded")));
    }

    let best = order[0];
    Ok(SimplexResult {
        x: vertices[best].clone(),
        value: values[best],
        iterations,
        evaluations,
        converged,
        trace,
    })
}
