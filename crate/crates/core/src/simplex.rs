//! Nelder-Mead simplex minimizer with restarts.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Iteration cap for each restart.
    pub max_iter: usize,
    /// Relative tolerance on the spread of objective values (and on the
    /// simplex diameter).
    pub rel_tol: f64,
    /// Additional restarts from the best vertex after convergence.
    pub restarts: usize,
    /// Size of the initial simplex along each coordinate.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 2000,
            rel_tol: 1e-10,
            restarts: 4,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`.
///
/// Non-finite objective values are treated as `+inf`, so the objective may
/// signal infeasible points by returning NaN.
pub fn minimize<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut best = x0.to_vec();
    let mut best_f = eval(&best);
    let mut total_iter = 0;
    let mut converged = false;
    for round in 0..=opts.restarts {
        let (x, fx, iters, conv) = run_once(&eval, &best, opts);
        total_iter += iters;
        let improved = fx < best_f - opts.rel_tol * best_f.abs();
        if fx <= best_f {
            best = x;
            best_f = fx;
        }
        converged = conv;
        if round > 0 && !improved {
            break;
        }
    }
    SimplexResult {
        x: best,
        f: best_f,
        iterations: total_iter,
        converged,
    }
}

fn run_once<F>(eval: &F, x0: &[f64], opts: &SimplexOptions) -> (Vec<f64>, f64, usize, bool)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        let step = if p[i].abs() > 1e-8 {
            opts.initial_step * p[i].abs().max(1.0)
        } else {
            opts.initial_step
        };
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();

    let mut iter = 0;
    let mut converged = false;
    while iter < opts.max_iter {
        // Sort vertices by objective value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diameter = (1..=n)
            .map(|i| {
                pts[i]
                    .iter()
                    .zip(&pts[0])
                    .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.rel_tol * vals[0].abs() + f64::MIN_POSITIVE)
            || diameter <= opts.rel_tol
        {
            converged = true;
            break;
        }
        iter += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let shrunk: Vec<f64> = pts[0]
                .iter()
                .zip(&pts[i])
                .map(|(b, p)| b + 0.5 * (p - b))
                .collect();
            vals[i] = eval(&shrunk);
            pts[i] = shrunk;
        }
    }
    let (bi, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex has vertices");
    (pts[bi].clone(), vals[bi], iter, converged)
}
