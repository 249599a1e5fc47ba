//! Nelder–Mead simplex minimiser.
//!
//! Infeasible points are signalled by the objective returning `+∞` (or NaN,
//! treated the same); they always rank worst, so the simplex walks back
//! into the feasible region.

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Relative function spread: stop when `f_worst − f_best ≤ ftol·(|f_best| + ftol)`.
    pub ftol: f64,
    /// Largest vertex distance from the best vertex (max-norm).
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            ftol: 1e-8,
            xtol: 1e-4,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult<const D: usize> {
    pub x: [f64; D],
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn affine<const D: usize>(a: &[f64; D], b: &[f64; D], t: f64) -> [f64; D] {
    // a + t (b - a)
    let mut out = [0.0; D];
    for k in 0..D {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
    out
}

/// Minimise `f` from `start` with an axis-aligned initial simplex of the
/// given step sizes.
pub fn minimize<const D: usize, F>(
    mut f: F,
    start: [f64; D],
    step: [f64; D],
    opts: &SimplexOptions,
) -> SimplexResult<D>
where
    F: FnMut(&[f64; D]) -> f64,
{
    let mut evals = 0usize;
    let mut eval = |x: &[f64; D], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut pts: Vec<[f64; D]> = Vec::with_capacity(D + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(D + 1);
    pts.push(start);
    vals.push(eval(&start, &mut evals));
    for k in 0..D {
        let mut p = start;
        p[k] += step[k];
        vals.push(eval(&p, &mut evals));
        pts.push(p);
    }

    let mut order: Vec<usize> = (0..=D).collect();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[D];
        let second = order[D - 1];

        let fb = vals[best];
        let fw = vals[worst];
        if fb.is_finite() && fw.is_finite() {
            let spread_ok = fw - fb <= opts.ftol * (fb.abs() + opts.ftol);
            let diam = pts
                .iter()
                .flat_map(|p| p.iter().zip(pts[best].iter()).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread_ok && diam <= opts.xtol {
                converged = true;
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; D];
        for &i in &order[..D] {
            for k in 0..D {
                centroid[k] += pts[i][k];
            }
        }
        for c in centroid.iter_mut() {
            *c /= D as f64;
        }

        let xr = affine(&centroid, &pts[worst], -REFLECT);
        let fr = eval(&xr, &mut evals);

        if fr < fb {
            let xe = affine(&centroid, &pts[worst], -EXPAND);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }

        let (xc, fc) = if fr < fw {
            let xc = affine(&centroid, &xr, CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = affine(&centroid, &pts[worst], CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fw.min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }

        let anchor = pts[best];
        for &i in &order[1..] {
            pts[i] = affine(&anchor, &pts[i], SHRINK);
            vals[i] = eval(&pts[i], &mut evals);
        }
    }

    let best = (0..=D)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    SimplexResult {
        x: pts[best],
        f: vals[best],
        iterations,
        evaluations: evals,
        converged,
    }
}
