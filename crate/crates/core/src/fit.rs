//! Maximum-likelihood GPD fits and the peaks-over-threshold tail model.
//!
//! The likelihood is minimised over `(ln σ, ξ)` with a Nelder–Mead simplex,
//! `ξ` restricted to `(−1, 5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{GpdParams, SMALL_SHAPE};
use crate::optim::{self, SimplexOptions};

pub const SHAPE_LOWER: f64 = -1.0;
pub const SHAPE_UPPER: f64 = 5.0;
pub const DEFAULT_MIN_EXCESS: usize = 10;

const START_SHAPE: f64 = 0.1;
const RESTART_JITTER: [[f64; 2]; 2] = [[0.25, -0.15], [-0.25, 0.15]];
const BOUNDARY_MARGIN: f64 = 1e-3;

/// Tuning for [`fit_gpd_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_excess: usize,
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// Extra simplex runs started near the incumbent optimum.
    pub restarts: usize,
    /// Warm start; falls back to the exponential start if infeasible.
    pub start: Option<GpdParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_excess: DEFAULT_MIN_EXCESS,
            max_iter: 300,
            ftol: 1e-8,
            xtol: 1e-4,
            restarts: 2,
            start: None,
        }
    }
}

impl FitOptions {
    /// Single simplex run from `start`, used for refits inside bootstrap loops.
    pub fn warm(self, start: GpdParams) -> Self {
        FitOptions {
            restarts: 0,
            start: Some(start),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub params: GpdParams,
    pub neg_log_lik: f64,
    pub n_excess: usize,
    pub converged: bool,
    /// Shape estimate within 1e-3 of the parameter box.
    pub at_boundary: bool,
    pub iterations: usize,
}

/// Excess sample with the summaries the likelihood needs.
struct Excesses<'a> {
    y: &'a [f64],
    sum: f64,
    max: f64,
}

impl<'a> Excesses<'a> {
    fn new(y: &'a [f64]) -> Result<Self> {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for &v in y {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "excesses must be positive and finite, got {v}"
                )));
            }
            sum += v;
            max = max.max(v);
        }
        Ok(Excesses { y, sum, max })
    }

    fn nll(&self, scale: f64, shape: f64) -> f64 {
        let n = self.y.len() as f64;
        if shape.abs() < SMALL_SHAPE {
            return n * scale.ln() + self.sum / scale;
        }
        let r = shape / scale;
        if r * self.max <= -1.0 {
            return f64::INFINITY;
        }
        let acc: f64 = self.y.iter().map(|&v| (r * v).ln_1p()).sum();
        n * scale.ln() + (1.0 + 1.0 / shape) * acc
    }

    fn objective(&self, x: &[f64; 2]) -> f64 {
        let shape = x[1];
        if !(shape > SHAPE_LOWER && shape < SHAPE_UPPER) || !x[0].is_finite() {
            return f64::INFINITY;
        }
        self.nll(x[0].exp(), shape)
    }
}

/// `−Σ ln h(yᵢ; σ, ξ)`; `+∞` when any excess lies outside the support.
pub fn neg_log_likelihood(p: &GpdParams, excesses: &[f64]) -> Result<f64> {
    Ok(Excesses::new(excesses)?.nll(p.scale(), p.shape()))
}

/// Maximum-likelihood fit with default options.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit> {
    fit_gpd_with(excesses, &FitOptions::default())
}

pub fn fit_gpd_with(excesses: &[f64], opts: &FitOptions) -> Result<GpdFit> {
    let required = opts.min_excess.max(2);
    if excesses.len() < required {
        return Err(Error::TooFewObservations {
            required,
            got: excesses.len(),
        });
    }
    let ex = Excesses::new(excesses)?;
    let simplex = SimplexOptions {
        ftol: opts.ftol,
        xtol: opts.xtol,
        max_iter: opts.max_iter,
    };
    let step = [0.1, 0.1];
    let cold = [(ex.sum / excesses.len() as f64).ln(), START_SHAPE];
    let start = opts
        .start
        .map(|p| [p.scale().ln(), p.shape()])
        .filter(|x| ex.objective(x).is_finite())
        .unwrap_or(cold);

    let mut best = optim::minimize(|x| ex.objective(x), start, step, &simplex);
    let mut iterations = best.iterations;
    for jitter in RESTART_JITTER.iter().cycle().take(opts.restarts) {
        let mut from = [best.x[0] + jitter[0], best.x[1] + jitter[1]];
        if !ex.objective(&from).is_finite() {
            from = best.x;
        }
        let run = optim::minimize(|x| ex.objective(x), from, step, &simplex);
        iterations += run.iterations;
        if run.f < best.f || (run.f == best.f && run.converged && !best.converged) {
            best = run;
        }
    }

    if !best.f.is_finite() {
        return Err(Error::Numerical(
            "likelihood is infinite everywhere the simplex visited".into(),
        ));
    }
    let params = GpdParams::new(best.x[0].exp(), best.x[1])?;
    let at_boundary = params.shape() < SHAPE_LOWER + BOUNDARY_MARGIN
        || params.shape() > SHAPE_UPPER - BOUNDARY_MARGIN;
    Ok(GpdFit {
        params,
        neg_log_lik: best.f,
        n_excess: excesses.len(),
        converged: best.converged,
        at_boundary,
        iterations,
    })
}

/// Excesses `x − u` of the values strictly above `u`.
pub fn excesses_of(data: &[f64], u: f64) -> Vec<f64> {
    data.iter().filter(|&&x| x > u).map(|&x| x - u).collect()
}

/// Fitted tail model: `P(X > x) = λ_u (1 − H(x − u))` for `x > u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub threshold: f64,
    pub exceed_prob: f64,
    pub params: GpdParams,
    pub n_total: usize,
    pub n_excess: usize,
    pub neg_log_lik: f64,
    pub converged: bool,
}

impl ThresholdModel {
    /// Assemble a model from known parts.
    pub fn from_parts(
        threshold: f64,
        params: GpdParams,
        n_excess: usize,
        n_total: usize,
    ) -> Result<Self> {
        if n_excess == 0 || n_excess > n_total {
            return Err(Error::InvalidParameter(format!(
                "excess count {n_excess} incompatible with sample size {n_total}"
            )));
        }
        Ok(ThresholdModel {
            threshold,
            exceed_prob: n_excess as f64 / n_total as f64,
            params,
            n_total,
            n_excess,
            neg_log_lik: f64::NAN,
            converged: true,
        })
    }

    /// Level exceeded with probability `p`, for `0 < p < λ_u`.
    pub fn unconditional_quantile(&self, p: f64) -> Result<f64> {
        unconditional_quantile(self.threshold, self.exceed_prob, &self.params, p)
    }

    /// Level exceeded on average once per `period` years when
    /// `obs_per_year` observations are made each year.
    pub fn return_level(&self, period: f64, obs_per_year: f64) -> Result<f64> {
        self.unconditional_quantile(return_period_prob(period, obs_per_year)?)
    }
}

/// Per-observation exceedance probability of a `period`-year event.
pub fn return_period_prob(period: f64, obs_per_year: f64) -> Result<f64> {
    if !(period > 0.0 && obs_per_year > 0.0 && period.is_finite() && obs_per_year.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "return period {period} and observation rate {obs_per_year} must be positive"
        )));
    }
    Ok(1.0 / (period * obs_per_year))
}

/// `u + (σ/ξ)[(p/λ)^(−ξ) − 1]`, the exponential limit for small `ξ`.
pub fn unconditional_quantile(u: f64, lambda: f64, params: &GpdParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < lambda) {
        return Err(Error::InvalidProbability(p));
    }
    // conditional level e = -ln(p/λ) on the unit-exponential scale
    let e = -(p / lambda).ln();
    Ok(u + params.quantile_from_exp(e))
}

pub fn fit_threshold_model(data: &[f64], u: f64) -> Result<ThresholdModel> {
    fit_threshold_model_with(data, u, &FitOptions::default())
}

pub fn fit_threshold_model_with(data: &[f64], u: f64, opts: &FitOptions) -> Result<ThresholdModel> {
    let excesses = excesses_of(data, u);
    let required = opts.min_excess.max(2);
    if excesses.len() < required {
        return Err(Error::TooFewExcesses {
            threshold: u,
            got: excesses.len(),
            required,
        });
    }
    let fit = fit_gpd_with(&excesses, opts)?;
    Ok(ThresholdModel {
        threshold: u,
        exceed_prob: excesses.len() as f64 / data.len() as f64,
        params: fit.params,
        n_total: data.len(),
        n_excess: excesses.len(),
        neg_log_lik: fit.neg_log_lik,
        converged: fit.converged,
    })
}
