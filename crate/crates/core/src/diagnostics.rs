//! Data behind the usual threshold diagnostics: parameter-stability
//! curves, QQ points with tolerance bounds, and return-level curves with
//! fixed- and selected-threshold bootstrap bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootalg::{
    alg1_from_model, alg2_many, percentile_ci, BootstrapOptions, GpdParameter, SummarySpec,
};
use crate::empq::SortedSample;
use crate::eqd::{select_threshold_keyed, CandidateGrid, EqdConfig, GridSpec, SkippedCandidate};
use crate::error::{Error, Result};
use crate::fit::{fit_threshold_model_with, FitOptions, ThresholdModel};
use crate::rng::SeedKey;

/// Smallest simulation count accepted by [`qq_data`].
pub const MIN_QQ_SIMULATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub threshold: f64,
    pub n_excess: usize,
    pub xi_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub rows: Vec<StabilityRow>,
    pub skipped: Vec<SkippedCandidate>,
}

/// Shape estimate and parametric-bootstrap interval at every candidate.
///
/// Candidate `i` draws from `key.child(i)`. Intervals are widened to
/// include the point estimate when bootstrap noise leaves it outside.
pub fn parameter_stability(
    data: &[f64],
    grid: &CandidateGrid,
    n_boot: usize,
    level: f64,
    fit: &FitOptions,
    key: SeedKey,
) -> Result<StabilityCurve> {
    if n_boot == 0 {
        return Err(Error::InvalidParameter("need at least one bootstrap replicate".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidProbability(level));
    }
    let opts = BootstrapOptions {
        fit: *fit,
        ..BootstrapOptions::default()
    };
    let spec = [SummarySpec::Parameter(GpdParameter::Shape)];
    let outcomes: Vec<std::result::Result<StabilityRow, SkippedCandidate>> = grid
        .thresholds()
        .par_iter()
        .enumerate()
        .map(|(index, &u)| {
            let skip = |e: Error| SkippedCandidate {
                index,
                threshold: u,
                reason: e.to_string(),
            };
            let model = fit_threshold_model_with(data, u, fit).map_err(skip)?;
            let boot = alg1_from_model(&model, n_boot, &spec, key.child(index as u64), &opts)
                .map_err(skip)?
                .remove(0);
            let (lo, hi) = percentile_ci(&boot, level).map_err(skip)?;
            let xi = model.params.shape();
            Ok(StabilityRow {
                threshold: u,
                n_excess: model.n_excess,
                xi_hat: xi,
                ci_lo: lo.min(xi),
                ci_hi: hi.max(xi),
            })
        })
        .collect();
    let mut curve = StabilityCurve {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(r) => curve.rows.push(r),
            Err(s) => curve.skipped.push(s),
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub model_q: f64,
    pub empirical_q: f64,
    pub tol_lo: f64,
    pub tol_hi: f64,
}

/// QQ points for the excesses against the fitted GPD, with pointwise
/// tolerance bounds from `n_sim` samples of the same size drawn from the
/// model. The i-th of `n` points sits at probability `i/(n+1)`, which keeps
/// the top model quantile finite.
pub fn qq_data(
    model: &ThresholdModel,
    excesses: &[f64],
    n_sim: usize,
    level: f64,
    key: SeedKey,
) -> Result<Vec<QqRow>> {
    if n_sim < MIN_QQ_SIMULATIONS {
        return Err(Error::InvalidParameter(format!(
            "{n_sim} simulations is too few for tolerance bounds (need {MIN_QQ_SIMULATIONS})"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidProbability(level));
    }
    if let Some(&bad) = excesses.iter().find(|&&y| !(y > 0.0 && y.is_finite())) {
        return Err(Error::OutsideSupport { value: bad });
    }
    let observed = SortedSample::new(excesses.to_vec())?;
    let n = observed.len();
    let g = model.params;

    let sims: Vec<Vec<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|b| {
            let mut s = g.sample(n, &mut key.child(b as u64).stream());
            s.sort_unstable_by(f64::total_cmp);
            s
        })
        .collect();

    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    (0..n)
        .map(|i| {
            let column = SortedSample::new(sims.iter().map(|s| s[i]).collect())?;
            Ok(QqRow {
                model_q: g.quantile((i + 1) as f64 / (n + 1) as f64)?,
                empirical_q: observed.values()[i],
                tol_lo: column.quantile_unchecked(lo_p),
                tol_hi: column.quantile_unchecked(hi_p),
            })
        })
        .collect()
}

/// Return periods `T` spaced evenly on a log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRange {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub obs_per_year: f64,
}

impl PeriodRange {
    pub fn periods(&self) -> Result<Vec<f64>> {
        if !(self.t_min > 0.0 && self.t_max >= self.t_min && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "period range [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if !(self.obs_per_year > 0.0 && self.obs_per_year.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "observations per year {}",
                self.obs_per_year
            )));
        }
        match self.n_points {
            0 => Err(Error::InvalidParameter("need at least one period".into())),
            1 => Ok(vec![self.t_min]),
            k => {
                let (a, b) = (self.t_min.ln(), self.t_max.ln());
                Ok((0..k)
                    .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelRow {
    pub period: f64,
    pub point: f64,
    pub alg1_lo: f64,
    pub alg1_hi: f64,
    pub alg2_lo: f64,
    pub alg2_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelCurve {
    pub threshold: f64,
    pub model: ThresholdModel,
    pub rows: Vec<ReturnLevelRow>,
}

/// Return levels at the selected threshold with bands for parameter
/// uncertainty alone and for parameter plus threshold uncertainty.
///
/// Selection uses `key.child(0)`, the fixed-threshold bootstrap
/// `key.child(1)` and the double bootstrap `key.child(2)`.
#[allow(clippy::too_many_arguments)]
pub fn return_level_curve(
    data: &[f64],
    grid: &GridSpec,
    cfg: &EqdConfig,
    range: &PeriodRange,
    b2: usize,
    b1: usize,
    level: f64,
    key: SeedKey,
) -> Result<ReturnLevelCurve> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidProbability(level));
    }
    let periods = range.periods()?;
    let candidates = grid.resolve(data)?;
    let sel = select_threshold_keyed(data, &candidates, cfg, key.child(0))?;
    let model = sel.model;
    let specs: Vec<SummarySpec> = periods
        .iter()
        .map(|&period| SummarySpec::ReturnLevel {
            period,
            obs_per_year: range.obs_per_year,
        })
        .collect();
    let points = specs
        .iter()
        .map(|s| s.evaluate(model.threshold, model.exceed_prob, &model.params))
        .collect::<Result<Vec<f64>>>()?;

    let opts = BootstrapOptions {
        fit: cfg.fit,
        ..BootstrapOptions::default()
    };
    let fixed = alg1_from_model(&model, b1, &specs, key.child(1), &opts)?;
    let double = alg2_many(data, grid, cfg, b2, b1, &specs, key.child(2), &opts)?;

    let rows = periods
        .iter()
        .zip(points)
        .zip(fixed.iter().zip(&double))
        .map(|((&period, point), (f, d))| {
            let (alg1_lo, alg1_hi) = percentile_ci(f, level)?;
            let (alg2_lo, alg2_hi) = percentile_ci(d, level)?;
            Ok(ReturnLevelRow {
                period,
                point,
                alg1_lo,
                alg1_hi,
                alg2_lo,
                alg2_hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnLevelCurve {
        threshold: model.threshold,
        model,
        rows,
    })
}
