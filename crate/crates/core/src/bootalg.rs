//! Bootstrap uncertainty for tail summaries.
//!
//! * [`alg1`] – parametric bootstrap at a known threshold: simulate `n_u`
//!   excesses from the fitted GPD, refit, and evaluate the summary with the
//!   original `λ̂_u`.
//! * [`alg1b`] – as `alg1`, but each replicate draws its excess count from
//!   `Bin(n, λ̂_u)` and uses the matching `λ̂_u^(b)`.
//! * [`alg2`] – double bootstrap for an unknown threshold: resample the
//!   data, re-select the threshold, then run `alg1` on the resample.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empq::{resample_with_replacement, SortedSample};
use crate::eqd::{select_threshold_keyed, EqdConfig, GridSpec};
use crate::error::{Error, Result};
use crate::fit::{
    fit_gpd_with, fit_threshold_model_with, return_period_prob, unconditional_quantile,
    FitOptions, ThresholdModel,
};
use crate::gpd::GpdParams;
use crate::rng::SeedKey;

/// Resampling cap for binomial excess counts below the minimum fit size.
pub const BINOMIAL_RETRY_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpdParameter {
    Scale,
    Shape,
}

/// Summary statistic `s(u, λ, σ, ξ)` computed for every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummarySpec {
    /// Level exceeded with probability `p`.
    Quantile { p: f64 },
    /// `period`-year level given `obs_per_year` observations per year.
    ReturnLevel { period: f64, obs_per_year: f64 },
    Parameter(GpdParameter),
    Threshold,
    ExceedanceProb,
}

impl SummarySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SummarySpec::Quantile { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidProbability(p))
            }
            SummarySpec::ReturnLevel { period, obs_per_year } => {
                return_period_prob(period, obs_per_year).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, u: f64, lambda: f64, params: &GpdParams) -> Result<f64> {
        match *self {
            SummarySpec::Quantile { p } => unconditional_quantile(u, lambda, params, p),
            SummarySpec::ReturnLevel { period, obs_per_year } => {
                unconditional_quantile(u, lambda, params, return_period_prob(period, obs_per_year)?)
            }
            SummarySpec::Parameter(GpdParameter::Scale) => Ok(params.scale()),
            SummarySpec::Parameter(GpdParameter::Shape) => Ok(params.shape()),
            SummarySpec::Threshold => Ok(u),
            SummarySpec::ExceedanceProb => Ok(lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Alg1,
    Alg1b,
    Alg2,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg1b => "alg1b",
            Algorithm::Alg2 => "alg2",
        })
    }
}

/// Bootstrap distribution of one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub values: Vec<f64>,
    pub n_requested: usize,
    pub n_failed: usize,
    pub algorithm: Algorithm,
}

impl BootstrapSummary {
    fn collect(per_rep: &[Vec<Option<f64>>], n_specs: usize, algorithm: Algorithm) -> Vec<Self> {
        (0..n_specs)
            .map(|k| {
                let values: Vec<f64> = per_rep.iter().filter_map(|r| r[k]).collect();
                BootstrapSummary {
                    n_requested: per_rep.len(),
                    n_failed: per_rep.len() - values.len(),
                    values,
                    algorithm,
                }
            })
            .collect()
    }

    pub fn percentile_ci(&self, level: f64) -> Result<(f64, f64)> {
        percentile_ci(self, level)
    }
}

/// Equal-tailed percentile interval at confidence `level`.
pub fn percentile_ci(s: &BootstrapSummary, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidProbability(level));
    }
    match s.values.len() {
        0 => Err(Error::TooFewObservations { required: 1, got: 0 }),
        1 => Ok((s.values[0], s.values[0])),
        _ => {
            let sorted = SortedSample::new(s.values.clone())?;
            let lo = sorted.quantile_unchecked((1.0 - level) / 2.0);
            let hi = sorted.quantile_unchecked((1.0 + level) / 2.0);
            Ok((lo, hi))
        }
    }
}

/// Options shared by the bootstrap algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub fit: FitOptions,
    /// Resample the data in each outer `alg2` replicate. Turning this off
    /// reruns selection on the observed data and exists for testing.
    pub outer_resampling: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            fit: FitOptions::default(),
            outer_resampling: true,
        }
    }
}

fn evaluate_all(specs: &[SummarySpec], u: f64, lambda: f64, params: &GpdParams) -> Vec<Option<f64>> {
    specs
        .iter()
        .map(|s| s.evaluate(u, lambda, params).ok())
        .collect()
}

fn parametric_replicates(
    model: &ThresholdModel,
    n_reps: usize,
    specs: &[SummarySpec],
    key: SeedKey,
    fit: &FitOptions,
    binomial: bool,
) -> Result<Vec<Vec<Option<f64>>>> {
    let warm = fit.warm(model.params);
    let min_fit = fit.min_excess.max(2);
    let counts = if binomial {
        Some(Binomial::new(model.n_total as u64, model.exceed_prob).map_err(|e| {
            Error::InvalidParameter(format!("binomial excess count: {e}"))
        })?)
    } else {
        None
    };
    let failed = vec![None; specs.len()];
    Ok((0..n_reps)
        .into_par_iter()
        .map(|b| {
            let rep = key.child(b as u64);
            let mut rng = rep.stream();
            let (n_b, lambda) = match &counts {
                None => (model.n_excess, model.exceed_prob),
                Some(dist) => {
                    // counts come from their own substream, so replicate b
                    // of alg1 and alg1b share their excess draws
                    let mut count_rng = rep.child(0).stream();
                    let draw = (0..=BINOMIAL_RETRY_CAP)
                        .map(|_| dist.sample(&mut count_rng) as usize)
                        .find(|&c| c >= min_fit);
                    match draw {
                        Some(c) => (c, c as f64 / model.n_total as f64),
                        None => return failed.clone(),
                    }
                }
            };
            let sample = model.params.sample(n_b, &mut rng);
            match fit_gpd_with(&sample, &warm) {
                Ok(refit) => evaluate_all(specs, model.threshold, lambda, &refit.params),
                Err(_) => failed.clone(),
            }
        })
        .collect())
}

fn check_specs(specs: &[SummarySpec]) -> Result<()> {
    specs.iter().try_for_each(SummarySpec::validate)
}

/// Parametric bootstrap from an already fitted tail model, one summary per spec.
pub fn alg1_from_model(
    model: &ThresholdModel,
    b1: usize,
    specs: &[SummarySpec],
    key: SeedKey,
    opts: &BootstrapOptions,
) -> Result<Vec<BootstrapSummary>> {
    check_specs(specs)?;
    let reps = parametric_replicates(model, b1, specs, key, &opts.fit, false)?;
    Ok(BootstrapSummary::collect(&reps, specs.len(), Algorithm::Alg1))
}

pub fn alg1b_from_model(
    model: &ThresholdModel,
    b1: usize,
    specs: &[SummarySpec],
    key: SeedKey,
    opts: &BootstrapOptions,
) -> Result<Vec<BootstrapSummary>> {
    check_specs(specs)?;
    let reps = parametric_replicates(model, b1, specs, key, &opts.fit, true)?;
    Ok(BootstrapSummary::collect(&reps, specs.len(), Algorithm::Alg1b))
}

/// Parameter uncertainty at a known threshold `u`.
pub fn alg1(data: &[f64], u: f64, b1: usize, spec: SummarySpec, key: SeedKey) -> Result<BootstrapSummary> {
    let opts = BootstrapOptions::default();
    let model = fit_threshold_model_with(data, u, &opts.fit)?;
    Ok(alg1_from_model(&model, b1, &[spec], key, &opts)?.remove(0))
}

/// [`alg1`] with a binomial excess count per replicate.
pub fn alg1b(data: &[f64], u: f64, b1: usize, spec: SummarySpec, key: SeedKey) -> Result<BootstrapSummary> {
    let opts = BootstrapOptions::default();
    let model = fit_threshold_model_with(data, u, &opts.fit)?;
    Ok(alg1b_from_model(&model, b1, &[spec], key, &opts)?.remove(0))
}

/// Threshold plus parameter uncertainty via the double bootstrap.
///
/// Data-relative grid specs are re-resolved on every resample; raw-value
/// grids stay fixed. Outer replicate `b` uses `key.child(b).child(0)` for
/// selection and `key.child(b).child(1)` for its inner `alg1`.
#[allow(clippy::too_many_arguments)]
pub fn alg2_many(
    data: &[f64],
    grid: &GridSpec,
    cfg: &EqdConfig,
    b2: usize,
    b1: usize,
    specs: &[SummarySpec],
    key: SeedKey,
    opts: &BootstrapOptions,
) -> Result<Vec<BootstrapSummary>> {
    check_specs(specs)?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::TooFewObservations { required: 1, got: 0 });
    }
    let failed_block = vec![vec![None; specs.len()]; b1];
    let blocks: Vec<Vec<Vec<Option<f64>>>> = (0..b2)
        .into_par_iter()
        .map(|b| {
            let outer = key.child(b as u64);
            let run = || -> Result<Vec<Vec<Option<f64>>>> {
                let sample = if opts.outer_resampling {
                    resample_with_replacement(data, &mut outer.stream())?
                } else {
                    data.to_vec()
                };
                let candidates = grid.resolve(&sample)?;
                let sel = select_threshold_keyed(&sample, &candidates, cfg, outer.child(0))?;
                parametric_replicates(&sel.model, b1, specs, outer.child(1), &opts.fit, false)
            };
            run().unwrap_or_else(|_| failed_block.clone())
        })
        .collect();
    let flat: Vec<Vec<Option<f64>>> = blocks.into_iter().flatten().collect();
    Ok(BootstrapSummary::collect(&flat, specs.len(), Algorithm::Alg2))
}

#[allow(clippy::too_many_arguments)]
pub fn alg2(
    data: &[f64],
    grid: &GridSpec,
    cfg: &EqdConfig,
    b2: usize,
    b1: usize,
    spec: SummarySpec,
    key: SeedKey,
) -> Result<BootstrapSummary> {
    Ok(alg2_many(data, grid, cfg, b2, b1, &[spec], key, &BootstrapOptions::default())?.remove(0))
}
