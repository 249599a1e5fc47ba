//! Expected quantile discrepancy (EQD) threshold selection.
//!
//! For a candidate threshold `u` with excesses `x_u`, each bootstrap
//! replicate `x_u^b` is refitted and scored by the mean absolute gap
//! between fitted-model quantiles and sample quantiles at the evaluation
//! levels `p_j = j/(m+1)`:
//!
//! ```text
//! EQD:   d_b = (1/m) Σ_j | Q_GPD(p_j; σ̂_b, ξ̂_b) − Q(p_j; x_u^b) |
//! Varty: d_b = (1/m) Σ_j | −ln(1 − p_j) − Q(p_j; T(x_u^b; σ̂_b, ξ̂_b)) |
//! ```
//!
//! with `T` the probability-integral transform to unit-exponential margins.
//! `d_E(u)` is the mean of `d_b` over replicates, and the selected threshold
//! minimises `d_E` over the candidate grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empq::{resample_with_replacement, SortedSample};
use crate::error::{Error, Result};
use crate::fit::{excesses_of, fit_gpd_with, FitOptions, GpdFit, ThresholdModel};
use crate::gpd::GpdParams;
use crate::rng::SeedKey;

/// Which discrepancy branch to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Original data scale.
    Eqd,
    /// Unit-exponential margins.
    Varty,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eqd" => Ok(Variant::Eqd),
            "varty" => Ok(Variant::Varty),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

/// Sample whose quantiles the fitted model is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    /// The bootstrap sample the model was fitted to.
    BootstrapSample,
    /// The observed excesses, whatever sample the model was fitted to.
    ObservedSample,
}

/// How bootstrap samples of the excesses are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// Draw the observed excesses with replacement.
    Nonparametric,
    /// Simulate from the GPD fitted to the observed excesses.
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqdConfig {
    pub n_boot: usize,
    pub n_eval: usize,
    pub variant: Variant,
    pub calibration: Calibration,
    pub resampling: Resampling,
    /// When off, the metric is evaluated once on the observed excesses.
    pub use_bootstrap: bool,
    pub min_excess: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for EqdConfig {
    fn default() -> Self {
        EqdConfig {
            n_boot: 100,
            n_eval: 500,
            variant: Variant::Eqd,
            calibration: Calibration::BootstrapSample,
            resampling: Resampling::Nonparametric,
            use_bootstrap: true,
            min_excess: crate::fit::DEFAULT_MIN_EXCESS,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

impl EqdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 1 {
            return Err(Error::InvalidParameter("n_boot must be at least 1".into()));
        }
        if self.n_eval < 2 {
            return Err(Error::InvalidParameter("n_eval must be at least 2".into()));
        }
        if self.min_excess < self.fit.min_excess.max(2) {
            return Err(Error::InvalidParameter(format!(
                "min_excess {} below the minimum fit size {}",
                self.min_excess, self.fit.min_excess
            )));
        }
        Ok(())
    }
}

/// Ordered candidate thresholds, optionally tagged with the sample
/// probability each one was read off at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    thresholds: Vec<f64>,
    levels: Option<Vec<f64>>,
}

impl CandidateGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        Self::build(thresholds, None)
    }

    fn build(thresholds: Vec<f64>, levels: Option<Vec<f64>>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::GridSpec("candidate grid is empty".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::GridSpec("candidate thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GridSpec(
                "candidate thresholds must be strictly increasing".into(),
            ));
        }
        Ok(CandidateGrid { thresholds, levels })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Sample probability of each candidate, for quantile-based grids.
    pub fn levels(&self) -> Option<&[f64]> {
        self.levels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Every threshold multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::build(
            self.thresholds.iter().map(|t| t * c).collect(),
            self.levels.clone(),
        )
    }
}

/// Recipe for a candidate grid.
///
/// Text forms: `A(B)C` for sample quantiles at `A%, A+B%, …, C%`; a comma
/// list of percentages such as `0,10,40,70`; or `@v1,v2,…` for thresholds
/// given directly in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    Percent { start: f64, step: f64, end: f64 },
    Probabilities(Vec<f64>),
    Values(Vec<f64>),
}

impl GridSpec {
    /// Probabilities for quantile grids; `None` for raw values.
    pub fn probabilities(&self) -> Option<Vec<f64>> {
        match self {
            GridSpec::Percent { start, step, end } => {
                let count = ((end - start) / step + 1e-9).floor() as usize + 1;
                Some(
                    (0..count)
                        .map(|i| (start + i as f64 * step) / 100.0)
                        .collect(),
                )
            }
            GridSpec::Probabilities(p) => Some(p.clone()),
            GridSpec::Values(_) => None,
        }
    }

    /// Whether the grid follows the data it is resolved against.
    pub fn is_data_relative(&self) -> bool {
        !matches!(self, GridSpec::Values(_))
    }

    pub fn resolve(&self, data: &[f64]) -> Result<CandidateGrid> {
        quantile_grid(data, self)
    }
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::GridSpec(format!("'{}' is not a number", s.trim())))
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix('@') {
            let mut v = rest.split(',').map(parse_number).collect::<Result<Vec<_>>>()?;
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.is_empty() {
                return Err(Error::GridSpec("no thresholds given".into()));
            }
            return Ok(GridSpec::Values(v));
        }
        if let Some(open) = s.find('(') {
            let close = s
                .find(')')
                .filter(|&c| c > open)
                .ok_or_else(|| Error::GridSpec(format!("unbalanced parentheses in '{s}'")))?;
            let start = parse_number(&s[..open])?;
            let step = parse_number(&s[open + 1..close])?;
            let end = parse_number(&s[close + 1..])?;
            if step.is_nan() || step <= 0.0 {
                return Err(Error::GridSpec(format!("increment must be positive in '{s}'")));
            }
            if !(0.0 <= start && start <= end && end < 100.0) {
                return Err(Error::GridSpec(format!(
                    "need 0 <= start <= end < 100 in '{s}'"
                )));
            }
            return Ok(GridSpec::Percent { start, step, end });
        }
        let mut pct = s.split(',').map(parse_number).collect::<Result<Vec<_>>>()?;
        if pct.iter().any(|&p| !(0.0..100.0).contains(&p)) {
            return Err(Error::GridSpec(format!(
                "percentages must lie in [0, 100) in '{s}'"
            )));
        }
        pct.sort_by(f64::total_cmp);
        pct.dedup();
        Ok(GridSpec::Probabilities(pct.into_iter().map(|p| p / 100.0).collect()))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64], scale: f64| {
            v.iter()
                .map(|x| format!("{}", x * scale))
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            GridSpec::Percent { start, step, end } => write!(f, "{start}({step}){end}"),
            GridSpec::Probabilities(p) => write!(f, "{}", join(p, 100.0)),
            GridSpec::Values(v) => write!(f, "@{}", join(v, 1.0)),
        }
    }
}

/// Candidate thresholds as sample quantiles of `data`, duplicates dropped.
pub fn quantile_grid(data: &[f64], spec: &GridSpec) -> Result<CandidateGrid> {
    let probs = match spec.probabilities() {
        None => {
            if let GridSpec::Values(v) = spec {
                return CandidateGrid::new(v.clone());
            }
            unreachable!("only raw-value grids lack probabilities")
        }
        Some(p) => p,
    };
    if probs.is_empty() {
        return Err(Error::GridSpec("no probabilities given".into()));
    }
    if probs.iter().any(|p| !(0.0..1.0).contains(p)) {
        return Err(Error::GridSpec("probabilities must lie in [0, 1)".into()));
    }
    let sorted = SortedSample::new(data.to_vec())?;
    let mut thresholds = Vec::with_capacity(probs.len());
    let mut levels = Vec::with_capacity(probs.len());
    for &p in &probs {
        let t = sorted.quantile_unchecked(p);
        if thresholds.last().is_some_and(|&last: &f64| t <= last) {
            continue;
        }
        thresholds.push(t);
        levels.push(p);
    }
    CandidateGrid::build(thresholds, Some(levels))
}

/// `−ln(1 − H(x; σ, ξ))`: the excess `x` on unit-exponential margins.
pub fn exp_margin_transform(x: f64, p: &GpdParams) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::OutsideSupport { value: x });
    }
    let t = p.neg_log_survival_unchecked(x);
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::OutsideSupport { value: x })
    }
}

/// Evaluation levels `p_j = j/(m+1)`, stored as `−ln(1 − p_j)`.
#[derive(Debug, Clone)]
pub struct EvalLevels {
    probs: Vec<f64>,
    exp_levels: Vec<f64>,
}

impl EvalLevels {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter("need at least 2 evaluation levels".into()));
        }
        let d = (m + 1) as f64;
        let probs: Vec<f64> = (1..=m).map(|j| j as f64 / d).collect();
        let exp_levels = probs.iter().map(|&p| -(-p).ln_1p()).collect();
        Ok(EvalLevels { probs, exp_levels })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// One replicate's discrepancy between `fitted` and the calibration sample.
pub fn metric_d_b(
    calibration: &SortedSample,
    fitted: &GpdParams,
    m: usize,
    variant: Variant,
) -> Result<f64> {
    metric_with_levels(calibration, fitted, &EvalLevels::new(m)?, variant)
}

pub fn metric_with_levels(
    calibration: &SortedSample,
    fitted: &GpdParams,
    levels: &EvalLevels,
    variant: Variant,
) -> Result<f64> {
    if fitted.shape() <= -1.0 {
        return Err(Error::InvalidParameter(format!(
            "fitted shape {} is not above -1",
            fitted.shape()
        )));
    }
    let m = levels.probs.len() as f64;
    let total: f64 = match variant {
        Variant::Eqd => levels
            .probs
            .iter()
            .zip(&levels.exp_levels)
            .map(|(&p, &e)| (fitted.quantile_from_exp(e) - calibration.quantile_unchecked(p)).abs())
            .sum(),
        Variant::Varty => {
            // T is increasing, so the transformed sample stays sorted
            let transformed = calibration
                .values()
                .iter()
                .map(|&x| exp_margin_transform(x, fitted))
                .collect::<Result<Vec<_>>>()?;
            let t = SortedSample::new(transformed)?;
            levels
                .probs
                .iter()
                .zip(&levels.exp_levels)
                .map(|(&p, &e)| (e - t.quantile_unchecked(p)).abs())
                .sum()
        }
    };
    Ok(total / m)
}

/// Bootstrap-averaged discrepancy at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeEstimate {
    pub value: f64,
    pub n_success: usize,
    pub n_failed: usize,
    /// Per-replicate `d_b`, `None` for failed replicates.
    pub replicates: Vec<Option<f64>>,
    /// Fit to the observed excesses.
    pub fit: GpdFit,
}

/// `d_E(u)` for the excesses of `u` in `data`.
pub fn d_e(data: &[f64], u: f64, cfg: &EqdConfig, key: SeedKey) -> Result<DeEstimate> {
    cfg.validate()?;
    let excesses = excesses_of(data, u);
    if excesses.len() < cfg.min_excess {
        return Err(Error::TooFewExcesses {
            threshold: u,
            got: excesses.len(),
            required: cfg.min_excess,
        });
    }
    d_e_from_excesses(&excesses, cfg, &EvalLevels::new(cfg.n_eval)?, key)
}

fn d_e_from_excesses(
    excesses: &[f64],
    cfg: &EqdConfig,
    levels: &EvalLevels,
    key: SeedKey,
) -> Result<DeEstimate> {
    let fit_opts = FitOptions {
        min_excess: cfg.min_excess,
        ..cfg.fit
    };
    let fit = fit_gpd_with(excesses, &fit_opts)?;
    let observed = SortedSample::new(excesses.to_vec())?;

    let replicates: Vec<Option<f64>> = if cfg.use_bootstrap {
        let warm = fit_opts.warm(fit.params);
        (0..cfg.n_boot)
            .into_par_iter()
            .map(|b| {
                let mut rng = key.child(b as u64).stream();
                let sample = match cfg.resampling {
                    Resampling::Nonparametric => resample_with_replacement(excesses, &mut rng).ok()?,
                    Resampling::Parametric => fit.params.sample(excesses.len(), &mut rng),
                };
                let refit = fit_gpd_with(&sample, &warm).ok()?;
                let calib = match cfg.calibration {
                    Calibration::BootstrapSample => SortedSample::new(sample).ok()?,
                    Calibration::ObservedSample => observed.clone(),
                };
                metric_with_levels(&calib, &refit.params, levels, cfg.variant).ok()
            })
            .collect()
    } else {
        vec![metric_with_levels(&observed, &fit.params, levels, cfg.variant).ok()]
    };

    let ok: Vec<f64> = replicates.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllReplicatesFailed(replicates.len()));
    }
    let value = ok.iter().sum::<f64>() / ok.len() as f64;
    Ok(DeEstimate {
        value,
        n_success: ok.len(),
        n_failed: replicates.len() - ok.len(),
        replicates,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub index: usize,
    pub threshold: f64,
    pub d_e: f64,
    pub n_excess: usize,
    pub n_failed: usize,
    pub fit: GpdParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub index: usize,
    pub threshold: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub chosen: f64,
    /// Index into the candidate grid.
    pub chosen_index: usize,
    /// Sample probability of the chosen threshold, for quantile grids.
    pub chosen_level: Option<f64>,
    pub scores: Vec<CandidateScore>,
    pub skipped: Vec<SkippedCandidate>,
    /// Tail model fitted to the observed excesses of the chosen threshold.
    pub model: ThresholdModel,
}

impl ThresholdSelection {
    /// Candidates whose bootstrap failure rate exceeded 10%.
    pub fn unreliable_candidates(&self, n_boot: usize) -> impl Iterator<Item = &CandidateScore> {
        self.scores
            .iter()
            .filter(move |s| s.n_failed * 10 > n_boot)
    }
}

/// Index of the smallest finite value; the first one wins ties.
fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Pick the candidate minimising `d_E`, ties going to the lowest threshold.
pub fn select_threshold(data: &[f64], grid: &CandidateGrid, cfg: &EqdConfig) -> Result<ThresholdSelection> {
    select_threshold_keyed(data, grid, cfg, SeedKey::new(cfg.seed))
}

/// As [`select_threshold`], drawing candidate `i`'s replicates from `key.child(i)`.
pub fn select_threshold_keyed(
    data: &[f64],
    grid: &CandidateGrid,
    cfg: &EqdConfig,
    key: SeedKey,
) -> Result<ThresholdSelection> {
    cfg.validate()?;
    let levels = EvalLevels::new(cfg.n_eval)?;
    let outcomes: Vec<std::result::Result<(CandidateScore, GpdFit), SkippedCandidate>> = grid
        .thresholds
        .par_iter()
        .enumerate()
        .map(|(index, &u)| {
            let excesses = excesses_of(data, u);
            let skip = |reason: String| SkippedCandidate {
                index,
                threshold: u,
                reason,
            };
            if excesses.len() < cfg.min_excess {
                return Err(skip(format!(
                    "{} excesses, fewer than {}",
                    excesses.len(),
                    cfg.min_excess
                )));
            }
            let est = d_e_from_excesses(&excesses, cfg, &levels, key.child(index as u64))
                .map_err(|e| skip(e.to_string()))?;
            Ok((
                CandidateScore {
                    index,
                    threshold: u,
                    d_e: est.value,
                    n_excess: excesses.len(),
                    n_failed: est.n_failed,
                    fit: est.fit.params,
                },
                est.fit,
            ))
        })
        .collect();

    let mut scores = Vec::new();
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok((s, f)) => {
                scores.push(s);
                fits.push(f);
            }
            Err(s) => skipped.push(s),
        }
    }

    let d: Vec<f64> = scores.iter().map(|s| s.d_e).collect();
    let k = argmin_first(&d).ok_or(Error::NoFeasibleCandidate)?;
    let chosen = &scores[k];
    let fit = &fits[k];
    let model = ThresholdModel {
        threshold: chosen.threshold,
        exceed_prob: chosen.n_excess as f64 / data.len() as f64,
        params: fit.params,
        n_total: data.len(),
        n_excess: chosen.n_excess,
        neg_log_lik: fit.neg_log_lik,
        converged: fit.converged,
    };
    Ok(ThresholdSelection {
        chosen: chosen.threshold,
        chosen_index: chosen.index,
        chosen_level: grid.levels().map(|l| l[chosen.index]),
        scores,
        skipped,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(scale: f64, shape: f64) -> GpdParams {
        GpdParams::new(scale, shape).unwrap()
    }

    #[test]
    fn transform_examples() {
        assert!((exp_margin_transform(1.7, &p(0.5, 0.0)).unwrap() - 3.4).abs() < 1e-15);
        assert_eq!(exp_margin_transform(0.0, &p(0.5, 0.3)).unwrap(), 0.0);
        let t = exp_margin_transform(1.0, &p(0.5, 0.1)).unwrap();
        assert!((t - 10.0 * 1.2f64.ln()).abs() < 1e-14);
        assert!((t + (1.0 - 0.838494417110154f64).ln()).abs() < 1e-9);
        assert!(exp_margin_transform(4.0, &p(1.0, -0.5)).is_err());
    }

    #[test]
    fn grid_spec_parsing() {
        let g: GridSpec = "0(1)93".parse().unwrap();
        assert_eq!(g.probabilities().unwrap().len(), 94);
        let g: GridSpec = "0(5)95".parse().unwrap();
        assert_eq!(g.probabilities().unwrap().len(), 20);
        let g: GridSpec = "50(5)95".parse().unwrap();
        assert_eq!(g.probabilities().unwrap().len(), 10);
        let g: GridSpec = "50(0.5)95".parse().unwrap();
        let probs = g.probabilities().unwrap();
        assert_eq!(probs.len(), 91);
        assert!((probs[90] - 0.95).abs() < 1e-12);
        let g: GridSpec = "0,10,40,70".parse().unwrap();
        assert_eq!(g, GridSpec::Probabilities(vec![0.0, 0.1, 0.4, 0.7]));
        let g: GridSpec = "@2.5,1".parse().unwrap();
        assert_eq!(g, GridSpec::Values(vec![1.0, 2.5]));
        for bad in ["", "5(0)10", "10(1)5", "0(1)100", "a(1)3", "0(1", "0,101", "@"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad} parsed");
        }
    }

    #[test]
    fn quantile_grid_on_distinct_data() {
        let data: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let grid = quantile_grid(&data, &"0(5)95".parse().unwrap()).unwrap();
        assert_eq!(grid.len(), 20);
        assert_eq!(grid.thresholds()[0], 0.0);
        assert!((grid.thresholds()[19] - 949.05).abs() < 1e-9);
    }

    #[test]
    fn quantile_grid_drops_duplicates() {
        let data = vec![1.0, 1.0, 1.0, 1.0, 2.0];
        let grid = quantile_grid(&data, &"0(25)75".parse().unwrap()).unwrap();
        assert_eq!(grid.thresholds(), &[1.0]);
        assert_eq!(grid.levels().unwrap(), &[0.0]);
    }

    #[test]
    fn metric_is_zero_for_perfect_fit() {
        // sample equal to model quantiles at its own plotting points, with
        // the evaluation levels landing on the interior plotting points
        let fitted = p(0.5, 0.1);
        let n = 12;
        let values: Vec<f64> = (0..n)
            .map(|i| fitted.quantile_inclusive(i as f64 / (n - 1) as f64).unwrap_or(0.0))
            .collect();
        // the top point is infinite for ξ >= 0; replace with any larger value
        let mut values = values;
        values[n - 1] = 1e6;
        let s = SortedSample::new(values).unwrap();
        let m = n - 2;
        assert!(metric_d_b(&s, &fitted, m, Variant::Eqd).unwrap() < 1e-12);
    }

    #[test]
    fn metric_three_point_example() {
        let s = SortedSample::new(vec![1.1, 0.1, 0.4]).unwrap();
        let fitted = p(0.5, 0.1);
        let eqd = metric_d_b(&s, &fitted, 4, Variant::Eqd).unwrap();
        let varty = metric_d_b(&s, &fitted, 4, Variant::Varty).unwrap();
        assert!((eqd - 0.07460719373787945).abs() < 1e-12, "{eqd}");
        assert!((varty - 0.13839306176164376).abs() < 1e-12, "{varty}");

        // interpolated sample quantiles at 0.2, 0.4, 0.6, 0.8
        let sample_q = [0.22, 0.34, 0.54, 0.82];
        let brute: f64 = sample_q
            .iter()
            .enumerate()
            .map(|(j, &q)| (fitted.quantile((j + 1) as f64 / 5.0).unwrap() - q).abs())
            .sum::<f64>()
            / 4.0;
        assert!((eqd - brute).abs() < 1e-12);
    }

    #[test]
    fn branches_agree_for_unit_exponential() {
        // T is the identity for (1, 0), so both branches coincide
        let s = SortedSample::new(vec![0.3, 0.05, 2.2, 1.0, 0.7]).unwrap();
        let e = p(1.0, 0.0);
        let a = metric_d_b(&s, &e, 9, Variant::Eqd).unwrap();
        let b = metric_d_b(&s, &e, 9, Variant::Varty).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn metric_scales_with_data_in_eqd_branch() {
        let v = vec![0.3, 0.05, 2.2, 1.0, 0.7, 0.4];
        let s = SortedSample::new(v.clone()).unwrap();
        let s3 = SortedSample::new(v.iter().map(|x| 3.0 * x).collect()).unwrap();
        let a = metric_d_b(&s, &p(0.8, 0.2), 20, Variant::Eqd).unwrap();
        let b = metric_d_b(&s3, &p(2.4, 0.2), 20, Variant::Eqd).unwrap();
        assert!((3.0 * a - b).abs() < 1e-12);
        let a = metric_d_b(&s, &p(0.8, 0.2), 20, Variant::Varty).unwrap();
        let b = metric_d_b(&s3, &p(2.4, 0.2), 20, Variant::Varty).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_the_lowest_threshold() {
        assert_eq!(argmin_first(&[0.3, 0.1, 0.1, 0.2]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN, 0.5, f64::INFINITY]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN]), None);
        assert_eq!(argmin_first(&[]), None);
    }

    #[test]
    fn without_bootstrap_one_replicate_on_observed_data() {
        let data = p(1.0, 0.1).sample(150, &mut SeedKey::new(8).stream());
        let cfg = EqdConfig {
            use_bootstrap: false,
            n_eval: 100,
            ..EqdConfig::default()
        };
        let est = d_e(&data, 0.2, &cfg, SeedKey::new(1)).unwrap();
        assert_eq!(est.replicates.len(), 1);
        let obs = SortedSample::new(excesses_of(&data, 0.2)).unwrap();
        let direct = metric_d_b(&obs, &est.fit.params, 100, Variant::Eqd).unwrap();
        assert_eq!(est.value, direct);
        // the key is irrelevant without resampling
        assert_eq!(d_e(&data, 0.2, &cfg, SeedKey::new(99)).unwrap().value, est.value);
    }

    #[test]
    fn selection_is_reproducible() {
        let data = p(1.0, 0.1).sample(300, &mut SeedKey::new(5).stream());
        let grid = quantile_grid(&data, &"0(10)80".parse().unwrap()).unwrap();
        let cfg = EqdConfig {
            n_boot: 20,
            n_eval: 100,
            seed: 17,
            ..EqdConfig::default()
        };
        let a = select_threshold(&data, &grid, &cfg).unwrap();
        let b = select_threshold(&data, &grid, &cfg).unwrap();
        assert_eq!(a, b);
        let c = select_threshold(&data, &grid, &EqdConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a.scores[0].d_e, c.scores[0].d_e);
    }

    #[test]
    fn metric_rejects_shape_below_minus_one() {
        let s = SortedSample::new(vec![0.1, 0.2, 0.3]).unwrap();
        assert!(metric_d_b(&s, &p(1.0, -1.0), 5, Variant::Eqd).is_err());
    }

    #[test]
    fn single_candidate_is_chosen() {
        let data: Vec<f64> = p(1.0, 0.1)
            .sample(200, &mut SeedKey::new(4).stream());
        let grid = CandidateGrid::new(vec![0.05]).unwrap();
        let cfg = EqdConfig {
            n_boot: 5,
            n_eval: 50,
            ..EqdConfig::default()
        };
        let sel = select_threshold(&data, &grid, &cfg).unwrap();
        assert_eq!(sel.chosen, 0.05);
        assert_eq!(sel.chosen_index, 0);
        assert!(sel.chosen_level.is_none());
    }

    #[test]
    fn all_candidates_skipped() {
        let data = vec![1.0, 2.0, 3.0];
        let grid = CandidateGrid::new(vec![0.0, 1.0]).unwrap();
        let err = select_threshold(&data, &grid, &EqdConfig::default()).unwrap_err();
        assert_eq!(err, Error::NoFeasibleCandidate);
    }

    #[test]
    fn config_validation() {
        let bad = [
            EqdConfig { n_boot: 0, ..EqdConfig::default() },
            EqdConfig { n_eval: 1, ..EqdConfig::default() },
            EqdConfig { min_excess: 5, ..EqdConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
