//! Monte Carlo studies of threshold selection on the simulation cases.
//!
//! Replicate `r` draws its sample from `key.child(r).child(0)` and its
//! selection from `key.child(r).child(1)`; bootstrap algorithms use
//! children 2–4. Reports are therefore identical for any worker count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootalg::{
    alg1_from_model, alg1b_from_model, alg2_many, percentile_ci, Algorithm, BootstrapOptions,
    BootstrapSummary, SummarySpec,
};
use crate::eqd::{select_threshold_keyed, EqdConfig, GridSpec, Variant};
use crate::error::{Error, Result};
use crate::fit::ThresholdModel;
use crate::rng::SeedKey;
use crate::simcases::{simulate_case, true_quantile, CaseId, CaseSpec, TRUE_THRESHOLD};

/// Exceedance probability `1/(10^j n)`.
pub fn p_jn(j: u32, n: usize) -> f64 {
    1.0 / (10f64.powi(j as i32) * n as f64)
}

/// Sizes of a study run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 100 replicates, B = 50, B1 = B2 = 100.
    Desk,
    /// 500 replicates, B = 100, B1 = B2 = 200.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub n_reps: usize,
    pub cfg: EqdConfig,
    pub b1: usize,
    pub b2: usize,
    pub grid: GridSpec,
}

impl Preset {
    pub fn settings(self, case: &CaseSpec) -> StudySettings {
        let (n_reps, n_boot, b) = match self {
            Preset::Desk => (100, 50, 100),
            Preset::Full => (500, 100, 200),
        };
        StudySettings {
            n_reps,
            cfg: EqdConfig {
                n_boot,
                ..EqdConfig::default()
            },
            b1: b,
            b2: b,
            grid: case.default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub case: CaseId,
    pub method: String,
    /// `threshold` or `quantile_j{j}`.
    pub target: String,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
    pub n_replicates: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub case: CaseId,
    pub algorithm: Algorithm,
    pub level: f64,
    pub j: u32,
    pub coverage: f64,
    /// Mean over replicates of this algorithm's interval width over Alg1's.
    pub width_ratio: Option<f64>,
    pub n_replicates: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub errors: Vec<ErrorRow>,
    pub coverage: Vec<CoverageRow>,
}

impl StudyReport {
    pub fn error_row(&self, target: &str) -> Option<&ErrorRow> {
        self.errors.iter().find(|r| r.target == target)
    }

    pub fn coverage_row(&self, algorithm: Algorithm, level: f64, j: u32) -> Option<&CoverageRow> {
        self.coverage
            .iter()
            .find(|r| r.algorithm == algorithm && r.level == level && r.j == j)
    }
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.errors.is_empty() {
            writeln!(
                f,
                "{:<9} {:<8} {:<12} {:>10} {:>10} {:>10} {:>6} {:>6}",
                "case", "method", "target", "rmse", "bias", "variance", "reps", "failed"
            )?;
            for r in &self.errors {
                writeln!(
                    f,
                    "{:<9} {:<8} {:<12} {:>10.4} {:>10.4} {:>10.4} {:>6} {:>6}",
                    r.case.to_string(),
                    r.method,
                    r.target,
                    r.rmse,
                    r.bias,
                    r.variance,
                    r.n_replicates,
                    r.n_failed
                )?;
            }
        }
        if !self.coverage.is_empty() {
            if !self.errors.is_empty() {
                writeln!(f)?;
            }
            writeln!(
                f,
                "{:<9} {:<6} {:>6} {:>3} {:>9} {:>8} {:>6} {:>6}",
                "case", "alg", "level", "j", "coverage", "ratio", "reps", "failed"
            )?;
            for r in &self.coverage {
                let ratio = r.width_ratio.map_or("-".to_string(), |v| format!("{v:.4}"));
                writeln!(
                    f,
                    "{:<9} {:<6} {:>6.2} {:>3} {:>9.4} {:>8} {:>6} {:>6}",
                    r.case.to_string(),
                    r.algorithm.to_string(),
                    r.level,
                    r.j,
                    r.coverage,
                    ratio,
                    r.n_replicates,
                    r.n_failed
                )?;
            }
        }
        Ok(())
    }
}

/// `(rmse, bias, variance)` of `errors`, with variance divided by N so that
/// `rmse² = bias² + variance`.
pub fn error_summary(errors: &[f64]) -> Option<(f64, f64, f64)> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / n;
    let variance = errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / n;
    Some(((bias * bias + variance).sqrt(), bias, variance))
}

fn method_label(cfg: &EqdConfig) -> String {
    let base = match cfg.variant {
        Variant::Eqd => "eqd",
        Variant::Varty => "varty",
    };
    if cfg.use_bootstrap {
        base.to_string()
    } else {
        format!("{base}-noboot")
    }
}

fn error_row(case: CaseId, method: &str, target: String, errs: &[Option<f64>]) -> ErrorRow {
    let ok: Vec<f64> = errs.iter().flatten().copied().collect();
    let (rmse, bias, variance) = error_summary(&ok).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    ErrorRow {
        case,
        method: method.to_string(),
        target,
        rmse,
        bias,
        variance,
        n_replicates: errs.len(),
        n_failed: errs.len() - ok.len(),
    }
}

/// Error rows for a custom selector returning the fitted tail model.
/// `with_threshold` adds a threshold row; `js` adds one quantile row each.
#[allow(clippy::too_many_arguments)]
pub fn selection_study_with<F>(
    case: &CaseSpec,
    n_reps: usize,
    with_threshold: bool,
    js: &[u32],
    method: &str,
    key: SeedKey,
    select: F,
) -> Result<StudyReport>
where
    F: Fn(&[f64], SeedKey) -> Result<ThresholdModel> + Sync,
{
    case.validate()?;
    if with_threshold && !case.has_true_threshold() {
        return Err(Error::InvalidParameter(format!("{} has no true threshold", case.id)));
    }
    let n = case.n_total();
    let probs: Vec<f64> = js.iter().map(|&j| p_jn(j, n)).collect();
    let truths = probs
        .iter()
        .map(|&p| true_quantile(case, p))
        .collect::<Result<Vec<f64>>>()?;

    let per_rep: Vec<Option<(f64, Vec<Option<f64>>)>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let rep = key.child(r as u64);
            let data = simulate_case(case, &mut rep.child(0).stream()).ok()?;
            let model = select(&data, rep.child(1)).ok()?;
            let q = probs
                .iter()
                .zip(&truths)
                .map(|(&p, &t)| model.unconditional_quantile(p).ok().map(|x| x - t))
                .collect();
            Some((model.threshold - TRUE_THRESHOLD, q))
        })
        .collect();

    let mut report = StudyReport::default();
    if with_threshold {
        let errs: Vec<Option<f64>> = per_rep.iter().map(|r| r.as_ref().map(|r| r.0)).collect();
        report.errors.push(error_row(case.id, method, "threshold".into(), &errs));
    }
    for (k, &j) in js.iter().enumerate() {
        let errs: Vec<Option<f64>> = per_rep
            .iter()
            .map(|r| r.as_ref().and_then(|r| r.1[k]))
            .collect();
        report.errors.push(error_row(case.id, method, format!("quantile_j{j}"), &errs));
    }
    Ok(report)
}

fn eqd_selector<'a>(
    grid: &'a GridSpec,
    cfg: &'a EqdConfig,
) -> impl Fn(&[f64], SeedKey) -> Result<ThresholdModel> + Sync + 'a {
    move |data, key| {
        let candidates = grid.resolve(data)?;
        Ok(select_threshold_keyed(data, &candidates, cfg, key)?.model)
    }
}

/// Threshold and quantile errors from one pass of selections.
pub fn selection_study(
    case: &CaseSpec,
    n_reps: usize,
    js: &[u32],
    grid: &GridSpec,
    cfg: &EqdConfig,
    key: SeedKey,
) -> Result<StudyReport> {
    cfg.validate()?;
    let method = method_label(cfg);
    selection_study_with(
        case,
        n_reps,
        case.has_true_threshold(),
        js,
        &method,
        key,
        eqd_selector(grid, cfg),
    )
}

/// RMSE, bias and variance of the selected threshold.
pub fn threshold_study(
    case: &CaseSpec,
    n_reps: usize,
    grid: &GridSpec,
    cfg: &EqdConfig,
    key: SeedKey,
) -> Result<StudyReport> {
    cfg.validate()?;
    selection_study_with(case, n_reps, true, &[], &method_label(cfg), key, eqd_selector(grid, cfg))
}

/// RMSE, bias and variance of the `(1 − p_{j,n})`-quantile estimates.
pub fn quantile_study(
    case: &CaseSpec,
    n_reps: usize,
    js: &[u32],
    grid: &GridSpec,
    cfg: &EqdConfig,
    key: SeedKey,
) -> Result<StudyReport> {
    cfg.validate()?;
    selection_study_with(case, n_reps, false, js, &method_label(cfg), key, eqd_selector(grid, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSettings {
    pub algorithms: Vec<Algorithm>,
    pub levels: Vec<f64>,
    pub js: Vec<u32>,
    pub b1: usize,
    pub b2: usize,
}

/// Per replicate, per algorithm: interval per (level, j), or `None`.
type RepIntervals = Vec<Option<Vec<Vec<(f64, f64)>>>>;

/// Coverage of the true quantiles by percentile intervals from each
/// algorithm, and the mean width ratio against Alg1.
pub fn coverage_study(
    case: &CaseSpec,
    n_reps: usize,
    settings: &CoverageSettings,
    grid: &GridSpec,
    cfg: &EqdConfig,
    key: SeedKey,
) -> Result<StudyReport> {
    case.validate()?;
    cfg.validate()?;
    if let Some(&l) = settings.levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::InvalidProbability(l));
    }
    let n = case.n_total();
    let specs: Vec<SummarySpec> = settings
        .js
        .iter()
        .map(|&j| SummarySpec::Quantile { p: p_jn(j, n) })
        .collect();
    let truths = settings
        .js
        .iter()
        .map(|&j| true_quantile(case, p_jn(j, n)))
        .collect::<Result<Vec<f64>>>()?;
    let opts = BootstrapOptions {
        fit: cfg.fit,
        ..BootstrapOptions::default()
    };

    let intervals = |boots: Vec<BootstrapSummary>| -> Option<Vec<Vec<(f64, f64)>>> {
        settings
            .levels
            .iter()
            .map(|&level| boots.iter().map(|b| percentile_ci(b, level).ok()).collect())
            .collect()
    };

    let per_rep: Vec<RepIntervals> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let rep = key.child(r as u64);
            let none = vec![None; settings.algorithms.len()];
            let Ok(data) = simulate_case(case, &mut rep.child(0).stream()) else {
                return none;
            };
            let selection = grid
                .resolve(&data)
                .and_then(|c| select_threshold_keyed(&data, &c, cfg, rep.child(1)));
            let Ok(sel) = selection else {
                return none;
            };
            settings
                .algorithms
                .iter()
                .map(|alg| {
                    let boots = match alg {
                        Algorithm::Alg1 => {
                            alg1_from_model(&sel.model, settings.b1, &specs, rep.child(2), &opts)
                        }
                        Algorithm::Alg1b => {
                            alg1b_from_model(&sel.model, settings.b1, &specs, rep.child(3), &opts)
                        }
                        Algorithm::Alg2 => alg2_many(
                            &data,
                            grid,
                            cfg,
                            settings.b2,
                            settings.b1,
                            &specs,
                            rep.child(4),
                            &opts,
                        ),
                    };
                    boots.ok().and_then(intervals)
                })
                .collect()
        })
        .collect();

    let alg1_pos = settings.algorithms.iter().position(|&a| a == Algorithm::Alg1);
    let mut report = StudyReport::default();
    for (a, &alg) in settings.algorithms.iter().enumerate() {
        for (l, &level) in settings.levels.iter().enumerate() {
            for (k, &j) in settings.js.iter().enumerate() {
                let ci = |rep: &RepIntervals, a: usize| rep[a].as_ref().map(|v| v[l][k]);
                let got: Vec<(f64, f64)> = per_rep.iter().filter_map(|r| ci(r, a)).collect();
                let covered = got
                    .iter()
                    .filter(|(lo, hi)| *lo <= truths[k] && truths[k] <= *hi)
                    .count();
                let width_ratio = alg1_pos.and_then(|b| {
                    let ratios: Vec<f64> = per_rep
                        .iter()
                        .filter_map(|r| Some((ci(r, a)?, ci(r, b)?)))
                        .filter(|(_, base)| base.1 > base.0)
                        .map(|(x, base)| (x.1 - x.0) / (base.1 - base.0))
                        .collect();
                    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
                });
                report.coverage.push(CoverageRow {
                    case: case.id,
                    algorithm: alg,
                    level,
                    j,
                    coverage: if got.is_empty() {
                        f64::NAN
                    } else {
                        covered as f64 / got.len() as f64
                    },
                    width_ratio,
                    n_replicates: n_reps,
                    n_failed: n_reps - got.len(),
                });
            }
        }
    }
    Ok(report)
}

/// Everything the study command reports for a case at a preset size:
/// selection errors for j ∈ {0, 1, 2} and, unless `skip_coverage`,
/// coverage of all three algorithms at the 50/80/95% levels.
pub fn run_preset(
    case: &CaseSpec,
    settings: &StudySettings,
    skip_coverage: bool,
    key: SeedKey,
) -> Result<StudyReport> {
    let js = [0, 1, 2];
    let mut report = selection_study(case, settings.n_reps, &js, &settings.grid, &settings.cfg, key.child(0))?;
    if !skip_coverage {
        let cov = CoverageSettings {
            algorithms: vec![Algorithm::Alg1, Algorithm::Alg1b, Algorithm::Alg2],
            levels: vec![0.5, 0.8, 0.95],
            js: js.to_vec(),
            b1: settings.b1,
            b2: settings.b2,
        };
        report.coverage =
            coverage_study(case, settings.n_reps, &cov, &settings.grid, &settings.cfg, key.child(1))?
                .coverage;
    }
    Ok(report)
}
