//! `eqd`: automated threshold selection and tail uncertainty for
//! peaks-over-threshold analyses.

mod input;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use eqd_core::bootalg::{
    alg1_from_model, alg1b_from_model, alg2_many, percentile_ci, Algorithm, BootstrapOptions,
    SummarySpec,
};
use eqd_core::diagnostics::{parameter_stability, qq_data, return_level_curve, PeriodRange};
use eqd_core::eqd::{
    select_threshold_keyed, Calibration, EqdConfig, GridSpec, Resampling, ThresholdSelection,
    Variant,
};
use eqd_core::fit::{excesses_of, fit_threshold_model_with, FitOptions, ThresholdModel};
use eqd_core::rng::SeedKey;
use eqd_core::simcases::{simulate_case, CaseId, CaseSpec};
use eqd_core::study::{run_preset, Preset};
use eqd_core::Error as CoreError;

use output::{emit, Cell, Format, Table};

#[derive(Parser)]
#[command(name = "eqd", version, about = "Automated GPD threshold selection via expected quantile discrepancy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; all randomness derives from it.
    #[arg(long, env = "EQD_SEED", default_value_t = 0, global = true)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: Format,
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct SelectOpts {
    /// Candidate grid: "A(B)C" percent range, "p1,p2,..." percents, or "@v1,v2,..." values.
    #[arg(long, default_value = "0(5)95")]
    grid: String,
    /// Bootstrap replicates per candidate.
    #[arg(long = "b", visible_alias = "B", default_value_t = 100)]
    b: usize,
    /// Number of evaluation levels.
    #[arg(long = "m", default_value_t = 500)]
    m: usize,
    #[arg(long, value_enum, default_value = "eqd")]
    variant: VariantArg,
    #[arg(long, default_value_t = 10)]
    min_excess: usize,
    /// Evaluate the metric once on the observed excesses.
    #[arg(long)]
    no_bootstrap: bool,
    /// Compare fitted quantiles with the observed excesses rather than the resample.
    #[arg(long)]
    observed_calibration: bool,
    /// Simulate bootstrap samples from the fitted GPD.
    #[arg(long)]
    parametric: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Eqd,
    Varty,
}

impl SelectOpts {
    fn grid(&self) -> Result<GridSpec> {
        Ok(self.grid.parse::<GridSpec>()?)
    }

    fn config(&self, seed: u64) -> EqdConfig {
        EqdConfig {
            n_boot: self.b,
            n_eval: self.m,
            variant: match self.variant {
                VariantArg::Eqd => Variant::Eqd,
                VariantArg::Varty => Variant::Varty,
            },
            calibration: if self.observed_calibration {
                Calibration::ObservedSample
            } else {
                Calibration::BootstrapSample
            },
            resampling: if self.parametric {
                Resampling::Parametric
            } else {
                Resampling::Nonparametric
            },
            use_bootstrap: !self.no_bootstrap,
            min_excess: self.min_excess,
            seed,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgArg {
    #[value(name = "1")]
    One,
    #[value(name = "1b")]
    OneB,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagKind {
    Stability,
    Qq,
    RlCurve,
}

#[derive(Subcommand)]
enum Command {
    /// Choose a threshold from a candidate grid.
    Select {
        input: PathBuf,
        #[command(flatten)]
        sel: SelectOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the GPD above a given threshold.
    Fit {
        input: PathBuf,
        #[arg(long, short = 'u')]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        min_excess: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Return levels (or quantiles) with bootstrap intervals.
    Rl {
        input: PathBuf,
        #[command(flatten)]
        sel: SelectOpts,
        /// Fixed threshold for algorithms 1 and 1b; selected with EQD when absent.
        #[arg(long, short = 'u')]
        threshold: Option<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "1")]
        alg: Vec<AlgArg>,
        /// Return periods in years.
        #[arg(long = "periods", visible_alias = "T", value_delimiter = ',')]
        periods: Vec<f64>,
        /// Per-observation exceedance probabilities.
        #[arg(long = "probs", value_delimiter = ',')]
        probs: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        obs_per_year: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.95")]
        level: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        b1: usize,
        #[arg(long, default_value_t = 200)]
        b2: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a sample from a simulation case.
    Simulate {
        /// case0 .. case8, or gaussian.
        case: String,
        #[arg(long)]
        n_below: Option<usize>,
        #[arg(long)]
        n_above: Option<usize>,
        /// Sample size for the Gaussian case.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Diagnostic data: stability curve, QQ points or return-level curve.
    Diag {
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: DiagKind,
        #[command(flatten)]
        sel: SelectOpts,
        /// Threshold for the QQ plot; selected with EQD when absent.
        #[arg(long, short = 'u')]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 200)]
        b1: usize,
        #[arg(long, default_value_t = 200)]
        b2: usize,
        /// Simulated samples behind the QQ tolerance bounds.
        #[arg(long, default_value_t = 200)]
        n_sim: usize,
        /// Shortest return period; must exceed 1/(obs_per_year · exceedance
        /// probability of the selected threshold).
        #[arg(long, default_value_t = 10.0)]
        t_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        t_max: f64,
        #[arg(long, default_value_t = 20)]
        n_points: usize,
        #[arg(long, default_value_t = 1.0)]
        obs_per_year: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a packaged simulation study.
    Study {
        case: String,
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Override the preset's replicate count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the Gaussian sample size.
        #[arg(long)]
        n: Option<usize>,
        /// Only the threshold and quantile error tables.
        #[arg(long)]
        no_coverage: bool,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Select { common, .. }
            | Command::Fit { common, .. }
            | Command::Rl { common, .. }
            | Command::Simulate { common, .. }
            | Command::Diag { common, .. }
            | Command::Study { common, .. } => common,
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CoreError>()) {
        None => 2,
        Some(e) => match e {
            CoreError::Numerical(_)
            | CoreError::AllReplicatesFailed(_)
            | CoreError::NoFeasibleCandidate
            | CoreError::OutsideSupport { .. } => 3,
            CoreError::InvalidParameter(_)
            | CoreError::InvalidProbability(_)
            | CoreError::GridSpec(_)
            | CoreError::TooFewObservations { .. }
            | CoreError::TooFewExcesses { .. } => 4,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.command.common().threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("eqd: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eqd: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Select { input, sel, common } => cmd_select(&input, &sel, &common),
        Command::Fit {
            input,
            threshold,
            min_excess,
            common,
        } => cmd_fit(&input, threshold, min_excess, &common),
        Command::Rl {
            input,
            sel,
            threshold,
            alg,
            periods,
            probs,
            obs_per_year,
            level,
            b1,
            b2,
            common,
        } => cmd_rl(
            &input,
            &sel,
            &RlArgs {
                threshold,
                algorithms: alg,
                periods,
                probs,
                obs_per_year,
                levels: level,
                b1,
                b2,
            },
            &common,
        ),
        Command::Simulate {
            case,
            n_below,
            n_above,
            n,
            sigma,
            xi,
            common,
        } => cmd_simulate(&case, n_below, n_above, n, sigma, xi, &common),
        Command::Diag {
            input,
            kind,
            sel,
            threshold,
            level,
            b1,
            b2,
            n_sim,
            t_min,
            t_max,
            n_points,
            obs_per_year,
            common,
        } => {
            let range = PeriodRange {
                t_min,
                t_max,
                n_points,
                obs_per_year,
            };
            cmd_diag(&input, kind, &sel, threshold, level, (b1, b2, n_sim), &range, &common)
        }
        Command::Study {
            case,
            preset,
            reps,
            n,
            no_coverage,
            common,
        } => cmd_study(&case, &preset, reps, n, no_coverage, &common),
    }
}

fn select(data: &[f64], sel: &SelectOpts, seed: u64) -> Result<ThresholdSelection> {
    let cfg = sel.config(seed);
    let grid = sel.grid()?.resolve(data)?;
    Ok(select_threshold_keyed(data, &grid, &cfg, SeedKey::new(seed).child(0))?)
}

fn cmd_select(input: &Path, sel: &SelectOpts, common: &Common) -> Result<()> {
    let data = input::read_values(input)?;
    let s = select(&data, sel, common.seed)?;
    let mut t = Table::new(vec![
        "index", "threshold", "level", "status", "n_excess", "exceed_prob", "d_e", "n_failed",
        "scale", "shape", "reason",
    ]);
    let levels = sel.grid()?.resolve(&data)?.levels().map(<[f64]>::to_vec);
    let level = |i: usize| Cell::from(levels.as_ref().map(|l| l[i]));
    let mut rows: Vec<(usize, Vec<Cell>)> = Vec::new();
    for c in &s.scores {
        let status = if c.index == s.chosen_index { "chosen" } else { "scored" };
        rows.push((
            c.index,
            vec![
                c.index.into(),
                c.threshold.into(),
                level(c.index),
                status.into(),
                c.n_excess.into(),
                (c.n_excess as f64 / data.len() as f64).into(),
                c.d_e.into(),
                c.n_failed.into(),
                c.fit.scale().into(),
                c.fit.shape().into(),
                Cell::Empty,
            ],
        ));
    }
    for k in &s.skipped {
        rows.push((
            k.index,
            vec![
                k.index.into(),
                k.threshold.into(),
                level(k.index),
                "skipped".into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                k.reason.clone().into(),
            ],
        ));
    }
    rows.sort_by_key(|r| r.0);
    for (_, r) in rows {
        t.push(r);
    }
    for u in s.unreliable_candidates(sel.b) {
        eprintln!(
            "eqd: warning: {} of {} bootstrap fits failed at threshold {}",
            u.n_failed, sel.b, u.threshold
        );
    }
    eprintln!(
        "eqd: chosen threshold {}{}; lambda {:.4}, scale {:.4}, shape {:.4}",
        output::num(s.chosen),
        s.chosen_level
            .map(|l| format!(" ({}% sample quantile)", output::num(100.0 * l)))
            .unwrap_or_default(),
        s.model.exceed_prob,
        s.model.params.scale(),
        s.model.params.shape()
    );
    emit(common.format, common.output.as_deref(), &t, &s)
}

fn model_table(m: &ThresholdModel) -> Table {
    let mut t = Table::new(vec![
        "threshold", "n_total", "n_excess", "exceed_prob", "scale", "shape", "neg_log_lik",
        "converged",
    ]);
    t.push(vec![
        m.threshold.into(),
        m.n_total.into(),
        m.n_excess.into(),
        m.exceed_prob.into(),
        m.params.scale().into(),
        m.params.shape().into(),
        m.neg_log_lik.into(),
        m.converged.to_string().into(),
    ]);
    t
}

fn cmd_fit(input: &Path, threshold: f64, min_excess: usize, common: &Common) -> Result<()> {
    let data = input::read_values(input)?;
    let opts = FitOptions {
        min_excess,
        ..FitOptions::default()
    };
    let m = fit_threshold_model_with(&data, threshold, &opts)?;
    if !m.converged {
        eprintln!("eqd: warning: optimiser stopped before convergence");
    }
    emit(common.format, common.output.as_deref(), &model_table(&m), &m)
}

struct RlArgs {
    threshold: Option<f64>,
    algorithms: Vec<AlgArg>,
    periods: Vec<f64>,
    probs: Vec<f64>,
    obs_per_year: f64,
    levels: Vec<f64>,
    b1: usize,
    b2: usize,
}

#[derive(Serialize)]
struct RlRow {
    algorithm: Algorithm,
    period: Option<f64>,
    prob: f64,
    point: f64,
    level: f64,
    lo: f64,
    hi: f64,
    n_values: usize,
    n_failed: usize,
}

#[derive(Serialize)]
struct RlReport {
    model: ThresholdModel,
    rows: Vec<RlRow>,
}

fn cmd_rl(input: &Path, sel: &SelectOpts, args: &RlArgs, common: &Common) -> Result<()> {
    if args.periods.is_empty() == args.probs.is_empty() {
        bail!("give exactly one of --periods or --probs");
    }
    let data = input::read_values(input)?;
    let key = SeedKey::new(common.seed);
    let cfg = sel.config(common.seed);
    let model = match args.threshold {
        Some(u) => {
            if args.algorithms.contains(&AlgArg::Two) {
                bail!("--threshold fixes the threshold, which algorithm 2 does not allow");
            }
            let opts = FitOptions {
                min_excess: sel.min_excess,
                ..FitOptions::default()
            };
            fit_threshold_model_with(&data, u, &opts)?
        }
        None => select(&data, sel, common.seed)?.model,
    };

    let targets: Vec<(Option<f64>, SummarySpec)> = if args.periods.is_empty() {
        args.probs.iter().map(|&p| (None, SummarySpec::Quantile { p })).collect()
    } else {
        args.periods
            .iter()
            .map(|&period| {
                let s = SummarySpec::ReturnLevel {
                    period,
                    obs_per_year: args.obs_per_year,
                };
                (Some(period), s)
            })
            .collect()
    };
    let specs: Vec<SummarySpec> = targets.iter().map(|t| t.1).collect();
    let points = specs
        .iter()
        .map(|s| s.evaluate(model.threshold, model.exceed_prob, &model.params))
        .collect::<eqd_core::Result<Vec<f64>>>()?;
    let probs: Vec<f64> = targets
        .iter()
        .map(|(period, s)| match (period, s) {
            (Some(t), _) => 1.0 / (t * args.obs_per_year),
            (None, SummarySpec::Quantile { p }) => *p,
            _ => unreachable!(),
        })
        .collect();

    let opts = BootstrapOptions::default();
    let mut rows = Vec::new();
    for &alg in &args.algorithms {
        let (algorithm, boots) = match alg {
            AlgArg::One => (
                Algorithm::Alg1,
                alg1_from_model(&model, args.b1, &specs, key.child(1), &opts)?,
            ),
            AlgArg::Two => {
                let grid = sel.grid()?;
                let b = alg2_many(&data, &grid, &cfg, args.b2, args.b1, &specs, key.child(2), &opts)?;
                (Algorithm::Alg2, b)
            }
            AlgArg::OneB => (
                Algorithm::Alg1b,
                alg1b_from_model(&model, args.b1, &specs, key.child(3), &opts)?,
            ),
        };
        for (k, b) in boots.iter().enumerate() {
            for &level in &args.levels {
                let (lo, hi) = percentile_ci(b, level)?;
                rows.push(RlRow {
                    algorithm,
                    period: targets[k].0,
                    prob: probs[k],
                    point: points[k],
                    level,
                    lo,
                    hi,
                    n_values: b.values.len(),
                    n_failed: b.n_failed,
                });
            }
        }
    }

    let mut t = Table::new(vec![
        "algorithm", "threshold", "period", "prob", "point", "level", "lo", "hi", "n_values",
        "n_failed",
    ]);
    for r in &rows {
        t.push(vec![
            r.algorithm.to_string().into(),
            model.threshold.into(),
            r.period.into(),
            r.prob.into(),
            r.point.into(),
            r.level.into(),
            r.lo.into(),
            r.hi.into(),
            r.n_values.into(),
            r.n_failed.into(),
        ]);
    }
    emit(
        common.format,
        common.output.as_deref(),
        &t,
        &RlReport { model, rows },
    )
}

#[derive(Serialize)]
struct Sample<'a> {
    case: &'a CaseSpec,
    values: &'a [f64],
}

fn cmd_simulate(
    case: &str,
    n_below: Option<usize>,
    n_above: Option<usize>,
    n: Option<usize>,
    sigma: Option<f64>,
    xi: Option<f64>,
    common: &Common,
) -> Result<()> {
    let id: CaseId = case.parse()?;
    let mut spec = match (id, n) {
        (CaseId::Gaussian, Some(n)) => CaseSpec::gaussian(n),
        (_, Some(_)) => bail!("--n applies to the Gaussian case; use --n-below/--n-above"),
        _ => CaseSpec::preset(id),
    };
    if let Some(v) = n_below {
        spec.n_below = v;
    }
    if let Some(v) = n_above {
        spec.n_above = v;
    }
    if let Some(v) = sigma {
        spec.sigma_u = v;
    }
    if let Some(v) = xi {
        spec.xi = v;
    }
    let values = simulate_case(&spec, &mut SeedKey::new(common.seed).stream())?;
    let mut t = Table::new(vec!["x"]);
    for &v in &values {
        t.push(vec![v.into()]);
    }
    emit(
        common.format,
        common.output.as_deref(),
        &t,
        &Sample {
            case: &spec,
            values: &values,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_diag(
    input: &Path,
    kind: DiagKind,
    sel: &SelectOpts,
    threshold: Option<f64>,
    level: f64,
    (b1, b2, n_sim): (usize, usize, usize),
    range: &PeriodRange,
    common: &Common,
) -> Result<()> {
    let data = input::read_values(input)?;
    let key = SeedKey::new(common.seed);
    let fit = FitOptions {
        min_excess: sel.min_excess,
        ..FitOptions::default()
    };
    match kind {
        DiagKind::Stability => {
            let grid = sel.grid()?.resolve(&data)?;
            let curve = parameter_stability(&data, &grid, b1, level, &fit, key)?;
            for s in &curve.skipped {
                eprintln!("eqd: skipped threshold {}: {}", s.threshold, s.reason);
            }
            let mut t = Table::new(vec!["threshold", "n_excess", "xi_hat", "ci_lo", "ci_hi"]);
            for r in &curve.rows {
                t.push(vec![
                    r.threshold.into(),
                    r.n_excess.into(),
                    r.xi_hat.into(),
                    r.ci_lo.into(),
                    r.ci_hi.into(),
                ]);
            }
            emit(common.format, common.output.as_deref(), &t, &curve)
        }
        DiagKind::Qq => {
            let model = match threshold {
                Some(u) => fit_threshold_model_with(&data, u, &fit)?,
                None => select(&data, sel, common.seed)?.model,
            };
            let excesses = excesses_of(&data, model.threshold);
            let rows = qq_data(&model, &excesses, n_sim, level, key.child(1))
                .context("building QQ data")?;
            let mut t = Table::new(vec!["model_q", "empirical_q", "tol_lo", "tol_hi"]);
            for r in &rows {
                t.push(vec![
                    r.model_q.into(),
                    r.empirical_q.into(),
                    r.tol_lo.into(),
                    r.tol_hi.into(),
                ]);
            }
            emit(common.format, common.output.as_deref(), &t, &rows)
        }
        DiagKind::RlCurve => {
            let cfg = sel.config(common.seed);
            let curve =
                return_level_curve(&data, &sel.grid()?, &cfg, range, b2, b1, level, key)?;
            let mut t = Table::new(vec![
                "period", "point", "alg1_lo", "alg1_hi", "alg2_lo", "alg2_hi",
            ]);
            for r in &curve.rows {
                t.push(vec![
                    r.period.into(),
                    r.point.into(),
                    r.alg1_lo.into(),
                    r.alg1_hi.into(),
                    r.alg2_lo.into(),
                    r.alg2_hi.into(),
                ]);
            }
            emit(common.format, common.output.as_deref(), &t, &curve)
        }
    }
}

fn cmd_study(
    case: &str,
    preset: &str,
    reps: Option<usize>,
    n: Option<usize>,
    no_coverage: bool,
    common: &Common,
) -> Result<()> {
    let id: CaseId = case.parse()?;
    let spec = match (id, n) {
        (CaseId::Gaussian, Some(n)) => CaseSpec::gaussian(n),
        (_, Some(_)) => bail!("--n applies to the Gaussian case only"),
        _ => CaseSpec::preset(id),
    };
    let preset: Preset = preset.parse()?;
    let mut settings = preset.settings(&spec);
    if let Some(r) = reps {
        settings.n_reps = r;
    }
    let report = run_preset(&spec, &settings, no_coverage, SeedKey::new(common.seed))?;

    let mut t = Table::new(vec![
        "kind", "case", "method", "target", "algorithm", "level", "j", "rmse", "bias",
        "variance", "coverage", "width_ratio", "n_replicates", "n_failed",
    ]);
    for r in &report.errors {
        t.push(vec![
            "error".into(),
            r.case.to_string().into(),
            r.method.clone().into(),
            r.target.clone().into(),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            r.rmse.into(),
            r.bias.into(),
            r.variance.into(),
            Cell::Empty,
            Cell::Empty,
            r.n_replicates.into(),
            r.n_failed.into(),
        ]);
    }
    for r in &report.coverage {
        t.push(vec![
            "coverage".into(),
            r.case.to_string().into(),
            Cell::Empty,
            format!("quantile_j{}", r.j).into(),
            r.algorithm.to_string().into(),
            r.level.into(),
            (r.j as usize).into(),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            r.coverage.into(),
            r.width_ratio.into(),
            r.n_replicates.into(),
            r.n_failed.into(),
        ]);
    }
    if common.output.is_some() {
        print!("{report}");
    } else {
        eprint!("{report}");
    }
    emit(common.format, common.output.as_deref(), &t, &report)
}
