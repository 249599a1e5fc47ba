use eqd_core::bootalg::{
    alg1, alg1_from_model, alg1b, alg1b_from_model, alg2_many, percentile_ci, BootstrapOptions,
    GpdParameter, SummarySpec,
};
use eqd_core::eqd::{select_threshold_keyed, EqdConfig, GridSpec};
use eqd_core::fit::fit_threshold_model;
use eqd_core::gpd::GpdParams;
use eqd_core::rng::SeedKey;
use eqd_core::simcases::{simulate_case, CaseId, CaseSpec};

fn gpd_sample(n: usize, seed: u64) -> Vec<f64> {
    GpdParams::new(0.5, 0.1)
        .unwrap()
        .sample(n, &mut SeedKey::new(seed).stream())
}

fn small_cfg() -> EqdConfig {
    EqdConfig {
        n_boot: 10,
        n_eval: 100,
        ..EqdConfig::default()
    }
}

fn iqr(v: &[f64]) -> f64 {
    let s = eqd_core::empq::SortedSample::new(v.to_vec()).unwrap();
    s.quantile(0.75).unwrap() - s.quantile(0.25).unwrap()
}

#[test]
fn single_replicate_and_constant_summary() {
    let x = gpd_sample(300, 1);
    let one = alg1(&x, 0.1, 1, SummarySpec::Quantile { p: 0.001 }, SeedKey::new(2)).unwrap();
    assert_eq!(one.values.len(), 1);
    let (lo, hi) = percentile_ci(&one, 0.95).unwrap();
    assert_eq!(lo, hi);

    let t = alg1(&x, 0.1, 25, SummarySpec::Threshold, SeedKey::new(2)).unwrap();
    assert_eq!(t.values, vec![0.1; 25]);
}

#[test]
fn alg1_keeps_lambda_and_alg1b_varies_it() {
    let x = gpd_sample(400, 3);
    let a = alg1(&x, 0.3, 50, SummarySpec::ExceedanceProb, SeedKey::new(4)).unwrap();
    let lambda = fit_threshold_model(&x, 0.3).unwrap().exceed_prob;
    assert!(a.values.iter().all(|&v| v == lambda));
    let b = alg1b(&x, 0.3, 50, SummarySpec::ExceedanceProb, SeedKey::new(4)).unwrap();
    assert!(b.values.iter().any(|&v| v != lambda));
}

#[test]
fn alg1b_with_every_value_above_threshold() {
    let x = gpd_sample(150, 5);
    let b = alg1b(&x, 0.0, 40, SummarySpec::ExceedanceProb, SeedKey::new(6)).unwrap();
    assert_eq!(b.values, vec![1.0; 40]);
}

#[test]
fn alg1b_excess_counts_are_binomial() {
    let x = gpd_sample(200, 7);
    let m = fit_threshold_model(&x, 0.35).unwrap();
    let b = alg1b(&x, 0.35, 10_000, SummarySpec::ExceedanceProb, SeedKey::new(8)).unwrap();
    assert_eq!(b.n_failed, 0);
    let n = m.n_total as f64;
    let mean = b.values.iter().map(|l| l * n).sum::<f64>() / b.values.len() as f64;
    let se = (n * m.exceed_prob * (1.0 - m.exceed_prob) / 10_000.0).sqrt();
    assert!((mean - n * m.exceed_prob).abs() < 3.0 * se, "{mean} vs {}", n * m.exceed_prob);
}

#[test]
fn alg1_shape_interval_coverage() {
    // 100 samples of 10^4 excesses; nominal 95% intervals for ξ = 0.1
    let opts = BootstrapOptions::default();
    let spec = [SummarySpec::Parameter(GpdParameter::Shape)];
    let mut hits = 0;
    for r in 0..100 {
        let key = SeedKey::new(11).child(r);
        let x = gpd_sample(10_000, 1000 + r);
        let m = fit_threshold_model(&x, 0.0).unwrap();
        let s = alg1_from_model(&m, 100, &spec, key, &opts).unwrap().remove(0);
        let (lo, hi) = percentile_ci(&s, 0.95).unwrap();
        hits += usize::from(lo <= 0.1 && 0.1 <= hi);
    }
    assert!((88..=100).contains(&hits), "coverage {hits}/100");
}

// Far in the tail the binomial term adds roughly 0.2% to the spread, well
// below the bootstrap noise in an IQR from 200 replicates, so the win rate
// sits near one half.
#[test]
#[ignore = "effect size far below Monte Carlo resolution; see the near-threshold test"]
fn alg1b_spreads_at_least_as_much_as_alg1() {
    let case = CaseSpec::preset(CaseId::Case4);
    let spec = [SummarySpec::Quantile {
        p: 1.0 / (100.0 * case.n_total() as f64),
    }];
    let opts = BootstrapOptions::default();
    let mut wider = 0;
    for t in 0..50 {
        let key = SeedKey::new(12).child(t);
        let x = simulate_case(&case, &mut key.child(0).stream()).unwrap();
        let m = fit_threshold_model(&x, 1.0).unwrap();
        let a = alg1_from_model(&m, 200, &spec, key.child(1), &opts).unwrap().remove(0);
        let b = alg1b_from_model(&m, 200, &spec, key.child(1), &opts).unwrap().remove(0);
        wider += usize::from(iqr(&b.values) >= iqr(&a.values));
    }
    assert!(wider >= 30, "alg1b wider in {wider}/50");
}

#[test]
fn alg1b_adds_spread_near_the_threshold() {
    // close to u the level is driven by ln(λ/p), where the binomial term dominates
    let x = gpd_sample(200, 18);
    let m = fit_threshold_model(&x, 0.6).unwrap();
    let spec = [SummarySpec::Quantile { p: 0.9 * m.exceed_prob }];
    let opts = BootstrapOptions::default();
    let mut wider = 0;
    for t in 0..50 {
        let key = SeedKey::new(19).child(t);
        let a = alg1_from_model(&m, 200, &spec, key, &opts).unwrap().remove(0);
        let b = alg1b_from_model(&m, 200, &spec, key, &opts).unwrap().remove(0);
        wider += usize::from(iqr(&b.values) >= iqr(&a.values));
    }
    assert!(wider >= 45, "alg1b wider in {wider}/50");
}

#[test]
fn alg2_without_outer_resampling_is_alg1_at_the_selection() {
    let x = gpd_sample(250, 13);
    let grid: GridSpec = "0(20)80".parse().unwrap();
    let cfg = small_cfg();
    let key = SeedKey::new(14);
    let specs = [SummarySpec::Quantile { p: 0.001 }, SummarySpec::Threshold];
    let opts = BootstrapOptions {
        outer_resampling: false,
        ..BootstrapOptions::default()
    };
    let two = alg2_many(&x, &grid, &cfg, 1, 30, &specs, key, &opts).unwrap();

    let sel = select_threshold_keyed(&x, &grid.resolve(&x).unwrap(), &cfg, key.child(0).child(0))
        .unwrap();
    let one = alg1_from_model(&sel.model, 30, &specs, key.child(0).child(1), &opts).unwrap();
    assert_eq!(two[0].values, one[0].values);
    assert_eq!(two[1].values, vec![sel.chosen; 30]);
}

#[test]
fn alg2_accounting_and_schedule_independence() {
    let x = gpd_sample(200, 15);
    let grid: GridSpec = "0(25)75".parse().unwrap();
    let cfg = small_cfg();
    let specs = [SummarySpec::ReturnLevel {
        period: 50.0,
        obs_per_year: 4.0,
    }];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                alg2_many(&x, &grid, &cfg, 6, 15, &specs, SeedKey::new(16), &BootstrapOptions::default())
                    .unwrap()
            })
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let s = &a[0];
    assert_eq!(s.n_requested, 90);
    assert_eq!(s.values.len() + s.n_failed, 90);
}

#[test]
fn invalid_summary_specs_are_rejected() {
    let x = gpd_sample(100, 17);
    assert!(alg1(&x, 0.0, 5, SummarySpec::Quantile { p: 1.5 }, SeedKey::new(0)).is_err());
    assert!(alg1(&x, 1e6, 5, SummarySpec::Threshold, SeedKey::new(0)).is_err());
}
