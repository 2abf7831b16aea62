//! The release gate. Each test checks one acceptance criterion end to end
//! and prints a single PASS line (visible with `--nocapture`); the harness
//! result line carries the same verdict either way. Monte Carlo criteria
//! run at fixed seeds whose margins were verified to be wide.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use longbracket::data::{load_csv_path, CombinedDataset, CsvSchema, Group, ObservationRow};
use longbracket::dgp::{monte_carlo, preset, McBootstrap, McEstimatorConfig};
use longbracket::dominance::{dominance_report, DominanceConfig, DominanceVerdict};
use longbracket::estimands::{
    estimate_all, identity_residual, naive_two_sample_se, Estimand, DEFAULT_PSI_TOL,
};
use longbracket::inference::{bootstrap, standard_errors, BootstrapSpec};
use longbracket::report::to_json;
use longbracket::sensitivity::{sensitivity_curve, solve_rho_star, PhiSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn load(name: &str) -> CombinedDataset {
    load_csv_path(&fixture(name), &CsvSchema::default()).unwrap()
}

#[test]
fn acceptance_01_fixture_estimates_are_exact() {
    let start = Instant::now();
    let d0 = estimate_all(&load("d0.csv"), DEFAULT_PSI_TOL).unwrap();
    for (name, got) in [
        ("naive", d0.theta_naive),
        ("lu", d0.theta_lu),
        ("ecb", d0.theta_ecb),
    ] {
        assert!((got - 1.0).abs() <= 1e-12, "d0 {name} = {got}");
    }
    let d2 = estimate_all(&load("d2.csv"), DEFAULT_PSI_TOL).unwrap();
    for (name, got, want) in [
        ("naive", d2.theta_naive, 1.5),
        ("lu", d2.theta_lu, 2.5),
        ("ecb", d2.theta_ecb, 3.5),
    ] {
        assert!((got - want).abs() <= 1e-12, "d2 {name} = {got}, want {want}");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
    println!("ACCEPTANCE 01 PASS: fixture point estimates exact to 1e-12");
}

fn random_dataset(rng: &mut ChaCha8Rng) -> CombinedDataset {
    let row = |group, treated, y1, y2| ObservationRow {
        group,
        treated,
        y1,
        y2,
        labels: BTreeMap::new(),
    };
    let mut rows = Vec::new();
    for (group, treated) in [
        (Group::Experimental, false),
        (Group::Experimental, true),
        (Group::Observational, false),
        (Group::Observational, true),
    ] {
        let n = rng.random_range(2..12usize);
        for _ in 0..n {
            let y1: f64 = rng.random_range(-5.0..5.0);
            let y2 = (group == Group::Observational).then(|| rng.random_range(-5.0..5.0));
            rows.push(row(group, treated, y1, y2));
        }
    }
    CombinedDataset::new(rows, "random")
}

#[test]
fn acceptance_02_signed_difference_identity() {
    for name in ["d0.csv", "d2.csv"] {
        let r = identity_residual(&load(name)).unwrap();
        assert!(r.abs() <= 1e-10, "{name} residual {r}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let d = random_dataset(&mut rng);
        let r = identity_residual(&d).unwrap();
        assert!(r.abs() <= 1e-10, "random dataset {i} residual {r}");
    }
    println!("ACCEPTANCE 02 PASS: signed-difference identity within 1e-10 on fixtures and 100 random datasets");
}

#[test]
fn acceptance_03_bracket_under_short_term_selection() {
    let start = Instant::now();
    let r = monte_carlo(
        &preset("ldv_lu_true").unwrap(),
        200,
        42,
        &McEstimatorConfig::default(),
    )
    .unwrap();
    let lu = &r.estimands[&Estimand::Lu];
    let ecb = &r.estimands[&Estimand::Ecb];
    assert!(
        r.dominance_share_i >= 0.95,
        "direction-I share {}",
        r.dominance_share_i
    );
    assert!(
        r.lu_le_ecb_share >= 0.99,
        "ordering share {}",
        r.lu_le_ecb_share
    );
    assert!(
        lu.bias.abs() <= 3.0 * lu.mc_se,
        "lu bias {} vs 3 x {}",
        lu.bias,
        lu.mc_se
    );
    assert!(
        ecb.bias >= 3.0 * ecb.mc_se,
        "ecb bias {} vs 3 x {}",
        ecb.bias,
        ecb.mc_se
    );
    assert!(start.elapsed().as_secs_f64() < 300.0);
    println!("ACCEPTANCE 03 PASS: selection on the short-term outcome leaves lu centered and ecb strictly above");
}

#[test]
fn acceptance_04_equal_growth_keeps_ecb_centered() {
    let r = monte_carlo(
        &preset("submartingale_ecb_true").unwrap(),
        200,
        20260825,
        &McEstimatorConfig::default(),
    )
    .unwrap();
    let lu = &r.estimands[&Estimand::Lu];
    let ecb = &r.estimands[&Estimand::Ecb];
    assert!(
        ecb.bias.abs() <= 3.0 * ecb.mc_se,
        "ecb bias {} vs 3 x {}",
        ecb.bias,
        ecb.mc_se
    );
    assert!(
        lu.bias <= 3.0 * lu.mc_se,
        "lu mean should not exceed the target: bias {} vs 3 x {}",
        lu.bias,
        lu.mc_se
    );
    println!("ACCEPTANCE 04 PASS: equal-growth process keeps ecb centered and lu at or below the target");
}

#[test]
fn acceptance_05_partial_persistence_correction() {
    let cfg = McEstimatorConfig {
        sensitivity_rho: Some(0.8),
        ..McEstimatorConfig::default()
    };
    let r = monte_carlo(&preset("submartingale_rho08").unwrap(), 200, 99, &cfg).unwrap();
    let dc = r.delta_check.unwrap();
    assert!(
        dc.adjusted_bias_mean.abs() <= 3.0 * dc.adjusted_bias_se,
        "adjusted bias {} vs 3 x {}",
        dc.adjusted_bias_mean,
        dc.adjusted_bias_se
    );
    assert!(
        dc.latent_gap_mean.abs() <= 3.0 * dc.latent_gap_se,
        "observed-vs-latent gap {} vs 3 x {}",
        dc.latent_gap_mean,
        dc.latent_gap_se
    );
    assert_eq!(
        dc.max_abs_delta_at_one, 0.0,
        "adjustment at full persistence must vanish exactly"
    );
    println!("ACCEPTANCE 05 PASS: deviation-adjusted ecb recenters on the target and matches the latent form");
}

#[test]
fn acceptance_06_foresight_dichotomy() {
    let invertible = monte_carlo(
        &preset("if_invertible").unwrap(),
        200,
        20260825,
        &McEstimatorConfig::default(),
    )
    .unwrap();
    let lu = &invertible.estimands[&Estimand::Lu];
    assert!(
        lu.bias.abs() <= 3.0 * lu.mc_se,
        "invertible first period: lu bias {} vs 3 x {}",
        lu.bias,
        lu.mc_se
    );

    let folded = monte_carlo(
        &preset("if_noninvertible").unwrap(),
        200,
        20260825,
        &McEstimatorConfig::default(),
    )
    .unwrap();
    let lu = &folded.estimands[&Estimand::Lu];
    assert!(
        lu.bias.abs() >= 10.0 * lu.mc_se,
        "folded first period: lu bias {} vs 10 x {}",
        lu.bias,
        lu.mc_se
    );
    println!("ACCEPTANCE 06 PASS: lu is centered when the first period inverts the latent factor and far off when it folds");
}

#[test]
fn acceptance_07_sensitivity_solve_is_closed_form() {
    let d = load("d2.csv");
    let rho = solve_rho_star(&d, &PhiSpec::Linear, 2.5, (0.5, 1.0)).unwrap();
    assert_eq!(rho, 0.5, "solved persistence {rho}");
    let curve = sensitivity_curve(&d, &PhiSpec::Linear, 0.5, 1.0, 6).unwrap();
    assert_eq!(*curve.rho.last().unwrap(), 1.0);
    assert_eq!(
        curve.adjusted.last().unwrap().to_bits(),
        curve.theta_ecb.to_bits(),
        "curve endpoint must equal the unadjusted estimate bit for bit"
    );
    println!("ACCEPTANCE 07 PASS: persistence solve returns 0.5 exactly and the curve endpoint is bit-identical");
}

#[test]
fn acceptance_08_bootstrap_sanity_and_thread_invariance() {
    let d = load("d2.csv");
    let spec = BootstrapSpec::new(1000, 7);

    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| bootstrap(&d, &spec).unwrap())
    };
    let one = run_with(1);
    let eight = run_with(8);

    for est in one.available() {
        assert_eq!(
            one.values(est)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            eight
                .values(est)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            "{est} replicate streams differ across pools"
        );
    }
    let report_one = to_json(&standard_errors(&one).unwrap()).unwrap();
    let report_eight = to_json(&standard_errors(&eight).unwrap()).unwrap();
    assert_eq!(report_one, report_eight);

    let se = standard_errors(&one).unwrap()[&Estimand::Naive].se;
    let analytic = naive_two_sample_se(&d).unwrap();
    assert!(
        se <= 3.0 * analytic && se >= analytic / 3.0,
        "bootstrap se {se} vs analytic {analytic}"
    );
    println!("ACCEPTANCE 08 PASS: bootstrap se within 3x of the analytic yardstick; 1- and 8-thread reports byte-identical");
}

#[test]
fn acceptance_09_dominance_verdicts_and_transform_invariance() {
    let cfg = DominanceConfig::default();
    let cases = [
        ("d2.csv", DominanceVerdict::DominanceI),
        ("d2_mirrored.csv", DominanceVerdict::DominanceII),
        ("interleaved.csv", DominanceVerdict::Inconclusive),
    ];
    for (name, want) in &cases {
        let got = dominance_report(&load(name), &cfg).unwrap().verdict;
        assert_eq!(got, *want, "{name}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..50 {
        let a: f64 = rng.random_range(-3.0..3.0);
        let b: f64 = rng.random_range(0.1..2.0);
        let c: f64 = rng.random_range(0.0..1.0);
        let t = |y: f64| a + b * y + c * y * y * y;
        for (name, want) in &cases {
            let d = load(name);
            let rows = d
                .rows()
                .iter()
                .map(|r| ObservationRow {
                    y1: t(r.y1),
                    ..r.clone()
                })
                .collect();
            let moved = CombinedDataset::new(rows, "transformed");
            let got = dominance_report(&moved, &cfg).unwrap().verdict;
            assert_eq!(got, *want, "{name} under increasing transform {k}");
        }
    }
    println!("ACCEPTANCE 09 PASS: fixture verdicts as expected and stable under 50 increasing transforms");
}

#[test]
fn acceptance_10_benchmark_test_pattern() {
    let cfg = McEstimatorConfig {
        mask_experimental_y2: false,
        bootstrap: Some(McBootstrap {
            replicates: 400,
            ci_level: 0.95,
        }),
        ..McEstimatorConfig::default()
    };
    let r = monte_carlo(&preset("ldv_lu_true").unwrap(), 100, 20260825, &cfg).unwrap();
    assert_eq!(r.lalonde_evaluated, 100);
    let lu_reject = r.lalonde_lu_reject_share.unwrap();
    let ecb_reject = r.lalonde_ecb_reject_share.unwrap();
    assert!(
        lu_reject <= 0.10,
        "lu-vs-benchmark rejected in {lu_reject} of reps"
    );
    assert!(
        ecb_reject >= 0.90,
        "ecb-vs-benchmark rejected in only {ecb_reject} of reps"
    );
    println!("ACCEPTANCE 10 PASS: benchmark test retains lu and rejects ecb in the contracted shares");
}
