//! Replication harness over the synthetic families.
//!
//! Each rep draws a fresh panel from a seed derived off the master seed,
//! runs the full estimation pipeline on the observed projection, and logs
//! how every estimator did against the panel's own oracle. Reps run in
//! parallel; aggregation order is fixed by rep index, so reports are
//! bit-identical for any worker count.

use super::{generate, latent_delta, to_observed, true_att, DgpSpec};
use crate::data::validate;
use crate::dominance::{dominance_report, DominanceConfig, DominanceVerdict};
use crate::error::{Error, Result};
use crate::estimands::{estimate_all, Estimand, DEFAULT_PSI_TOL};
use crate::inference::{bootstrap, lalonde_tests_from, summarize, BootstrapSpec};
use crate::sensitivity::{delta, PhiSpec};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-rep seed from the master seed. Distinct reps get distinct streams;
/// rep 0 does not collide with the master itself.
pub fn derive_seed(master: u64, rep: u64) -> u64 {
    splitmix64(master.wrapping_add((rep.wrapping_add(1)).wrapping_mul(0x9E3779B97F4A7C15)))
}

/// Bootstrap settings for the harness; the per-rep seed is derived, so only
/// size and level are configurable here.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McBootstrap {
    pub replicates: usize,
    pub ci_level: f64,
}

#[derive(Debug, Clone)]
pub struct McEstimatorConfig {
    pub psi_tol: f64,
    /// Hide the experimental second-period outcome (production mode). Keep
    /// it to benchmark against the experimental estimate.
    pub mask_experimental_y2: bool,
    pub dominance: DominanceConfig,
    /// Enables coverage rates and, with the mask off, the benchmark tests.
    pub bootstrap: Option<McBootstrap>,
    /// Evaluate the growth-deviation adjustment at this rate each rep and
    /// compare it against the latent-form value.
    pub sensitivity_rho: Option<f64>,
}

impl Default for McEstimatorConfig {
    fn default() -> Self {
        // Verdicts here feed rep-level counts, so a hair of slack keeps a
        // single far-tail sample point from flipping an otherwise clean
        // direction call; standalone analyses default to zero slack.
        let dominance = DominanceConfig {
            tol: 0.005,
            ..DominanceConfig::default()
        };
        McEstimatorConfig {
            psi_tol: DEFAULT_PSI_TOL,
            mask_experimental_y2: true,
            dominance,
            bootstrap: None,
            sensitivity_rho: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimandStats {
    pub mean: f64,
    /// Mean of per-rep (estimate - oracle).
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Standard error of the bias estimate.
    pub mc_se: f64,
    pub reps: usize,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaCheck {
    pub rho: f64,
    /// Mean of (growth-equality estimate - adjustment - oracle).
    pub adjusted_bias_mean: f64,
    pub adjusted_bias_se: f64,
    /// Mean of (observed-form adjustment - latent-form adjustment).
    pub latent_gap_mean: f64,
    pub latent_gap_se: f64,
    /// Largest |adjustment at rate 1| seen; zero when the family is linear.
    pub max_abs_delta_at_one: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub family: String,
    pub n_experimental: usize,
    pub n_observational: usize,
    pub master_seed: u64,
    pub reps_requested: usize,
    pub reps_used: usize,
    pub failures: usize,
    pub oracle_att_mean: f64,
    pub estimands: BTreeMap<Estimand, McEstimandStats>,
    pub dominance_share_i: f64,
    pub dominance_share_ii: f64,
    pub dominance_share_inconclusive: f64,
    pub tie_share: f64,
    /// Fraction of reps with the regression-based estimate weakly below the
    /// growth-equality one.
    pub lu_le_ecb_share: f64,
    /// Among reps with a conclusive direction: fraction whose bound ordering
    /// held, with three standard errors of slack when a bootstrap ran.
    pub bracket_share: Option<f64>,
    pub bracket_evaluated: usize,
    /// Share of reps rejecting equality with the experimental benchmark at
    /// the 5% level. Requires a bootstrap and the mask off.
    pub lalonde_lu_reject_share: Option<f64>,
    pub lalonde_ecb_reject_share: Option<f64>,
    pub lalonde_evaluated: usize,
    pub delta_check: Option<DeltaCheck>,
}

struct RepOutcome {
    att: f64,
    estimates: BTreeMap<Estimand, f64>,
    covered: BTreeMap<Estimand, bool>,
    verdict: DominanceVerdict,
    tie: bool,
    lu_le_ecb: bool,
    bracket_held: Option<bool>,
    lalonde_reject: Option<(bool, bool)>,
    delta_obs: Option<f64>,
    delta_latent: Option<f64>,
    delta_at_one: Option<f64>,
}

fn run_rep(spec: &DgpSpec, seed: u64, cfg: &McEstimatorConfig) -> Result<RepOutcome> {
    let panel = generate(spec, seed)?;
    let att = true_att(&panel)?;
    let d = to_observed(&panel, cfg.mask_experimental_y2);
    let check = validate(&d);
    if !check.overlap_ok {
        return Err(Error::Validation(format!(
            "rep failed overlap: {}",
            check.messages.join("; ")
        )));
    }

    let report = estimate_all(&d, cfg.psi_tol)?;
    let mut estimates = BTreeMap::new();
    for est in report.available() {
        estimates.insert(est, report.get(est).expect("available"));
    }

    let dom = dominance_report(&d, &cfg.dominance)?;
    let lu_le_ecb = report.theta_lu <= report.theta_ecb;

    let mut covered = BTreeMap::new();
    let mut se_diff = None;
    let mut lalonde_reject = None;
    if let Some(bs) = &cfg.bootstrap {
        let spec_b = BootstrapSpec {
            replicates: bs.replicates,
            seed: derive_seed(seed, 1),
            ci_level: bs.ci_level,
        };
        let dist = bootstrap(&d, &spec_b)?;
        for est in report.available() {
            if let Ok(summary) = summarize(&dist, est) {
                covered.insert(est, summary.ci_low <= att && att <= summary.ci_high);
            }
        }
        let diffs: Vec<f64> = dist
            .paired(Estimand::Lu, Estimand::Ecb)
            .iter()
            .map(|(x, y)| x - y)
            .collect();
        if diffs.len() >= 2 {
            let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var = diffs.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                / (diffs.len() - 1) as f64;
            se_diff = Some(var.sqrt());
        }
        if !cfg.mask_experimental_y2 {
            if let Ok(tests) = lalonde_tests_from(&dist) {
                lalonde_reject = Some((tests[0].p_value < 0.05, tests[1].p_value < 0.05));
            }
        }
    }

    let slack = 3.0 * se_diff.unwrap_or(0.0);
    let bracket_held = match dom.verdict {
        DominanceVerdict::DominanceI => Some(report.theta_lu <= report.theta_ecb + slack),
        DominanceVerdict::DominanceII => Some(report.theta_ecb <= report.theta_lu + slack),
        DominanceVerdict::Inconclusive => None,
    };

    let (mut delta_obs, mut delta_latent, mut delta_at_one) = (None, None, None);
    if let Some(rho) = cfg.sensitivity_rho {
        delta_obs = Some(delta(&d, &PhiSpec::Linear, rho)?);
        delta_latent = Some(latent_delta(&panel)?);
        delta_at_one = Some(delta(&d, &PhiSpec::Linear, 1.0)?);
    }

    Ok(RepOutcome {
        att,
        estimates,
        covered,
        verdict: dom.verdict,
        tie: dom.tie,
        lu_le_ecb,
        bracket_held,
        lalonde_reject,
        delta_obs,
        delta_latent,
        delta_at_one,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Run `reps` independent draws of `spec` and aggregate estimator behavior
/// against the oracle. Reps that fail validation or estimation are recorded
/// and excluded; more than 10% of them is an abort.
pub fn monte_carlo(
    spec: &DgpSpec,
    reps: usize,
    master_seed: u64,
    cfg: &McEstimatorConfig,
) -> Result<McReport> {
    if reps < 2 {
        return Err(Error::BadConfig(format!(
            "need at least 2 reps, got {reps}"
        )));
    }
    spec.validate()?;

    let outcomes: Vec<Result<RepOutcome>> = (0..reps)
        .into_par_iter()
        .map(|r| run_rep(spec, derive_seed(master_seed, r as u64), cfg))
        .collect();

    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures * 10 > reps {
        return Err(Error::ReplicationFailures {
            failed: failures,
            total: reps,
        });
    }
    let used: Vec<RepOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();

    let atts: Vec<f64> = used.iter().map(|o| o.att).collect();
    let (oracle_att_mean, _) = mean_and_se(&atts);

    let mut estimands = BTreeMap::new();
    for est in Estimand::ALL {
        let pairs: Vec<(f64, f64)> = used
            .iter()
            .filter_map(|o| o.estimates.get(&est).map(|v| (*v, o.att)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let values: Vec<f64> = pairs.iter().map(|(v, _)| *v).collect();
        let errors: Vec<f64> = pairs.iter().map(|(v, a)| v - a).collect();
        let (mean, _) = mean_and_se(&values);
        let (bias, mc_se) = mean_and_se(&errors);
        let (_, sd_se) = mean_and_se(&values);
        let sd = sd_se * (values.len() as f64).sqrt();
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        let covered: Vec<bool> = used
            .iter()
            .filter_map(|o| o.covered.get(&est).copied())
            .collect();
        let coverage = if covered.is_empty() {
            None
        } else {
            Some(covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64)
        };
        estimands.insert(
            est,
            McEstimandStats {
                mean,
                bias,
                sd,
                rmse,
                mc_se,
                reps: values.len(),
                coverage,
            },
        );
    }

    let share = |pred: &dyn Fn(&RepOutcome) -> bool| {
        used.iter().filter(|o| pred(o)).count() as f64 / used.len() as f64
    };
    let dominance_share_i = share(&|o| o.verdict == DominanceVerdict::DominanceI);
    let dominance_share_ii = share(&|o| o.verdict == DominanceVerdict::DominanceII);
    let dominance_share_inconclusive = share(&|o| o.verdict == DominanceVerdict::Inconclusive);
    let tie_share = share(&|o| o.tie);
    let lu_le_ecb_share = share(&|o| o.lu_le_ecb);

    let bracket_evaluated = used.iter().filter(|o| o.bracket_held.is_some()).count();
    let bracket_share = if bracket_evaluated == 0 {
        None
    } else {
        Some(
            used.iter()
                .filter(|o| o.bracket_held == Some(true))
                .count() as f64
                / bracket_evaluated as f64,
        )
    };

    let lalonde_evaluated = used.iter().filter(|o| o.lalonde_reject.is_some()).count();
    let (lalonde_lu_reject_share, lalonde_ecb_reject_share) = if lalonde_evaluated == 0 {
        (None, None)
    } else {
        let lu = used
            .iter()
            .filter(|o| matches!(o.lalonde_reject, Some((true, _))))
            .count() as f64;
        let ecb = used
            .iter()
            .filter(|o| matches!(o.lalonde_reject, Some((_, true))))
            .count() as f64;
        (
            Some(lu / lalonde_evaluated as f64),
            Some(ecb / lalonde_evaluated as f64),
        )
    };

    let delta_check = cfg.sensitivity_rho.map(|rho| {
        let gaps: Vec<f64> = used
            .iter()
            .filter_map(|o| match (o.delta_obs, o.delta_latent) {
                (Some(obs), Some(lat)) => Some(obs - lat),
                _ => None,
            })
            .collect();
        let adjusted: Vec<f64> = used
            .iter()
            .filter_map(|o| {
                let obs = o.delta_obs?;
                let ecb = o.estimates.get(&Estimand::Ecb)?;
                Some(ecb - obs - o.att)
            })
            .collect();
        let (latent_gap_mean, latent_gap_se) = mean_and_se(&gaps);
        let (adjusted_bias_mean, adjusted_bias_se) = mean_and_se(&adjusted);
        let max_abs_delta_at_one = used
            .iter()
            .filter_map(|o| o.delta_at_one)
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        DeltaCheck {
            rho,
            adjusted_bias_mean,
            adjusted_bias_se,
            latent_gap_mean,
            latent_gap_se,
            max_abs_delta_at_one,
        }
    });

    Ok(McReport {
        family: spec.family.name().to_string(),
        n_experimental: spec.n_experimental,
        n_observational: spec.n_observational,
        master_seed,
        reps_requested: reps,
        reps_used: used.len(),
        failures,
        oracle_att_mean,
        estimands,
        dominance_share_i,
        dominance_share_ii,
        dominance_share_inconclusive,
        tie_share,
        lu_le_ecb_share,
        bracket_share,
        bracket_evaluated,
        lalonde_lu_reject_share,
        lalonde_ecb_reject_share,
        lalonde_evaluated,
        delta_check,
    })
}
