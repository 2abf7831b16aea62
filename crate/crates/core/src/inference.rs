//! Stratified bootstrap inference for the plug-in estimators.
//!
//! Rows are resampled with replacement *within* each of the four design
//! cells, preserving cell sizes, and every estimand is recomputed on the
//! same resampled rows. That joint resampling is what makes differences of
//! estimands (the Wald comparisons below) honest about their correlation.
//!
//! Replicate `b` draws from an RNG stream derived from `(seed, b)` alone,
//! so results are independent of scheduling: runs with different thread
//! counts produce identical output.
//!
//! Failures are tracked per estimand. A resample can lose the regressor
//! variation the `lu` estimator needs (near-certain with a two-row control
//! cell) while the mean contrasts remain perfectly well defined, so a
//! replicate only counts against the estimands it actually broke. Any
//! quantity whose estimand failed on more than 5% of replicates refuses to
//! be summarized.

use crate::data::CombinedDataset;
use crate::error::{Error, Result};
use crate::estimands::{
    lenient_from_cells, report_from_cells, CellArrays, Estimand, LenientEstimates,
    DEFAULT_PSI_TOL,
};
use crate::normal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Replicate count, master seed, and confidence level for intervals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl BootstrapSpec {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapSpec {
            replicates,
            seed,
            ci_level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::BadConfig(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::BadConfig(format!(
                "confidence level must lie in (0,1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

/// At most this share of replicates may fail for an estimand before
/// summaries of it abort.
const MAX_FAILURE_SHARE: f64 = 0.05;
/// Below this replicate count a warning is attached to the distribution.
const LOW_REPLICATE_WARNING: usize = 100;

/// Point estimates plus per-replicate values of every estimand available on
/// the original dataset.
#[derive(Debug, Clone)]
pub struct BootstrapDistribution {
    pub spec: BootstrapSpec,
    points: BTreeMap<Estimand, f64>,
    per_replicate: Vec<LenientEstimates>,
    pub warnings: Vec<String>,
}

impl BootstrapDistribution {
    pub fn available(&self) -> Vec<Estimand> {
        self.points.keys().copied().collect()
    }

    pub fn point(&self, est: Estimand) -> Option<f64> {
        self.points.get(&est).copied()
    }

    /// Successful replicate values for one estimand, in replicate order.
    pub fn values(&self, est: Estimand) -> Vec<f64> {
        self.per_replicate
            .iter()
            .filter_map(|r| r.get(est))
            .collect()
    }

    /// Replicates on which this estimand could not be computed.
    pub fn failures(&self, est: Estimand) -> usize {
        if !self.points.contains_key(&est) {
            return 0;
        }
        self.per_replicate
            .iter()
            .filter(|r| r.get(est).is_none())
            .count()
    }

    pub fn failure_counts(&self) -> BTreeMap<Estimand, usize> {
        self.available()
            .into_iter()
            .map(|e| (e, self.failures(e)))
            .collect()
    }

    /// Replicate-wise pairs where both estimands were defined; the pairing
    /// by replicate index is what encodes their dependence.
    pub fn paired(&self, a: Estimand, b: Estimand) -> Vec<(f64, f64)> {
        self.per_replicate
            .iter()
            .filter_map(|r| match (r.get(a), r.get(b)) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            })
            .collect()
    }

    fn check_health(&self, est: Estimand) -> Result<()> {
        let failed = self.failures(est);
        if failed as f64 > MAX_FAILURE_SHARE * self.spec.replicates as f64 {
            return Err(Error::BootstrapFailures {
                failed,
                total: self.spec.replicates,
            });
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn replicate(&self, b: usize) -> &LenientEstimates {
        &self.per_replicate[b]
    }
}

fn resample_cells(c: &CellArrays, rng: &mut ChaCha8Rng) -> CellArrays {
    let mut y1: [Vec<f64>; 4] = Default::default();
    let mut y2: [Vec<f64>; 4] = Default::default();
    for cell in 0..4 {
        let n = c.n(cell);
        y1[cell].reserve(n);
        if c.y2_complete[cell] {
            y2[cell].reserve(n);
        }
        for _ in 0..n {
            let i = rng.random_range(0..n);
            y1[cell].push(c.y1[cell][i]);
            if c.y2_complete[cell] {
                y2[cell].push(c.y2[cell][i]);
            }
        }
    }
    CellArrays {
        y1,
        y2,
        y2_complete: c.y2_complete,
    }
}

pub(crate) fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    rng
}

/// Run the stratified bootstrap. Precondition: every estimand that is
/// defined on `d` itself must be computable, which the initial
/// [`crate::estimands::estimate_all`] call enforces.
pub fn bootstrap(d: &CombinedDataset, spec: &BootstrapSpec) -> Result<BootstrapDistribution> {
    spec.validate()?;
    let cells = CellArrays::from_dataset(d);
    let report = report_from_cells(&cells, DEFAULT_PSI_TOL)?;

    let mut points = BTreeMap::new();
    for est in report.available() {
        points.insert(est, report.get(est).expect("available"));
    }

    let per_replicate: Vec<LenientEstimates> = (0..spec.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(spec.seed, b);
            let resampled = resample_cells(&cells, &mut rng);
            lenient_from_cells(&resampled)
        })
        .collect();

    let mut warnings = Vec::new();
    if spec.replicates < LOW_REPLICATE_WARNING {
        warnings.push(format!(
            "only {} bootstrap replicates; standard errors will be unstable",
            spec.replicates
        ));
    }

    Ok(BootstrapDistribution {
        spec: *spec,
        points,
        per_replicate,
        warnings,
    })
}

fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Point estimate with bootstrap standard error and a normal-approximation
/// confidence interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimandSummary {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates_used: usize,
    pub replicate_failures: usize,
}

/// Standard error and interval for a single estimand; aborts if more than
/// 5% of replicates failed for it.
pub fn summarize(dist: &BootstrapDistribution, est: Estimand) -> Result<EstimandSummary> {
    let point = dist
        .point(est)
        .ok_or_else(|| Error::Degenerate(format!("{est} not available on this dataset")))?;
    dist.check_health(est)?;
    let values = dist.values(est);
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "fewer than 2 successful replicates for {est}"
        )));
    }
    let z = normal::two_sided_z(1.0 - dist.spec.ci_level);
    let se = sd(&values);
    Ok(EstimandSummary {
        point,
        se,
        ci_low: point - z * se,
        ci_high: point + z * se,
        replicates_used: values.len(),
        replicate_failures: dist.failures(est),
    })
}

/// Summaries for every estimand that is healthy enough to report; estimands
/// over the failure threshold are skipped (their counts remain visible via
/// [`BootstrapDistribution::failure_counts`]). Errors only when nothing at
/// all can be summarized.
pub fn standard_errors(
    dist: &BootstrapDistribution,
) -> Result<BTreeMap<Estimand, EstimandSummary>> {
    let mut out = BTreeMap::new();
    for est in dist.available() {
        if dist.check_health(est).is_ok() {
            out.insert(est, summarize(dist, est)?);
        }
    }
    if out.is_empty() {
        let failed = dist
            .available()
            .iter()
            .map(|e| dist.failures(*e))
            .max()
            .unwrap_or(0);
        return Err(Error::BootstrapFailures {
            failed,
            total: dist.spec.replicates,
        });
    }
    Ok(out)
}

/// One two-sided equality test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub null: String,
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
}

/// Wald test of `H0: theta_a = theta_b` using the bootstrap distribution of
/// the *difference* of the two estimands over joint replicates.
pub fn wald_difference_test(
    dist: &BootstrapDistribution,
    a: Estimand,
    b: Estimand,
) -> Result<TestResult> {
    let pa = dist
        .point(a)
        .ok_or_else(|| Error::Degenerate(format!("{a} not available on this dataset")))?;
    let pb = dist
        .point(b)
        .ok_or_else(|| Error::Degenerate(format!("{b} not available on this dataset")))?;
    dist.check_health(a)?;
    dist.check_health(b)?;
    let diffs: Vec<f64> = dist.paired(a, b).iter().map(|(x, y)| x - y).collect();
    if diffs.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than 2 joint replicates for the difference".into(),
        ));
    }
    let spread = sd(&diffs);
    if !spread.is_finite() || spread == 0.0 {
        return Err(Error::Degenerate(
            "difference distribution is degenerate (zero spread)".into(),
        ));
    }
    let statistic = (pa - pb) / spread;
    let p_value = 2.0 * (1.0 - normal::cdf(statistic.abs()));
    Ok(TestResult {
        null: format!("theta_{} = theta_{}", a.key(), b.key()),
        statistic,
        p_value,
        method: "bootstrap Wald (normal approximation)".into(),
    })
}

/// The benchmark exercise: when the experiment recorded long-term outcomes,
/// test each adjustment estimator against the experimental contrast.
/// Returns the `lu` test followed by the `ecb` test.
pub fn lalonde_tests(d: &CombinedDataset, spec: &BootstrapSpec) -> Result<Vec<TestResult>> {
    lalonde_tests_from(&bootstrap(d, spec)?)
}

/// Same tests against an already-computed bootstrap distribution.
pub fn lalonde_tests_from(dist: &BootstrapDistribution) -> Result<Vec<TestResult>> {
    if dist.point(Estimand::Experimental).is_none() {
        return Err(Error::ExperimentalOutcomeUnavailable);
    }
    Ok(vec![
        wald_difference_test(dist, Estimand::Lu, Estimand::Experimental)?,
        wald_difference_test(dist, Estimand::Ecb, Estimand::Experimental)?,
    ])
}
