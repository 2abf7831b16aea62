//! Empirical CDF comparison of the untreated short-term outcome across the
//! two data sources.
//!
//! Which of the adjustment estimators is the lower bound and which the
//! upper depends on whether the observational controls are stochastically
//! larger or smaller (in `y1`) than the experimental controls. This module
//! computes both ECDFs on a common grid, pointwise normal bands, and a
//! verdict: `DominanceI` when `F_O <= F_E + tol` everywhere, `DominanceII`
//! for the reverse, `Inconclusive` when the curves cross by more than the
//! tolerance in both directions.

use crate::data::{CombinedDataset, Group};
use crate::error::{Error, Result};
use crate::normal;
use serde::Serialize;

/// Right-continuous empirical CDF over a sorted, deduplicated support.
#[derive(Debug, Clone)]
pub struct EcdfCurve {
    support: Vec<f64>,
    cumulative: Vec<f64>,
    n: usize,
}

impl EcdfCurve {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("ecdf of an empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut support = Vec::new();
        let mut cumulative = Vec::new();
        let mut seen = 0usize;
        let mut i = 0;
        while i < n {
            let v = sorted[i];
            let mut j = i;
            while j < n && sorted[j] == v {
                j += 1;
            }
            seen += j - i;
            support.push(v);
            cumulative.push(seen as f64 / n as f64);
            i = j;
        }
        Ok(EcdfCurve {
            support,
            cumulative,
            n,
        })
    }

    /// Fraction of the sample at or below `y`.
    pub fn eval(&self, y: f64) -> f64 {
        let idx = self.support.partition_point(|v| *v <= y);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DominanceVerdict {
    /// Observational controls first-order dominate experimental ones:
    /// `F_O <= F_E` pointwise.
    DominanceI,
    /// The reverse ordering.
    DominanceII,
    Inconclusive,
}

/// Grid choice, band level, and crossing tolerance for the verdict.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DominanceConfig {
    /// `None` evaluates on the union of both supports; `Some(k)` on `k`
    /// evenly spaced points spanning the pooled range.
    pub grid_size: Option<usize>,
    /// Significance level of the pointwise bands.
    pub alpha: f64,
    /// A direction is only ruled out when violated by more than this.
    pub tol: f64,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        DominanceConfig {
            grid_size: None,
            alpha: 0.05,
            tol: 0.0,
        }
    }
}

impl DominanceConfig {
    fn validate(&self) -> Result<()> {
        if let Some(k) = self.grid_size {
            if k < 2 {
                return Err(Error::BadConfig(format!(
                    "dominance grid needs at least 2 points, got {k}"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::BadConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::BadConfig(format!(
                "tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// ECDF comparison on a common grid. `band_*` are pointwise normal
/// half-widths `z * sqrt(F (1-F) / n)` at the configured level.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub grid: Vec<f64>,
    pub f_observational: Vec<f64>,
    pub f_experimental: Vec<f64>,
    pub band_observational: Vec<f64>,
    pub band_experimental: Vec<f64>,
    pub n_observational: usize,
    pub n_experimental: usize,
    pub alpha: f64,
    pub tol: f64,
    /// Largest pointwise violation of direction I, `max(F_O - F_E)`.
    pub max_deviation_i: f64,
    /// Largest pointwise violation of direction II, `max(F_E - F_O)`.
    pub max_deviation_ii: f64,
    /// Violation of the better-supported direction, floored at zero; this
    /// is 0 for a clean one-sided ordering.
    pub max_violation: f64,
    /// Set when both directions hold within tolerance (identical samples,
    /// for instance); the verdict then defaults to direction I.
    pub tie: bool,
    pub verdict: DominanceVerdict,
}

/// Compare the untreated `y1` distributions of the two groups.
pub fn dominance_report(d: &CombinedDataset, config: &DominanceConfig) -> Result<DominanceReport> {
    config.validate()?;
    let obs = d.y1_values(Group::Observational, false);
    let exp = d.y1_values(Group::Experimental, false);
    if obs.is_empty() {
        return Err(Error::EmptyCell {
            group: Group::Observational,
            treated: false,
        });
    }
    if exp.is_empty() {
        return Err(Error::EmptyCell {
            group: Group::Experimental,
            treated: false,
        });
    }
    let f_o = EcdfCurve::new(&obs)?;
    let f_e = EcdfCurve::new(&exp)?;

    let grid = match config.grid_size {
        None => {
            let mut g: Vec<f64> = f_o
                .support()
                .iter()
                .chain(f_e.support())
                .copied()
                .collect();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
        Some(k) => {
            let lo = f_o.support()[0].min(f_e.support()[0]);
            let hi = f_o
                .support()
                .last()
                .unwrap()
                .max(*f_e.support().last().unwrap());
            if lo == hi {
                vec![lo]
            } else {
                (0..k)
                    .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                    .collect()
            }
        }
    };

    let z = normal::two_sided_z(config.alpha);
    let band = |f: f64, n: usize| z * (f * (1.0 - f) / n as f64).sqrt();

    let mut fo = Vec::with_capacity(grid.len());
    let mut fe = Vec::with_capacity(grid.len());
    let mut bo = Vec::with_capacity(grid.len());
    let mut be = Vec::with_capacity(grid.len());
    let mut dev_i = f64::NEG_INFINITY;
    let mut dev_ii = f64::NEG_INFINITY;
    for &y in &grid {
        let o = f_o.eval(y);
        let e = f_e.eval(y);
        dev_i = dev_i.max(o - e);
        dev_ii = dev_ii.max(e - o);
        bo.push(band(o, f_o.n()));
        be.push(band(e, f_e.n()));
        fo.push(o);
        fe.push(e);
    }

    let holds_i = dev_i <= config.tol;
    let holds_ii = dev_ii <= config.tol;
    let (verdict, tie) = match (holds_i, holds_ii) {
        (true, true) => (DominanceVerdict::DominanceI, true),
        (true, false) => (DominanceVerdict::DominanceI, false),
        (false, true) => (DominanceVerdict::DominanceII, false),
        (false, false) => (DominanceVerdict::Inconclusive, false),
    };

    Ok(DominanceReport {
        grid,
        f_observational: fo,
        f_experimental: fe,
        band_observational: bo,
        band_experimental: be,
        n_observational: f_o.n(),
        n_experimental: f_e.n(),
        alpha: config.alpha,
        tol: config.tol,
        max_deviation_i: dev_i,
        max_deviation_ii: dev_ii,
        max_violation: dev_i.min(dev_ii).max(0.0),
        tie,
        verdict,
    })
}
