//! Order the two adjustment estimators into a bound pair.
//!
//! When the control regression implies a non-increasing expected growth
//! profile and one group's untreated `y1` distribution dominates the
//! other's, the `lu` and `ecb` estimates bracket the long-term effect:
//! direction I puts `lu` at the bottom and `ecb` at the top, direction II
//! the reverse. Without a dominance verdict the pair carries no order and
//! the report says so instead of guessing.

use crate::data::CombinedDataset;
use crate::dominance::{dominance_report, DominanceConfig, DominanceReport, DominanceVerdict};
use crate::error::Result;
use crate::estimands::{estimate_all, identity_residual, Estimand, EstimateReport};
use crate::inference::{bootstrap, BootstrapDistribution, BootstrapSpec};
use serde::Serialize;

/// How many difference standard errors the bounds may cross by before the
/// report flags the run as internally inconsistent.
const CROSSING_SE_BUDGET: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    /// Lower bound of the effect; absent when dominance is inconclusive.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// The dominance verdict the ordering is based on.
    pub direction: DominanceVerdict,
    pub psi_ok: bool,
    /// Residual of the exact lu/ecb link; should be floating-point noise.
    pub identity_residual: f64,
    pub flags: Vec<String>,
    pub estimates: EstimateReport,
    pub dominance: DominanceReport,
}

pub fn bracket_report(
    d: &CombinedDataset,
    boot: &BootstrapSpec,
    dom: &DominanceConfig,
    psi_tol: f64,
) -> Result<BracketReport> {
    bracket_report_from(d, &bootstrap(d, boot)?, dom, psi_tol)
}

/// Same report against an already-computed bootstrap distribution.
pub fn bracket_report_from(
    d: &CombinedDataset,
    dist: &BootstrapDistribution,
    dom: &DominanceConfig,
    psi_tol: f64,
) -> Result<BracketReport> {
    let estimates = estimate_all(d, psi_tol)?;
    let dominance = dominance_report(d, dom)?;
    let residual = identity_residual(d)?;

    let mut flags = Vec::new();
    if !estimates.psi.non_increasing {
        flags.push(format!(
            "expected growth profile is increasing (psi slope {:.6}); the bound reading is not licensed",
            estimates.psi.psi_slope
        ));
    }
    if dominance.tie {
        flags.push("distributions are indistinguishable; direction I chosen by convention".into());
    }

    let (lower, upper) = match dominance.verdict {
        DominanceVerdict::DominanceI => (Some(estimates.theta_lu), Some(estimates.theta_ecb)),
        DominanceVerdict::DominanceII => (Some(estimates.theta_ecb), Some(estimates.theta_lu)),
        DominanceVerdict::Inconclusive => {
            flags.push(
                "dominance inconclusive: lu/ecb carry no bound ordering on this dataset".into(),
            );
            (None, None)
        }
    };

    // sanity-check the ordering against sampling noise in lu - ecb
    if let (Some(lo), Some(hi)) = (lower, upper) {
        let diffs: Vec<f64> = dist
            .paired(Estimand::Lu, Estimand::Ecb)
            .iter()
            .map(|(a, b)| a - b)
            .collect();
        if diffs.len() >= 2 {
            let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let se = (diffs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                / (diffs.len() as f64 - 1.0))
                .sqrt();
            if lo > hi + CROSSING_SE_BUDGET * se {
                flags.push(format!(
                    "estimated bounds cross by more than {CROSSING_SE_BUDGET} difference SEs; \
                     dominance direction and point estimates disagree"
                ));
            }
        }
    }

    Ok(BracketReport {
        lower,
        upper,
        direction: dominance.verdict,
        psi_ok: estimates.psi.non_increasing,
        identity_residual: residual,
        flags,
        estimates,
        dominance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, CsvSchema};
    use crate::estimands::DEFAULT_PSI_TOL;

    fn load(s: &str) -> CombinedDataset {
        load_csv(s.as_bytes(), &CsvSchema::default(), "test").unwrap()
    }

    fn d0() -> CombinedDataset {
        load("g,w,y1,y2\nO,1,2,3\nO,1,4,5\nO,0,1,2\nO,0,3,4\nE,1,2,\nE,1,4,\nE,0,1,\nE,0,3,\n")
    }

    fn d2() -> CombinedDataset {
        load("g,w,y1,y2\nO,1,2,3\nO,1,4,5\nO,0,1,2\nO,0,3,3\nE,1,2,\nE,1,4,\nE,0,0,\nE,0,2,\n")
    }

    fn report(d: &CombinedDataset) -> BracketReport {
        bracket_report(
            d,
            &BootstrapSpec::new(80, 5),
            &DominanceConfig::default(),
            DEFAULT_PSI_TOL,
        )
        .unwrap()
    }

    #[test]
    fn d2_brackets_with_lu_below_ecb() {
        let r = report(&d2());
        assert_eq!(r.direction, DominanceVerdict::DominanceI);
        assert!((r.lower.unwrap() - 2.5).abs() <= 1e-12);
        assert!((r.upper.unwrap() - 3.5).abs() <= 1e-12);
        assert!(r.psi_ok);
        assert!(r.identity_residual.abs() <= 1e-12);
    }

    #[test]
    fn mirrored_d2_swaps_and_negates_the_bounds() {
        let m = load(
            "g,w,y1,y2\nO,1,-2,-3\nO,1,-4,-5\nO,0,-1,-2\nO,0,-3,-3\nE,1,-2,\nE,1,-4,\nE,0,0,\nE,0,-2,\n",
        );
        let r = report(&m);
        assert_eq!(r.direction, DominanceVerdict::DominanceII);
        assert!((r.lower.unwrap() + 3.5).abs() <= 1e-12);
        assert!((r.upper.unwrap() + 2.5).abs() <= 1e-12);
        assert!(r.lower.unwrap() <= r.upper.unwrap());
    }

    #[test]
    fn degenerate_fixture_gives_width_zero() {
        let r = report(&d0());
        assert_eq!(r.lower, r.upper);
        assert!((r.lower.unwrap() - 1.0).abs() <= 1e-12);
        assert!(r.flags.iter().any(|f| f.contains("indistinguishable")));
    }

    #[test]
    fn inconclusive_dominance_leaves_bounds_unordered() {
        let d = load(
            "g,w,y1,y2\nO,1,1,1\nO,1,2,2\nO,0,0,1\nO,0,3,4\nE,1,5,\nE,1,6,\nE,0,1,\nE,0,2,\n",
        );
        let r = report(&d);
        assert_eq!(r.direction, DominanceVerdict::Inconclusive);
        assert_eq!(r.lower, None);
        assert_eq!(r.upper, None);
        assert!(r.flags.iter().any(|f| f.contains("inconclusive")));
    }

    #[test]
    fn increasing_growth_profile_is_flagged() {
        // control cell slope 2 => psi slope 1 > 0
        let d = load(
            "g,w,y1,y2\nO,1,9,9\nO,0,0,0\nO,0,1,2\nO,0,2,4\nE,1,1,\nE,0,1,\nE,0,2,\n",
        );
        let r = report(&d);
        assert!(!r.psi_ok);
        assert!(r.flags.iter().any(|f| f.contains("not licensed")));
    }
}
