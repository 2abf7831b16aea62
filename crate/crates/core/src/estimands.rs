//! Point estimators for the long-term average treatment effect on the
//! treated (ATT) in the observational group.
//!
//! Four plug-ins are provided, all built from cell means and one ordinary
//! least squares fit:
//!
//! * `naive`: difference of long-term outcome means across observational
//!   treatment arms. Consistent only when selection is ignorable outright.
//! * `lu`: the latent-unconfoundedness estimator. Imputes the treated
//!   group's untreated long-term outcome through a regression of `y2` on
//!   `y1` fitted on observational controls and averaged over the
//!   experimental controls:
//!   `E[y2|1,O] + P(0|O) E[y2|0,O] / P(1|O) - E[m(y1)|0,E] / P(1|O)`.
//! * `ecb`: the equi-confounding estimator, which assumes the selection
//!   bias in levels carries over from the short-term outcome:
//!   `E[y2|1,O] + E[y1|0,O] / P(1|O) - E[y1|0,E] / P(1|O) - E[y2|0,O]`.
//! * `experimental`: difference of experimental arm means of `y2`, defined
//!   only when the experiment observed the long-term outcome.
//!
//! Whatever the dataset, the signed difference between `lu` and `ecb`
//! satisfies an exact algebraic identity (see [`identity_residual`]), which
//! is the basis of the bracketing logic in [`crate::bracketing`].

use crate::data::{CombinedDataset, Group};
use crate::error::{Error, Result};
use serde::Serialize;

/// Cell order used throughout: experimental untreated, experimental
/// treated, observational untreated, observational treated.
pub(crate) const CELLS: [(Group, bool); 4] = [
    (Group::Experimental, false),
    (Group::Experimental, true),
    (Group::Observational, false),
    (Group::Observational, true),
];

pub(crate) const E0: usize = 0;
pub(crate) const E1: usize = 1;
pub(crate) const O0: usize = 2;
pub(crate) const O1: usize = 3;

/// Per-cell outcome vectors in dataset order. The bootstrap resamples these
/// directly so that replicate estimation never re-materializes row structs.
#[derive(Debug, Clone)]
pub(crate) struct CellArrays {
    pub y1: [Vec<f64>; 4],
    /// Long-term outcomes; meaningful only where `y2_complete` holds.
    pub y2: [Vec<f64>; 4],
    /// True when every row of the cell carries a long-term outcome.
    pub y2_complete: [bool; 4],
}

impl CellArrays {
    pub(crate) fn from_dataset(d: &CombinedDataset) -> Self {
        let mut y1: [Vec<f64>; 4] = Default::default();
        let mut y2: [Vec<f64>; 4] = Default::default();
        let mut complete = [true; 4];
        for (i, (g, w)) in CELLS.iter().enumerate() {
            for row in d.cell(*g, *w) {
                y1[i].push(row.y1);
                match row.y2 {
                    Some(v) => y2[i].push(v),
                    None => complete[i] = false,
                }
            }
            if !complete[i] {
                y2[i].clear();
            }
        }
        CellArrays {
            y1,
            y2,
            y2_complete: complete,
        }
    }

    pub(crate) fn n(&self, cell: usize) -> usize {
        self.y1[cell].len()
    }

    fn require_nonempty(&self) -> Result<()> {
        for (i, (g, w)) in CELLS.iter().enumerate() {
            if self.n(i) == 0 {
                return Err(Error::EmptyCell {
                    group: *g,
                    treated: *w,
                });
            }
        }
        Ok(())
    }

    fn require_observational_y2(&self) -> Result<()> {
        for cell in [O0, O1] {
            if !self.y2_complete[cell] {
                return Err(Error::Validation(
                    "observational rows are missing long-term outcomes".into(),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Least squares line fit; errors when fewer than two points or no spread
/// in the regressor.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::IllPosedRegression(format!(
            "need at least 2 observations, have {}",
            x.len()
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx <= 0.0 {
        return Err(Error::IllPosedRegression(
            "regressor has no variation".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Cell means, cell sizes, and treatment shares.
#[derive(Debug, Clone, Serialize)]
pub struct CellMoments {
    pub n: usize,
    pub mean_y1: f64,
    /// Absent when the cell does not carry complete long-term outcomes.
    pub mean_y2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Moments {
    pub experimental_untreated: CellMoments,
    pub experimental_treated: CellMoments,
    pub observational_untreated: CellMoments,
    pub observational_treated: CellMoments,
    /// P(treated | experimental group).
    pub treat_prob_experimental: f64,
    /// P(treated | observational group).
    pub treat_prob_observational: f64,
}

impl Moments {
    pub fn cell(&self, group: Group, treated: bool) -> &CellMoments {
        match (group, treated) {
            (Group::Experimental, false) => &self.experimental_untreated,
            (Group::Experimental, true) => &self.experimental_treated,
            (Group::Observational, false) => &self.observational_untreated,
            (Group::Observational, true) => &self.observational_treated,
        }
    }

    pub fn treat_prob(&self, group: Group) -> f64 {
        match group {
            Group::Experimental => self.treat_prob_experimental,
            Group::Observational => self.treat_prob_observational,
        }
    }

    pub fn mean_y1(&self, group: Group, treated: bool) -> f64 {
        self.cell(group, treated).mean_y1
    }

    pub fn mean_y2(&self, group: Group, treated: bool) -> Result<f64> {
        self.cell(group, treated)
            .mean_y2
            .ok_or(Error::ExperimentalOutcomeUnavailable)
    }
}

fn moments_from_cells(c: &CellArrays) -> Result<Moments> {
    c.require_nonempty()?;
    let cm = |i: usize| CellMoments {
        n: c.n(i),
        mean_y1: mean(&c.y1[i]),
        mean_y2: if c.y2_complete[i] && c.n(i) > 0 {
            Some(mean(&c.y2[i]))
        } else {
            None
        },
    };
    let e0 = cm(E0);
    let e1 = cm(E1);
    let o0 = cm(O0);
    let o1 = cm(O1);
    let pe = e1.n as f64 / (e0.n + e1.n) as f64;
    let po = o1.n as f64 / (o0.n + o1.n) as f64;
    Ok(Moments {
        experimental_untreated: e0,
        experimental_treated: e1,
        observational_untreated: o0,
        observational_treated: o1,
        treat_prob_experimental: pe,
        treat_prob_observational: po,
    })
}

/// Conditional means and treatment shares per cell. Errors (naming the
/// cell) if any design cell is empty.
pub fn compute_moments(d: &CombinedDataset) -> Result<Moments> {
    moments_from_cells(&CellArrays::from_dataset(d))
}

/// The control regression: least squares of `y2` on `y1` with intercept,
/// fitted on observational untreated rows only.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn predict(&self, y1: f64) -> f64 {
        self.intercept + self.slope * y1
    }
}

fn fit_from_cells(c: &CellArrays) -> Result<LinearFit> {
    c.require_observational_y2()?;
    let (intercept, slope) = ols(&c.y1[O0], &c.y2[O0])?;
    Ok(LinearFit {
        intercept,
        slope,
        n: c.n(O0),
    })
}

pub fn fit_control_regression(d: &CombinedDataset) -> Result<LinearFit> {
    fit_from_cells(&CellArrays::from_dataset(d))
}

/// Diagnostic for the shape of the expected untreated growth
/// `E[y2 - y1 | y1, untreated, O]` implied by the control regression: its
/// slope is the fitted slope minus one. A non-increasing profile (slope at
/// most `tolerance` above zero... i.e. `psi_slope <= tolerance`) is what
/// licenses reading the two estimators as ordered bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiDiagnostic {
    pub psi_intercept: f64,
    pub psi_slope: f64,
    pub non_increasing: bool,
    pub tolerance: f64,
}

pub const DEFAULT_PSI_TOL: f64 = 1e-9;

pub fn estimate_psi(d: &CombinedDataset, tolerance: f64) -> Result<PsiDiagnostic> {
    let fit = fit_control_regression(d)?;
    Ok(psi_from_fit(&fit, tolerance))
}

fn psi_from_fit(fit: &LinearFit, tolerance: f64) -> PsiDiagnostic {
    let psi_slope = fit.slope - 1.0;
    PsiDiagnostic {
        psi_intercept: fit.intercept,
        psi_slope,
        non_increasing: psi_slope <= tolerance,
        tolerance,
    }
}

fn lu_from_parts(m: &Moments, fit: &LinearFit, e0_y1: &[f64]) -> Result<f64> {
    let p1 = m.treat_prob(Group::Observational);
    let mhat: Vec<f64> = e0_y1.iter().map(|&y| fit.predict(y)).collect();
    Ok(m.mean_y2(Group::Observational, true)?
        + (1.0 - p1) * m.mean_y2(Group::Observational, false)? / p1
        - mean(&mhat) / p1)
}

fn ecb_from_moments(m: &Moments) -> Result<f64> {
    let p1 = m.treat_prob(Group::Observational);
    Ok(m.mean_y2(Group::Observational, true)?
        + m.mean_y1(Group::Observational, false) / p1
        - m.mean_y1(Group::Experimental, false) / p1
        - m.mean_y2(Group::Observational, false)?)
}

/// Difference of observational arm means of the long-term outcome.
pub fn estimate_naive(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    c.require_observational_y2()?;
    let m = moments_from_cells(&c)?;
    Ok(m.mean_y2(Group::Observational, true)? - m.mean_y2(Group::Observational, false)?)
}

/// Latent-unconfoundedness plug-in.
pub fn estimate_lu(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    c.require_observational_y2()?;
    let m = moments_from_cells(&c)?;
    let fit = fit_from_cells(&c)?;
    lu_from_parts(&m, &fit, &c.y1[E0])
}

/// Equi-confounding plug-in.
pub fn estimate_ecb(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    c.require_observational_y2()?;
    let m = moments_from_cells(&c)?;
    ecb_from_moments(&m)
}

/// Experimental difference of long-term outcome means; requires the
/// experiment to have recorded `y2` in both arms.
pub fn estimate_experimental(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    let m = moments_from_cells(&c)?;
    Ok(m.mean_y2(Group::Experimental, true)? - m.mean_y2(Group::Experimental, false)?)
}

/// Every estimand this crate knows about, in a fixed reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Naive,
    Lu,
    Ecb,
    Experimental,
}

impl Estimand {
    pub const ALL: [Estimand; 4] = [
        Estimand::Naive,
        Estimand::Lu,
        Estimand::Ecb,
        Estimand::Experimental,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            Estimand::Naive => "naive",
            Estimand::Lu => "lu",
            Estimand::Ecb => "ecb",
            Estimand::Experimental => "experimental",
        }
    }
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Point estimates plus the ingredients they were computed from.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub theta_naive: f64,
    pub theta_lu: f64,
    pub theta_ecb: f64,
    /// Present only when the experimental group carries long-term outcomes.
    pub theta_experimental: Option<f64>,
    pub moments: Moments,
    pub control_fit: LinearFit,
    pub psi: PsiDiagnostic,
}

impl EstimateReport {
    pub fn get(&self, est: Estimand) -> Option<f64> {
        match est {
            Estimand::Naive => Some(self.theta_naive),
            Estimand::Lu => Some(self.theta_lu),
            Estimand::Ecb => Some(self.theta_ecb),
            Estimand::Experimental => self.theta_experimental,
        }
    }

    /// Estimands that are defined on this dataset.
    pub fn available(&self) -> Vec<Estimand> {
        Estimand::ALL
            .iter()
            .copied()
            .filter(|e| self.get(*e).is_some())
            .collect()
    }
}

/// Per-estimand values with independent failure: used on bootstrap
/// replicates, where e.g. a resample without regressor variation loses the
/// `lu` value but not the others.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LenientEstimates {
    pub naive: Option<f64>,
    pub lu: Option<f64>,
    pub ecb: Option<f64>,
    pub experimental: Option<f64>,
}

impl LenientEstimates {
    pub(crate) fn get(&self, est: Estimand) -> Option<f64> {
        match est {
            Estimand::Naive => self.naive,
            Estimand::Lu => self.lu,
            Estimand::Ecb => self.ecb,
            Estimand::Experimental => self.experimental,
        }
    }
}

pub(crate) fn lenient_from_cells(c: &CellArrays) -> LenientEstimates {
    let mut out = LenientEstimates::default();
    let Ok(m) = moments_from_cells(c) else {
        return out;
    };
    if c.y2_complete[O0] && c.y2_complete[O1] {
        let y2_o1 = m.mean_y2(Group::Observational, true).expect("complete");
        let y2_o0 = m.mean_y2(Group::Observational, false).expect("complete");
        out.naive = Some(y2_o1 - y2_o0);
        out.ecb = ecb_from_moments(&m).ok();
        if let Ok(fit) = fit_from_cells(c) {
            out.lu = lu_from_parts(&m, &fit, &c.y1[E0]).ok();
        }
    }
    if c.y2_complete[E0] && c.y2_complete[E1] {
        out.experimental = Some(mean(&c.y2[E1]) - mean(&c.y2[E0]));
    }
    out
}

pub(crate) fn report_from_cells(c: &CellArrays, psi_tol: f64) -> Result<EstimateReport> {
    c.require_observational_y2()?;
    let m = moments_from_cells(c)?;
    let fit = fit_from_cells(c)?;
    let naive = m.mean_y2(Group::Observational, true)? - m.mean_y2(Group::Observational, false)?;
    let lu = lu_from_parts(&m, &fit, &c.y1[E0])?;
    let ecb = ecb_from_moments(&m)?;
    let experimental = if c.y2_complete[E0] && c.y2_complete[E1] {
        Some(mean(&c.y2[E1]) - mean(&c.y2[E0]))
    } else {
        None
    };
    let psi = psi_from_fit(&fit, psi_tol);
    Ok(EstimateReport {
        theta_naive: naive,
        theta_lu: lu,
        theta_ecb: ecb,
        theta_experimental: experimental,
        moments: m,
        control_fit: fit,
        psi,
    })
}

/// Compute every available estimand at once, sharing the moment and
/// regression work.
pub fn estimate_all(d: &CombinedDataset, psi_tol: f64) -> Result<EstimateReport> {
    report_from_cells(&CellArrays::from_dataset(d), psi_tol)
}

/// Residual of the exact link between the two adjustment estimators:
///
/// `P(1|O) (lu - ecb) = E[y2 - y1 | 0, O] - E[m(y1) - y1 | 0, E]`
///
/// This holds algebraically for any dataset on which both estimators are
/// defined, so the residual is floating-point noise; anything materially
/// nonzero indicates an implementation fault, and the bracketing report
/// carries it for that reason.
pub fn identity_residual(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    c.require_observational_y2()?;
    let m = moments_from_cells(&c)?;
    let fit = fit_from_cells(&c)?;
    let lu = lu_from_parts(&m, &fit, &c.y1[E0])?;
    let ecb = ecb_from_moments(&m)?;
    let p1 = m.treat_prob(Group::Observational);

    let growth_o0: Vec<f64> = c.y1[O0]
        .iter()
        .zip(&c.y2[O0])
        .map(|(y1, y2)| y2 - y1)
        .collect();
    let excess_e0: Vec<f64> = c.y1[E0].iter().map(|&y| fit.predict(y) - y).collect();

    Ok(p1 * (lu - ecb) - (mean(&growth_o0) - mean(&excess_e0)))
}

/// Analytic large-sample standard error of the naive contrast, used as a
/// sanity yardstick for the bootstrap: sqrt(var(y2|1,O)/n1 + var(y2|0,O)/n0).
pub fn naive_two_sample_se(d: &CombinedDataset) -> Result<f64> {
    let c = CellArrays::from_dataset(d);
    c.require_observational_y2()?;
    if c.n(O0) < 2 || c.n(O1) < 2 {
        return Err(Error::Degenerate(
            "need at least 2 rows per observational arm".into(),
        ));
    }
    let v1 = sample_variance(&c.y2[O1]);
    let v0 = sample_variance(&c.y2[O0]);
    Ok((v1 / c.n(O1) as f64 + v0 / c.n(O0) as f64).sqrt())
}
