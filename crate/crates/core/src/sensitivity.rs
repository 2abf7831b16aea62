//! Sensitivity analysis for the equi-confounding estimator.
//!
//! The `ecb` estimator is exact when untreated growth is mean-independent
//! of selection. The relaxation here lets the untreated long-term outcome
//! regress toward the mean at rate `rho` instead of following it one for
//! one: centered short-term outcomes `y1' = y1 - E[y1 | untreated, E]` are
//! mapped through a family `phi(. ; rho)` and the implied bias is
//!
//! `delta(rho) = ( E[phi(y1') - y1' | 0, E] - E[phi(y1') - y1' | 0, O] ) / P(1|O)`
//!
//! with both terms scaled by the observational treated share. The adjusted
//! estimate is `ecb - delta(rho)`; at `rho = 1` the linear family gives
//! back `ecb` exactly.

use crate::data::{CombinedDataset, Group};
use crate::error::{Error, Result};
use crate::estimands::{compute_moments, estimate_ecb};
use serde::Serialize;

/// Deviation family `phi(y; rho)`.
///
/// * `Linear` is `phi(y; rho) = rho * y`: a constant autoregressive pull
///   toward the centering point.
/// * `Custom` supplies a tabulated base map `t` (strictly increasing grid,
///   linear interpolation between knots) and scales it: `phi(y; rho) =
///   rho * t(y)`. With the identity table this reproduces `Linear`.
///   Evaluation outside the tabulated range is an error, not an
///   extrapolation.
#[derive(Debug, Clone)]
pub enum PhiSpec {
    Linear,
    Custom { table: Vec<(f64, f64)> },
}

impl PhiSpec {
    fn validate(&self) -> Result<()> {
        if let PhiSpec::Custom { table } = self {
            if table.len() < 2 {
                return Err(Error::BadConfig(
                    "custom deviation table needs at least 2 knots".into(),
                ));
            }
            for pair in table.windows(2) {
                // partial_cmp so that NaN knots are rejected, not let through
                if pair[1].0.partial_cmp(&pair[0].0) != Some(std::cmp::Ordering::Greater) {
                    return Err(Error::BadConfig(
                        "custom deviation table knots must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn eval(&self, y: f64, rho: f64) -> Result<f64> {
        match self {
            PhiSpec::Linear => Ok(rho * y),
            PhiSpec::Custom { table } => {
                let first = table.first().expect("validated");
                let last = table.last().expect("validated");
                if y < first.0 || y > last.0 {
                    return Err(Error::BadConfig(format!(
                        "custom deviation map evaluated at {y}, outside its tabulated range [{}, {}]",
                        first.0, last.0
                    )));
                }
                let idx = table.partition_point(|(x, _)| *x <= y);
                let t = if idx == 0 {
                    first.1
                } else if idx == table.len() {
                    last.1
                } else {
                    let (x0, t0) = table[idx - 1];
                    let (x1, t1) = table[idx];
                    t0 + (t1 - t0) * (y - x0) / (x1 - x0)
                };
                Ok(rho * t)
            }
        }
    }
}

/// Short-term outcomes of the two untreated cells, centered by the
/// experimental untreated mean.
#[derive(Debug, Clone)]
pub struct CenteredY1 {
    pub center: f64,
    pub experimental: Vec<f64>,
    pub observational: Vec<f64>,
}

pub fn centered_y1(d: &CombinedDataset) -> Result<CenteredY1> {
    let e: Vec<f64> = d.y1_values(Group::Experimental, false);
    let o: Vec<f64> = d.y1_values(Group::Observational, false);
    if e.is_empty() {
        return Err(Error::EmptyCell {
            group: Group::Experimental,
            treated: false,
        });
    }
    if o.is_empty() {
        return Err(Error::EmptyCell {
            group: Group::Observational,
            treated: false,
        });
    }
    let center = e.iter().sum::<f64>() / e.len() as f64;
    Ok(CenteredY1 {
        center,
        experimental: e.iter().map(|v| v - center).collect(),
        observational: o.iter().map(|v| v - center).collect(),
    })
}

fn mean_phi_gap(phi: &PhiSpec, rho: f64, values: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &y in values {
        acc += phi.eval(y, rho)? - y;
    }
    Ok(acc / values.len() as f64)
}

/// The bias the deviation family implies for the `ecb` estimator at a given
/// `rho`.
pub fn delta(d: &CombinedDataset, phi: &PhiSpec, rho: f64) -> Result<f64> {
    phi.validate()?;
    let centered = centered_y1(d)?;
    let p1 = compute_moments(d)?.treat_prob(Group::Observational);
    let term_e = mean_phi_gap(phi, rho, &centered.experimental)?;
    let term_o = mean_phi_gap(phi, rho, &centered.observational)?;
    Ok(term_e / p1 - term_o / p1)
}

/// `ecb` point estimate corrected for the deviation at `rho`.
pub fn adjusted_ecb(d: &CombinedDataset, phi: &PhiSpec, rho: f64) -> Result<f64> {
    Ok(estimate_ecb(d)? - delta(d, phi, rho)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCurve {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub theta_ecb: f64,
}

/// Evaluate the adjustment over an inclusive, evenly spaced `rho` grid.
pub fn sensitivity_curve(
    d: &CombinedDataset,
    phi: &PhiSpec,
    rho_min: f64,
    rho_max: f64,
    steps: usize,
) -> Result<SensitivityCurve> {
    if steps < 2 {
        return Err(Error::BadConfig(format!(
            "sensitivity grid needs at least 2 steps, got {steps}"
        )));
    }
    if !(rho_min.is_finite() && rho_max.is_finite() && rho_min < rho_max) {
        return Err(Error::BadConfig(format!(
            "invalid rho range [{rho_min}, {rho_max}]"
        )));
    }
    let theta_ecb = estimate_ecb(d)?;
    let mut rho = Vec::with_capacity(steps);
    let mut deltas = Vec::with_capacity(steps);
    let mut adjusted = Vec::with_capacity(steps);
    for i in 0..steps {
        let r = if i + 1 == steps {
            rho_max
        } else {
            rho_min + (rho_max - rho_min) * i as f64 / (steps - 1) as f64
        };
        let dl = delta(d, phi, r)?;
        rho.push(r);
        deltas.push(dl);
        adjusted.push(theta_ecb - dl);
    }
    Ok(SensitivityCurve {
        rho,
        delta: deltas,
        adjusted,
        theta_ecb,
    })
}

/// Smallest deviation rate at which the adjusted estimate hits `target`.
///
/// The linear family is affine in `rho`, so the root is solved in closed
/// form (a constant curve that never attains the target is an error). Other
/// families are bisected over `bracket`, which must straddle a sign change;
/// the root is located to 1e-10.
pub fn solve_rho_star(
    d: &CombinedDataset,
    phi: &PhiSpec,
    target: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    phi.validate()?;
    let theta_ecb = estimate_ecb(d)?;
    if let PhiSpec::Linear = phi {
        // delta(rho) = (rho - 1) * k, so delta at rho = 2 is k itself
        let k = delta(d, phi, 2.0)?;
        if k == 0.0 {
            if target == theta_ecb {
                return Ok(1.0);
            }
            return Err(Error::TargetNotAttainable(
                "adjustment is constant in rho on this dataset (centered means vanish)".into(),
            ));
        }
        return Ok(1.0 + (theta_ecb - target) / k);
    }

    let (mut lo, mut hi) = bracket;
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::BadConfig(format!(
            "invalid bracket [{lo}, {hi}] for the root search"
        )));
    }
    let f = |r: f64| -> Result<f64> { Ok(adjusted_ecb(d, phi, r)? - target) };
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::TargetNotAttainable(format!(
            "adjusted estimate does not cross {target} over [{lo}, {hi}]"
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid)?;
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, CsvSchema};

    fn load(s: &str) -> CombinedDataset {
        load_csv(s.as_bytes(), &CsvSchema::default(), "test").unwrap()
    }

    fn d0() -> CombinedDataset {
        load("g,w,y1,y2\nO,1,2,3\nO,1,4,5\nO,0,1,2\nO,0,3,4\nE,1,2,\nE,1,4,\nE,0,1,\nE,0,3,\n")
    }

    fn d2() -> CombinedDataset {
        load("g,w,y1,y2\nO,1,2,3\nO,1,4,5\nO,0,1,2\nO,0,3,3\nE,1,2,\nE,1,4,\nE,0,0,\nE,0,2,\n")
    }

    #[test]
    fn centering_uses_the_experimental_untreated_mean() {
        let c = centered_y1(&d2()).unwrap();
        assert_eq!(c.center, 1.0);
        assert_eq!(c.experimental, vec![-1.0, 1.0]);
        assert_eq!(c.observational, vec![0.0, 2.0]);
    }

    #[test]
    fn delta_on_d2_is_affine_with_known_slope() {
        let d = d2();
        for rho in [0.5, 0.6, 0.75, 1.0, 1.25] {
            let val = delta(&d, &PhiSpec::Linear, rho).unwrap();
            assert!(
                (val - 2.0 * (1.0 - rho)).abs() <= 1e-12,
                "delta({rho}) = {val}"
            );
        }
    }

    #[test]
    fn delta_at_one_is_exactly_zero_for_linear() {
        assert_eq!(delta(&d2(), &PhiSpec::Linear, 1.0).unwrap(), 0.0);
        assert_eq!(delta(&d0(), &PhiSpec::Linear, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_fixture_has_constant_curve() {
        let d = d0();
        for rho in [0.5, 0.8, 1.0] {
            assert_eq!(delta(&d, &PhiSpec::Linear, rho).unwrap(), 0.0);
        }
        let err = solve_rho_star(&d, &PhiSpec::Linear, 2.0, (0.5, 1.0)).unwrap_err();
        assert!(matches!(err, Error::TargetNotAttainable(_)));
        // the constant curve does attain its own value
        assert_eq!(
            solve_rho_star(&d, &PhiSpec::Linear, 1.0, (0.5, 1.0)).unwrap(),
            1.0
        );
    }

    #[test]
    fn curve_on_d2_matches_hand_computed_values() {
        let curve = sensitivity_curve(&d2(), &PhiSpec::Linear, 0.5, 1.0, 6).unwrap();
        let expect = [2.5, 2.7, 2.9, 3.1, 3.3, 3.5];
        assert_eq!(curve.rho.len(), 6);
        for (a, e) in curve.adjusted.iter().zip(expect) {
            assert!((a - e).abs() <= 1e-12, "{a} vs {e}");
        }
        // endpoint is bit-exact ecb
        assert_eq!(*curve.adjusted.last().unwrap(), curve.theta_ecb);
        assert_eq!(*curve.rho.last().unwrap(), 1.0);
    }

    #[test]
    fn curve_is_affine_in_rho_for_linear() {
        let curve = sensitivity_curve(&d2(), &PhiSpec::Linear, 0.25, 1.75, 11).unwrap();
        for w in curve.adjusted.windows(3) {
            let second_diff = w[2] - 2.0 * w[1] + w[0];
            assert!(second_diff.abs() <= 1e-12);
        }
    }

    #[test]
    fn two_step_curve_hits_the_endpoints_only() {
        let curve = sensitivity_curve(&d2(), &PhiSpec::Linear, 0.5, 1.0, 2).unwrap();
        assert_eq!(curve.rho, vec![0.5, 1.0]);
        assert!(sensitivity_curve(&d2(), &PhiSpec::Linear, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn rho_star_on_d2_is_exact() {
        let star = solve_rho_star(&d2(), &PhiSpec::Linear, 2.5, (0.5, 1.0)).unwrap();
        assert_eq!(star, 0.5);
    }

    #[test]
    fn custom_identity_table_reproduces_linear() {
        let d = d2();
        // knots cover the centered values {-1, 1} and {0, 2}
        let table = PhiSpec::Custom {
            table: vec![(-2.0, -2.0), (0.0, 0.0), (3.0, 3.0)],
        };
        for rho in [0.5, 0.9, 1.0] {
            let a = delta(&d, &table, rho).unwrap();
            let b = delta(&d, &PhiSpec::Linear, rho).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn custom_half_slope_table_matches_scaled_linear() {
        let d = d2();
        let table = PhiSpec::Custom {
            table: vec![(-1.0, -0.5), (0.0, 0.0), (2.0, 1.0)],
        };
        // rho * t(y) with t(y) = y/2 equals the linear family at rho/2
        let a = delta(&d, &table, 1.0).unwrap();
        let b = delta(&d, &PhiSpec::Linear, 0.5).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn custom_table_refuses_extrapolation() {
        let d = d2();
        let table = PhiSpec::Custom {
            table: vec![(-0.5, -0.5), (0.5, 0.5)],
        };
        assert!(delta(&d, &table, 1.0).is_err());
    }

    #[test]
    fn custom_table_bisection_finds_the_root() {
        let d = d2();
        let table = PhiSpec::Custom {
            table: vec![(-2.0, -2.0), (0.0, 0.0), (3.0, 3.0)],
        };
        // identity table == linear family, so the root is 0.5 again
        let star = solve_rho_star(&d, &table, 2.5, (0.4, 1.2)).unwrap();
        assert!((star - 0.5).abs() <= 1e-9);
        let err = solve_rho_star(&d, &table, 99.0, (0.4, 1.2)).unwrap_err();
        assert!(matches!(err, Error::TargetNotAttainable(_)));
    }

    #[test]
    fn malformed_custom_tables_are_rejected() {
        let d = d2();
        let dup = PhiSpec::Custom {
            table: vec![(0.0, 0.0), (0.0, 1.0)],
        };
        assert!(delta(&d, &dup, 1.0).is_err());
        let short = PhiSpec::Custom {
            table: vec![(0.0, 0.0)],
        };
        assert!(delta(&d, &short, 1.0).is_err());
    }
}
