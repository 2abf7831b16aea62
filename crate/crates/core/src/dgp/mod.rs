//! Synthetic panel laboratory.
//!
//! Each family draws latent shocks, builds both potential outcomes for both
//! periods, and applies a selection rule to the observational group. The
//! experimental group gets a fair coin instead, and group membership itself
//! is assigned by unit index, so it cannot depend on any latent draw. Panels
//! retain everything, which gives the harness an exact oracle for the effect
//! on the treated.

mod monte_carlo;

pub use monte_carlo::{
    derive_seed, monte_carlo, DeltaCheck, McBootstrap, McEstimandStats, McEstimatorConfig,
    McReport,
};

use crate::data::{CombinedDataset, Group, ObservationRow};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A univariate shock distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Noise {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl Noise {
    fn validate(&self, what: &str) -> Result<()> {
        let ok = match self {
            Noise::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
            Noise::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadConfig(format!("invalid {what} distribution: {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Noise::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Noise::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// The latent draws behind one unit. Slot meanings are per family; unused
/// slots are zero.
///
/// * `Ldv` / `Ashenfelter`: `eps1` is the raw first-period outcome draw,
///   `eps2` the second-period shock, `nu` the selection noise (`Ldv` only).
/// * `SubMartingale` / `ImperfectForesight`: `alpha` is the persistent
///   factor; `eps1`, `eps2`, `nu` as labeled.
/// * `Roy`: `alpha` holds the additive unit effect, `nu` the factor-loading
///   effect, `eta1`/`eta2` the realized period gains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Shocks {
    pub alpha: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub nu: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// One simulated unit with full potential outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimUnit {
    pub group: Group,
    pub treated: bool,
    pub y1_untreated: f64,
    pub y1_treated: f64,
    pub y2_untreated: f64,
    pub y2_treated: f64,
    /// Realized outcomes: the treated arm if treated, else the untreated arm.
    pub y1: f64,
    pub y2: f64,
    pub shocks: Shocks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPanel {
    pub spec: DgpSpec,
    pub seed: u64,
    pub units: Vec<SimUnit>,
}

/// Selection mechanism plus outcome model.
///
/// Unless noted, every family adds constant treatment effects `effect_y1`
/// and `effect_y2` on top of the untreated arms, so the effect on the
/// treated equals `effect_y2` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Family {
    /// Opt-out on the short-term outcome with a persistence parameter:
    /// `y2(0) = intercept + slope * y1(0) + shock`, treated iff
    /// `y1(0) + nu <= threshold`. Selection carries no information about
    /// `y2(0)` beyond `y1(0)`, so the regression-based estimator is
    /// consistent; the growth-equality one is off unless `slope = 1`.
    Ldv {
        intercept: f64,
        slope: f64,
        y1_noise: Noise,
        shock: Noise,
        selection_noise: Noise,
        threshold: f64,
        effect_y1: f64,
        effect_y2: f64,
    },
    /// Selection on a persistent factor: `y1(0) = mu1 + alpha`,
    /// `y2(0) = mu2 + rho0 * alpha + shock`, treated iff
    /// `alpha + nu <= threshold`. At `rho0 = 1` untreated growth is
    /// independent of selection; below 1 the factor regresses toward the
    /// mean and growth equality fails by a known, computable amount.
    SubMartingale {
        rho0: f64,
        mu1: f64,
        mu2: f64,
        alpha: Noise,
        shock: Noise,
        selection_noise: Noise,
        threshold: f64,
        effect_y1: f64,
        effect_y2: f64,
    },
    /// Opt-out on a discounted sum of both untreated outcomes:
    /// treated iff `y1(0) + beta * y2(0) <= threshold`, with the same
    /// linear outcome model as `Ldv`. At `beta = 0` selection conditions
    /// only on `y1(0)`; for `beta > 0` it leaks the second-period shock.
    Ashenfelter {
        beta: f64,
        threshold: f64,
        intercept: f64,
        slope: f64,
        y1_noise: Noise,
        shock: Noise,
        effect_y1: f64,
        effect_y2: f64,
    },
    /// Selection on gains under a two-way fixed-effect outcome model:
    /// `y_t(0) = alpha0 + lambda0[t] + alpha1 * lambda1[t] + eps_t`, period
    /// gains `delta_t = gain_t draw + gain_loading * alpha1` (clamped at 0
    /// by default), treated iff `weights . (delta_1, delta_2) > kappa`.
    /// Untreated growth is invariant to selection whenever the factor
    /// loadings are equal across periods.
    Roy {
        lambda0: [f64; 2],
        lambda1: [f64; 2],
        alpha0: Noise,
        alpha1: Noise,
        gain1: Noise,
        gain2: Noise,
        #[serde(default)]
        gain_loading: f64,
        shock: Noise,
        weights: [f64; 2],
        kappa: f64,
        #[serde(default = "default_true")]
        clamp_gains: bool,
    },
    /// Selection on a noisy forecast of the latent factor, with a switch on
    /// whether the first-period outcome reveals that factor.
    ///
    /// Invertible: `y1(0) = loc1 + scale1 * alpha` (strictly monotone),
    /// `y2(0) = loc2 + slope2 * alpha + shock2`, treated iff
    /// `alpha + foresight * eps1 + nu <= threshold`.
    ///
    /// Non-invertible: `y1(0) = loc1 + scale1 * |alpha|` folds the factor,
    /// `y2(0) = loc2 + gap * 1{alpha < 0} + shock2`, treated iff
    /// `alpha >= 0`. Each positive `y1(0)` level mixes two branches whose
    /// `y2(0)` means differ by `gap`, and selection separates the branches
    /// perfectly, so the regression-based estimator misses by `gap`. The
    /// fields `foresight`, `threshold`, `selection_noise`, and `slope2` are
    /// ignored on this branch (and `gap` on the other).
    ImperfectForesight {
        invertible: bool,
        alpha: Noise,
        shock1: Noise,
        shock2: Noise,
        selection_noise: Noise,
        threshold: f64,
        foresight: f64,
        loc1: f64,
        scale1: f64,
        loc2: f64,
        slope2: f64,
        #[serde(default)]
        gap: f64,
        effect_y1: f64,
        effect_y2: f64,
    },
}

fn default_true() -> bool {
    true
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Ldv { .. } => "ldv",
            Family::SubMartingale { .. } => "sub_martingale",
            Family::Ashenfelter { .. } => "ashenfelter",
            Family::Roy { .. } => "roy",
            Family::ImperfectForesight { .. } => "imperfect_foresight",
        }
    }

    fn validate(&self) -> Result<()> {
        let check_finite = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::BadConfig(format!("{what} must be finite, got {v}")))
            }
        };
        match self {
            Family::Ldv {
                intercept,
                slope,
                y1_noise,
                shock,
                selection_noise,
                threshold,
                effect_y1,
                effect_y2,
            } => {
                y1_noise.validate("y1_noise")?;
                shock.validate("shock")?;
                selection_noise.validate("selection_noise")?;
                for (v, w) in [
                    (*intercept, "intercept"),
                    (*slope, "slope"),
                    (*threshold, "threshold"),
                    (*effect_y1, "effect_y1"),
                    (*effect_y2, "effect_y2"),
                ] {
                    check_finite(v, w)?;
                }
                Ok(())
            }
            Family::SubMartingale {
                rho0,
                mu1,
                mu2,
                alpha,
                shock,
                selection_noise,
                threshold,
                effect_y1,
                effect_y2,
            } => {
                if !(*rho0 > 0.0 && *rho0 <= 1.0) {
                    return Err(Error::BadConfig(format!(
                        "rho0 must lie in (0, 1], got {rho0}"
                    )));
                }
                alpha.validate("alpha")?;
                shock.validate("shock")?;
                selection_noise.validate("selection_noise")?;
                for (v, w) in [
                    (*mu1, "mu1"),
                    (*mu2, "mu2"),
                    (*threshold, "threshold"),
                    (*effect_y1, "effect_y1"),
                    (*effect_y2, "effect_y2"),
                ] {
                    check_finite(v, w)?;
                }
                Ok(())
            }
            Family::Ashenfelter {
                beta,
                threshold,
                intercept,
                slope,
                y1_noise,
                shock,
                effect_y1,
                effect_y2,
            } => {
                if !(*beta >= 0.0 && *beta <= 1.0) {
                    return Err(Error::BadConfig(format!(
                        "beta must lie in [0, 1], got {beta}"
                    )));
                }
                y1_noise.validate("y1_noise")?;
                shock.validate("shock")?;
                check_finite(*threshold, "threshold")?;
                for (v, w) in [
                    (*intercept, "intercept"),
                    (*slope, "slope"),
                    (*effect_y1, "effect_y1"),
                    (*effect_y2, "effect_y2"),
                ] {
                    check_finite(v, w)?;
                }
                Ok(())
            }
            Family::Roy {
                lambda0,
                lambda1,
                alpha0,
                alpha1,
                gain1,
                gain2,
                gain_loading,
                shock,
                weights,
                kappa,
                ..
            } => {
                alpha0.validate("alpha0")?;
                alpha1.validate("alpha1")?;
                gain1.validate("gain1")?;
                gain2.validate("gain2")?;
                shock.validate("shock")?;
                for (v, w) in [
                    (lambda0[0], "lambda0[0]"),
                    (lambda0[1], "lambda0[1]"),
                    (lambda1[0], "lambda1[0]"),
                    (lambda1[1], "lambda1[1]"),
                    (weights[0], "weights[0]"),
                    (weights[1], "weights[1]"),
                    (*gain_loading, "gain_loading"),
                    (*kappa, "kappa"),
                ] {
                    check_finite(v, w)?;
                }
                Ok(())
            }
            Family::ImperfectForesight {
                invertible,
                alpha,
                shock1,
                shock2,
                selection_noise,
                threshold,
                foresight,
                loc1,
                scale1,
                loc2,
                slope2,
                gap,
                effect_y1,
                effect_y2,
            } => {
                alpha.validate("alpha")?;
                shock1.validate("shock1")?;
                shock2.validate("shock2")?;
                selection_noise.validate("selection_noise")?;
                if *invertible && *scale1 == 0.0 {
                    return Err(Error::BadConfig(
                        "scale1 must be nonzero for an invertible first-period map".into(),
                    ));
                }
                for (v, w) in [
                    (*threshold, "threshold"),
                    (*foresight, "foresight"),
                    (*loc1, "loc1"),
                    (*scale1, "scale1"),
                    (*loc2, "loc2"),
                    (*slope2, "slope2"),
                    (*gap, "gap"),
                    (*effect_y1, "effect_y1"),
                    (*effect_y2, "effect_y2"),
                ] {
                    check_finite(v, w)?;
                }
                Ok(())
            }
        }
    }

    fn sample_unit(&self, group: Group, rng: &mut ChaCha8Rng) -> SimUnit {
        match *self {
            Family::Ldv {
                intercept,
                slope,
                y1_noise,
                shock,
                selection_noise,
                threshold,
                effect_y1,
                effect_y2,
            } => {
                let eps1 = y1_noise.sample(rng);
                let eps2 = shock.sample(rng);
                let nu = selection_noise.sample(rng);
                let y1_0 = eps1;
                let y2_0 = intercept + slope * y1_0 + eps2;
                let treated = assign(group, rng, y1_0 + nu <= threshold);
                build_unit(
                    group,
                    treated,
                    y1_0,
                    y1_0 + effect_y1,
                    y2_0,
                    y2_0 + effect_y2,
                    Shocks {
                        eps1,
                        eps2,
                        nu,
                        ..Shocks::default()
                    },
                )
            }
            Family::SubMartingale {
                rho0,
                mu1,
                mu2,
                alpha,
                shock,
                selection_noise,
                threshold,
                effect_y1,
                effect_y2,
            } => {
                let a = alpha.sample(rng);
                let eps2 = shock.sample(rng);
                let nu = selection_noise.sample(rng);
                let y1_0 = mu1 + a;
                let y2_0 = mu2 + rho0 * a + eps2;
                let treated = assign(group, rng, a + nu <= threshold);
                build_unit(
                    group,
                    treated,
                    y1_0,
                    y1_0 + effect_y1,
                    y2_0,
                    y2_0 + effect_y2,
                    Shocks {
                        alpha: a,
                        eps2,
                        nu,
                        ..Shocks::default()
                    },
                )
            }
            Family::Ashenfelter {
                beta,
                threshold,
                intercept,
                slope,
                y1_noise,
                shock,
                effect_y1,
                effect_y2,
            } => {
                let eps1 = y1_noise.sample(rng);
                let eps2 = shock.sample(rng);
                let y1_0 = eps1;
                let y2_0 = intercept + slope * y1_0 + eps2;
                let treated = assign(group, rng, y1_0 + beta * y2_0 <= threshold);
                build_unit(
                    group,
                    treated,
                    y1_0,
                    y1_0 + effect_y1,
                    y2_0,
                    y2_0 + effect_y2,
                    Shocks {
                        eps1,
                        eps2,
                        ..Shocks::default()
                    },
                )
            }
            Family::Roy {
                lambda0,
                lambda1,
                ref alpha0,
                ref alpha1,
                ref gain1,
                ref gain2,
                gain_loading,
                ref shock,
                weights,
                kappa,
                clamp_gains,
            } => {
                let a0 = alpha0.sample(rng);
                let a1 = alpha1.sample(rng);
                let eps1 = shock.sample(rng);
                let eps2 = shock.sample(rng);
                let mut d1 = gain1.sample(rng) + gain_loading * a1;
                let mut d2 = gain2.sample(rng) + gain_loading * a1;
                if clamp_gains {
                    d1 = d1.max(0.0);
                    d2 = d2.max(0.0);
                }
                let y1_0 = a0 + lambda0[0] + a1 * lambda1[0] + eps1;
                let y2_0 = a0 + lambda0[1] + a1 * lambda1[1] + eps2;
                let treated = assign(group, rng, weights[0] * d1 + weights[1] * d2 > kappa);
                build_unit(
                    group,
                    treated,
                    y1_0,
                    y1_0 + d1,
                    y2_0,
                    y2_0 + d2,
                    Shocks {
                        alpha: a0,
                        nu: a1,
                        eps1,
                        eps2,
                        eta1: d1,
                        eta2: d2,
                    },
                )
            }
            Family::ImperfectForesight {
                invertible,
                ref alpha,
                ref shock1,
                ref shock2,
                ref selection_noise,
                threshold,
                foresight,
                loc1,
                scale1,
                loc2,
                slope2,
                gap,
                effect_y1,
                effect_y2,
            } => {
                let a = alpha.sample(rng);
                let eps1 = shock1.sample(rng);
                let eps2 = shock2.sample(rng);
                let nu = selection_noise.sample(rng);
                let (y1_0, y2_0, rule) = if invertible {
                    (
                        loc1 + scale1 * a,
                        loc2 + slope2 * a + eps2,
                        a + foresight * eps1 + nu <= threshold,
                    )
                } else {
                    (
                        loc1 + scale1 * a.abs(),
                        loc2 + if a < 0.0 { gap } else { 0.0 } + eps2,
                        a >= 0.0,
                    )
                };
                let treated = assign(group, rng, rule);
                build_unit(
                    group,
                    treated,
                    y1_0,
                    y1_0 + effect_y1,
                    y2_0,
                    y2_0 + effect_y2,
                    Shocks {
                        alpha: a,
                        eps1,
                        eps2,
                        nu,
                        ..Shocks::default()
                    },
                )
            }
        }
    }
}

fn assign(group: Group, rng: &mut ChaCha8Rng, observational_rule: bool) -> bool {
    match group {
        Group::Experimental => rng.random::<f64>() < 0.5,
        Group::Observational => observational_rule,
    }
}

fn build_unit(
    group: Group,
    treated: bool,
    y1_0: f64,
    y1_1: f64,
    y2_0: f64,
    y2_1: f64,
    shocks: Shocks,
) -> SimUnit {
    SimUnit {
        group,
        treated,
        y1_untreated: y1_0,
        y1_treated: y1_1,
        y2_untreated: y2_0,
        y2_treated: y2_1,
        y1: if treated { y1_1 } else { y1_0 },
        y2: if treated { y2_1 } else { y2_0 },
        shocks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: Family,
    pub n_experimental: usize,
    pub n_observational: usize,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_experimental == 0 || self.n_observational == 0 {
            return Err(Error::BadConfig(
                "both groups need at least one unit".into(),
            ));
        }
        self.family.validate()
    }
}

pub fn spec_from_json(text: &str) -> Result<DgpSpec> {
    let spec: DgpSpec =
        serde_json::from_str(text).map_err(|e| Error::BadConfig(format!("bad dgp config: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

pub const PRESET_NAMES: [&str; 8] = [
    "ldv_lu_true",
    "submartingale_ecb_true",
    "submartingale_rho08",
    "ashenfelter_beta0",
    "ashenfelter_beta05",
    "roy_twfe_invariant",
    "if_invertible",
    "if_noninvertible",
];

/// Raw JSON of a shipped configuration. See `presets/` for the files.
pub fn preset_source(name: &str) -> Result<&'static str> {
    match name {
        "ldv_lu_true" => Ok(include_str!("../../presets/ldv_lu_true.json")),
        "submartingale_ecb_true" => Ok(include_str!("../../presets/submartingale_ecb_true.json")),
        "submartingale_rho08" => Ok(include_str!("../../presets/submartingale_rho08.json")),
        "ashenfelter_beta0" => Ok(include_str!("../../presets/ashenfelter_beta0.json")),
        "ashenfelter_beta05" => Ok(include_str!("../../presets/ashenfelter_beta05.json")),
        "roy_twfe_invariant" => Ok(include_str!("../../presets/roy_twfe_invariant.json")),
        "if_invertible" => Ok(include_str!("../../presets/if_invertible.json")),
        "if_noninvertible" => Ok(include_str!("../../presets/if_noninvertible.json")),
        other => Err(Error::BadConfig(format!(
            "unknown preset {other:?}; shipped presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// A shipped configuration by name, parsed.
pub fn preset(name: &str) -> Result<DgpSpec> {
    spec_from_json(preset_source(name)?)
}

/// Draw a full panel. The first `n_experimental` units form the experimental
/// group; everything about a unit is a deterministic function of `(spec,
/// seed)`.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<SimulatedPanel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.n_experimental + spec.n_observational;
    let mut units = Vec::with_capacity(total);
    for i in 0..total {
        let group = if i < spec.n_experimental {
            Group::Experimental
        } else {
            Group::Observational
        };
        units.push(spec.family.sample_unit(group, &mut rng));
    }
    Ok(SimulatedPanel {
        spec: spec.clone(),
        seed,
        units,
    })
}

/// Sample-level oracle: mean treated-minus-untreated second-period gap over
/// treated observational units.
pub fn true_att(panel: &SimulatedPanel) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for u in &panel.units {
        if u.group == Group::Observational && u.treated {
            acc += u.y2_treated - u.y2_untreated;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyCell {
            group: Group::Observational,
            treated: true,
        });
    }
    Ok(acc / n as f64)
}

/// Latent-form bias of the growth-equality estimator: the treated/untreated
/// gap in mean untreated growth, over observational units only.
pub fn latent_delta(panel: &SimulatedPanel) -> Result<f64> {
    let mut acc = [0.0f64; 2];
    let mut n = [0usize; 2];
    for u in &panel.units {
        if u.group == Group::Observational {
            let i = usize::from(u.treated);
            acc[i] += u.y2_untreated - u.y1_untreated;
            n[i] += 1;
        }
    }
    for (k, treated) in [(0usize, false), (1usize, true)] {
        if n[k] == 0 {
            return Err(Error::EmptyCell {
                group: Group::Observational,
                treated,
            });
        }
    }
    Ok(acc[1] / n[1] as f64 - acc[0] / n[0] as f64)
}

/// Project a panel down to what an analyst would see. Masking drops the
/// experimental second-period outcome (production mode); keeping it enables
/// the benchmark comparisons (LaLonde mode).
pub fn to_observed(panel: &SimulatedPanel, mask_experimental_y2: bool) -> CombinedDataset {
    let rows = panel
        .units
        .iter()
        .map(|u| ObservationRow {
            group: u.group,
            treated: u.treated,
            y1: u.y1,
            y2: if u.group == Group::Experimental && mask_experimental_y2 {
                None
            } else {
                Some(u.y2)
            },
            labels: BTreeMap::new(),
        })
        .collect();
    CombinedDataset::new(
        rows,
        format!("simulated:{}:seed={}", panel.spec.family.name(), panel.seed),
    )
}
