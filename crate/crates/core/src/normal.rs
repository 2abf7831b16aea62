//! Thin wrappers around the standard normal, shared by inference and the
//! dominance bands.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub(crate) fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Upper quantile used for two-sided intervals at significance `alpha`,
/// e.g. alpha = 0.05 gives 1.959964.
pub(crate) fn two_sided_z(alpha: f64) -> f64 {
    standard().inverse_cdf(1.0 - alpha / 2.0)
}
