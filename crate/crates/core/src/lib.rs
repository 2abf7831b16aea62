//! Long-term treatment effects from a short-term experiment combined with an
//! observational panel.
//!
//! The experiment identifies the short-run contrast but never observes the
//! long-run outcome; the panel observes both outcomes but its treatment is
//! self-selected. This crate implements two point identification strategies
//! over that data combination, a regression-based one (`lu`) and a
//! growth-equality one (`ecb`), plus the machinery that turns the pair into
//! a bracket for the effect on the treated:
//!
//! * [`data`]: CSV ingestion, cell validation, subgroup filtering.
//! * [`estimands`]: the four point estimators and their diagnostics.
//! * [`inference`]: stratified joint bootstrap, standard errors, Wald tests.
//! * [`dominance`]: which direction the bracket opens, from the untreated
//!   short-term outcome distributions.
//! * [`bracketing`]: assembled interval with its health flags.
//! * [`sensitivity`]: bias curves under parameterized deviations from growth
//!   equality, and the deviation rate that hits a target estimate.
//! * [`dgp`]: synthetic panels with known ground truth and the replication
//!   harness.
//! * [`report`]: artifact serialization with round-trip-exact floats.

pub mod bracketing;
pub mod data;
pub mod dgp;
pub mod dominance;
pub mod error;
pub mod estimands;
pub mod inference;
mod normal;
pub mod report;
pub mod sensitivity;

pub use error::{Error, ErrorKind, Result};
