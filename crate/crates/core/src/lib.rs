//! Treatment effects on right-censored time-to-event outcomes.
//!
//! Survival estimators (Kaplan-Meier, Cox proportional hazards, random
//! survival forests) are plugged into causal meta-learners (T-learner,
//! S-learner, nearest-neighbour matching). Effects are differences in
//! restricted mean event time (RMET), the area under a survival curve up to
//! a horizon.

pub mod causal;
pub mod cohort;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod survival;
pub mod synth;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;

/// The guide's chapters, compiled as doctests so the snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/survival-curves.md")]
    mod survival_curves {}
    #[doc = include_str!("../../../book/src/survival-models.md")]
    mod survival_models {}
    #[doc = include_str!("../../../book/src/cohorts.md")]
    mod cohorts {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
