//! Partial identification of a linear causal effect under unmeasured
//! confounding and possibly invalid instruments.
//!
//! The pipeline estimates observable partial correlations from a covariance
//! matrix ([`estimands`]), compiles interpretable sensitivity bounds into
//! constraints on unobservable partial correlations ([`sensmodel`]), solves
//! the resulting program by a boundary grid search ([`gridopt`]) and attaches
//! bootstrap sensitivity intervals ([`bootstrap`]).

// `!(x <= y)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod config;
pub mod contour;
pub mod data;
pub mod error;
pub mod estimands;
pub mod gridopt;
pub mod pipeline;
pub mod r2calc;
pub mod sensmodel;
pub mod simharness;

pub use error::{Error, Result};
