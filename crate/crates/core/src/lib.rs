//! Passive-state-preparation CV-QKD: noise model, Monte Carlo simulation of
//! the quadrature network, correlation estimation and key-rate analysis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod keyrate;
pub mod model;
pub mod montecarlo;
pub mod reference;

pub use error::{Error, Result};

/// Formats a float with 15 significant digits in scientific notation.
///
/// Used for every numeric CSV field so reruns are byte-identical.
pub fn format_decimal(v: f64) -> String {
    format!("{v:.14e}")
}
