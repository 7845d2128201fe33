use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its physical domain.
    #[error("parameter `{name}` = {value} is out of range (expected {expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// Quantities that the model orders (e.g. V_B >= V_B|A) came out inconsistent.
    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    /// A closed-form expression left its numerically valid region.
    #[error("numerical domain error: {0}")]
    Numerical(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("fit is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("batch of {n_samples} samples cannot be allocated: {reason}")]
    BatchSize { n_samples: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// The declared (eta0, T) split does not reproduce the measured total attenuation.
    #[error("attenuation split eta0 * T = {product} ({product_db:.3} dB) does not match measured eta_tot = {measured} ({measured_db:.3} dB)")]
    InconsistentSplit {
        product: f64,
        product_db: f64,
        measured: f64,
        measured_db: f64,
    },
}

impl Error {
    /// True for errors produced by numerics rather than by bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::ModelInconsistency(_)
                | Error::UndefinedCorrelation(_)
                | Error::Unidentifiable(_)
        )
    }
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<f64> {
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected,
        })
    }
}

/// Accepts values in the half-open interval (0, 1].
pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<f64> {
    check_range(name, value, value > 0.0 && value <= 1.0, "0 < x <= 1")
}

/// Accepts values in the closed interval [0, 1].
pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    check_range(name, value, (0.0..=1.0).contains(&value), "0 <= x <= 1")
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    check_range(name, value, value >= 0.0, "x >= 0")
}
