use thiserror::Error;

/// Errors raised by the profile, solver, invariant and wave-propagation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("t = {t} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("{what} must be positive, got {value} at t = {t}")]
    NonPositive {
        what: &'static str,
        value: f64,
        t: f64,
    },

    #[error("trajectory reached the positivity floor {floor:e} at t = {t}")]
    Singularity { t: f64, floor: f64 },

    #[error("adaptive step underflow at t = {t} (h = {h:e}); problem is too stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate trajectory: {0}")]
    Degenerate(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("sample grid is not strictly increasing at index {index}")]
    NonMonotoneGrid { index: usize },

    #[error("operator is not Hermitian: imaginary part {imag:e} of expectation value")]
    HermiticityViolation { imag: f64 },

    #[error("wave state invalid: boundary amplitude {amplitude:e} exceeds {limit:e}")]
    BoundaryAmplitude { amplitude: f64, limit: f64 },

    #[error("singular pivot in tridiagonal solve at row {row}")]
    SingularPivot { row: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
