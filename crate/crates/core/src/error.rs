use thiserror::Error;

/// Errors raised by grid construction, assembly and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has {got} values but the grid has {expected} nodes")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),

    #[error("operation `{0}` is not available on a synthetic-curvature grid")]
    SyntheticRefused(&'static str),

    #[error("conformal factor too large (max |phi| = {0:.3e}), exponentials would overflow")]
    Overflow(f64),

    #[error(
        "resonance: principal eigenvalue {lambda0:.3e} is within tolerance of zero; \
         kernel obstruction integral of the right-hand side is {obstruction:.6e}"
    )]
    Resonance { lambda0: f64, obstruction: f64 },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("field must be strictly positive (min value {0:.3e})")]
    NotPositive(f64),

    #[error("sign condition violated: {0}")]
    SignCondition(String),

    #[error("principal eigenvalue {0:.3e} is too close to zero to fix a sign")]
    Indeterminate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
