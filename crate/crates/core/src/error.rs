use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is indefinite (min eigenvalue {0:.3e})")]
    Indefinite(f64),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "assumed relations are rank deficient: the sum of their Gram matrices is singular \
         (min/max eigenvalue ratio {ratio:.3e})"
    )]
    RankDeficient { ratio: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parameters fall in the interpolation-threshold band: {0}")]
    Threshold(String),

    #[error("{what} did not converge (residual {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("at gamma_src = {gamma_src}, m = {m}: {source}")]
    AtPoint {
        gamma_src: f64,
        m: usize,
        source: Box<Error>,
    },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
