use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {what}: {left} vs {right}")]
    Dimension {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("unsupported barrier: {0}")]
    UnsupportedBarrier(String),

    #[error("QP infeasible, conflicting rows {rows:?}")]
    Infeasible { rows: Vec<usize> },

    #[error("QP solver did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("plant blow-up: state entry reached {0:e}")]
    BlowUp(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(what: &'static str, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    if xs.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_dim(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::Dimension { what, left, right })
    }
}
