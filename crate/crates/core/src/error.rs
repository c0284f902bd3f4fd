use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} [[{a}, {b}], [{b}, {c}]] is not positive-definite")]
    NotPositiveDefinite {
        what: &'static str,
        a: f64,
        b: f64,
        c: f64,
    },

    #[error("total overlap underflows to zero for the balloon centered at ({x}, {y})")]
    ZeroOverlap { x: f64, y: f64 },

    #[error("non-finite balloon update at ({x}, {y}): sigma2 = {sigma2}, achieved_p = {achieved_p}")]
    NonFiniteBalloon {
        x: f64,
        y: f64,
        sigma2: f64,
        achieved_p: f64,
    },

    #[error("sample {index} has zero responsibility under every component")]
    UnreachableSample { index: usize },

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("non-finite sample coordinate at index {index}")]
    NonFiniteSample { index: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("non-finite density {value} at grid cell (col {col}, row {row})")]
    NonFiniteCell { col: usize, row: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
