//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

use crate::solver::Block;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("band index {index} out of range for {bands} bands")]
    BandOutOfRange { index: usize, bands: usize },

    #[error("{size}x{size} kernel does not fit a {p}x{q} image plane")]
    KernelTooLarge { size: usize, p: usize, q: usize },

    #[error("kernel size must be odd, got {0}")]
    EvenKernelSize(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error(
        "line search for block {block} gave up after {shrinks} shrinks \
         (last step {last_step:e}, decrease test {lhs:e} <= {rhs:e} failed)"
    )]
    BacktrackExhausted {
        block: Block,
        shrinks: usize,
        last_step: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },
}

impl Error {
    /// Attaches a path to a bare I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Malformed file contents at `path`.
    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
