//! Crate-wide error type.
//!
//! Every module owns its own error enum; [`Error`] wraps them so callers can
//! report the originating module together with a stable machine-readable code.

use crate::container::FormatError;
use crate::corpus::CorpusError;
use crate::dense_retriever::DenseError;
use crate::dp_analysis::DpError;
use crate::efficiency::CostError;
use crate::fm_index::FmIndexError;
use crate::gen_retriever::GenError;
use crate::harness::HarnessError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    FmIndex(#[from] FmIndexError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Name of the module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Corpus(_) => "corpus",
            Error::FmIndex(_) => "fm_index",
            Error::Gen(_) => "gen_retriever",
            Error::Dense(_) => "dense_retriever",
            Error::Harness(_) => "harness",
            Error::Cost(_) => "efficiency",
            Error::Dp(_) => "dp_analysis",
            Error::Format(_) => "container",
            Error::Io(_) => "io",
        }
    }

    /// Stable error code, suitable for JSON reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Corpus(e) => e.code(),
            Error::FmIndex(e) => e.code(),
            Error::Gen(e) => e.code(),
            Error::Dense(e) => e.code(),
            Error::Harness(e) => e.code(),
            Error::Cost(e) => e.code(),
            Error::Dp(e) => e.code(),
            Error::Format(e) => e.code(),
            Error::Io(_) => "IO",
        }
    }
}
