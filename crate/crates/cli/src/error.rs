use std::path::PathBuf;

use serde::Serialize;

pub type Res<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dynir_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("corpus does not contain indexed document {0}")]
    CorpusMismatch(String),
    #[error("nothing to do: {0}")]
    Empty(String),
}

macro_rules! from_module {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

from_module!(
    dynir_core::corpus::CorpusError,
    dynir_core::fm_index::FmIndexError,
    dynir_core::gen_retriever::GenError,
    dynir_core::dense_retriever::DenseError,
    dynir_core::harness::HarnessError,
    dynir_core::efficiency::CostError,
    dynir_core::dp_analysis::DpError,
    dynir_core::container::FormatError
);

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub module: &'static str,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

impl CliError {
    pub fn report(&self) -> ErrorReport {
        let (module, code) = match self {
            CliError::Core(e) => (e.module(), e.code()),
            CliError::Io { .. } => ("cli", "CLI_IO"),
            CliError::Input { .. } => ("cli", "CLI_INPUT"),
            CliError::CorpusMismatch(_) => ("cli", "CLI_CORPUS_MISMATCH"),
            CliError::Empty(_) => ("cli", "CLI_EMPTY"),
        };
        ErrorReport {
            error: ErrorBody {
                module,
                code,
                message: self.to_string(),
            },
        }
    }
}
