//! Generative retrieval: a next-symbol scorer generates identifiers under
//! FM-index constraints, and generated identifiers are mapped back to a
//! ranked document list.

mod beam;
mod identifiers;
mod scorer;

pub use beam::{aggregate_docs, constrained_beam_search, BeamConfig, DocScore, Hypothesis};
pub use identifiers::{build_identifier_stream, IdentifierMode};
pub use scorer::{NgramConfig, NgramScorer, QueryContext, Scorer, ScorerUpdate, UniformScorer, UpdateMode};

use serde::{Deserialize, Serialize};

use crate::container::{Fingerprint, FormatError};
use crate::corpus::{Symbol, Vocabulary};
use crate::dp_analysis::DpError;
use crate::fm_index::{FmIndexError, ShardedIndex};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("query is empty after tokenization")]
    EmptyQuery,
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("beam size and max length must be at least 1 (got B={beam_size}, L={max_len})")]
    InvalidBeam { beam_size: usize, max_len: usize },
    #[error("scorer vocabulary {scorer} does not match index vocabulary {index}")]
    FingerprintMismatch {
        index: Fingerprint,
        scorer: Fingerprint,
    },
    #[error("symbol {symbol} is outside the scorer vocabulary of size {vocab_size}")]
    SymbolOutOfRange { symbol: Symbol, vocab_size: u32 },
    #[error("identifier references unknown document {0:?}")]
    UnknownDoc(String),
    #[error(transparent)]
    FmIndex(#[from] FmIndexError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

impl GenError {
    pub fn code(&self) -> &'static str {
        match self {
            GenError::EmptyQuery => "GEN_EMPTY_QUERY",
            GenError::InvalidK(_) => "GEN_INVALID_K",
            GenError::InvalidBeam { .. } => "GEN_INVALID_BEAM",
            GenError::FingerprintMismatch { .. } => "GEN_FINGERPRINT_MISMATCH",
            GenError::SymbolOutOfRange { .. } => "GEN_VOCAB_MISMATCH",
            GenError::UnknownDoc(_) => "GEN_UNKNOWN_DOC",
            GenError::FmIndex(e) => e.code(),
            GenError::Format(e) => e.code(),
            GenError::Dp(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub beam: BeamConfig,
    pub locate_limit: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            beam: BeamConfig::default(),
            locate_limit: 1000,
        }
    }
}

/// Tokenizes `query`, runs constrained beam search and aggregates the
/// hypotheses into the top `k` documents.
pub fn retrieve(
    query: &str,
    vocab: &Vocabulary,
    index: &ShardedIndex,
    scorer: &dyn Scorer,
    cfg: &GenConfig,
    k: usize,
) -> Result<(Vec<Hypothesis>, Vec<DocScore>), GenError> {
    if k < 1 {
        return Err(GenError::InvalidK(k));
    }
    let symbols = vocab.encode(query);
    let hyps = constrained_beam_search(&symbols, index, scorer, &cfg.beam)?;
    let docs = aggregate_docs(&hyps, index, k, cfg.locate_limit)?;
    Ok((hyps, docs))
}
