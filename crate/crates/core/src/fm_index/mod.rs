//! Succinct substring index over tokenized identifier streams.
//!
//! Each [`FMIndexShard`] indexes the *reversed* symbol stream, so extending a
//! forward-generated prefix by one symbol is a single backward-search step
//! and the symbols that may follow a prefix are exactly the distinct BWT
//! symbols of its range. [`ShardedIndex`] stacks immutable shards so a new
//! corpus is incorporated by appending a shard rather than rebuilding.

mod bits;
mod sais;
mod shard;
mod sharded;
mod wavelet;

pub use sais::suffix_array;
pub use shard::{FMIndexShard, IdentifierKind, Occurrence, ShardConfig, StreamDoc};
pub use sharded::{ShardedIndex, ShardedRange};

use crate::container::{Fingerprint, FormatError};
use crate::corpus::Symbol;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FmIndexError {
    #[error("cannot build a shard from an empty document list")]
    EmptyDocuments,
    #[error("symbol {symbol} is outside the vocabulary of size {vocab_size}")]
    UnknownSymbol { symbol: Symbol, vocab_size: u32 },
    #[error("document {doc_id:?} contains reserved symbol {symbol}")]
    ReservedSymbol { doc_id: String, symbol: Symbol },
    #[error("vocabulary fingerprint mismatch: index has {expected}, shard has {found}")]
    VocabMismatch {
        expected: Fingerprint,
        found: Fingerprint,
    },
    #[error("document id {0:?} appears more than once")]
    DuplicateDocId(String),
    #[error("document id {0:?} already indexed by another shard")]
    DocIdCollision(String),
    #[error("locate limit must be at least 1")]
    ZeroLimit,
    #[error("range does not belong to this index")]
    ForeignRange,
    #[error("stream of {0} symbols exceeds the 32-bit index limit")]
    TooLarge(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl FmIndexError {
    pub fn code(&self) -> &'static str {
        match self {
            FmIndexError::EmptyDocuments => "FMI_EMPTY_DOCUMENTS",
            FmIndexError::UnknownSymbol { .. } => "FMI_UNKNOWN_SYMBOL",
            FmIndexError::ReservedSymbol { .. } => "FMI_RESERVED_SYMBOL",
            FmIndexError::VocabMismatch { .. } => "FMI_VOCAB_MISMATCH",
            FmIndexError::DuplicateDocId(_) => "FMI_DUPLICATE_DOC",
            FmIndexError::DocIdCollision(_) => "FMI_DOC_COLLISION",
            FmIndexError::ZeroLimit => "FMI_ZERO_LIMIT",
            FmIndexError::ForeignRange => "FMI_FOREIGN_RANGE",
            FmIndexError::TooLarge(_) => "FMI_TOO_LARGE",
            FmIndexError::Format(e) => e.code(),
        }
    }
}

impl From<std::io::Error> for FmIndexError {
    fn from(e: std::io::Error) -> Self {
        FmIndexError::Format(FormatError::Io(e))
    }
}

/// Half-open suffix-array interval for a matched pattern within one shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchRange {
    pub shard_id: u32,
    pub lo: u32,
    pub hi: u32,
    pub pattern_len: u32,
}

impl SearchRange {
    pub fn width(&self) -> u64 {
        u64::from(self.hi - self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }
}

/// Symbols that can follow a matched pattern, with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Successors {
    /// Non-reserved continuation symbols, ascending by id.
    pub symbols: Vec<(Symbol, u64)>,
    /// Occurrences followed by a document boundary or identifier tag.
    pub boundary: u64,
}

impl Successors {
    pub fn total(&self) -> u64 {
        self.boundary + self.symbols.iter().map(|(_, c)| c).sum::<u64>()
    }

    pub(crate) fn merge(parts: impl IntoIterator<Item = Successors>) -> Successors {
        let mut all: Vec<(Symbol, u64)> = Vec::new();
        let mut boundary = 0;
        for p in parts {
            boundary += p.boundary;
            all.extend(p.symbols);
        }
        all.sort_unstable_by_key(|(s, _)| *s);
        let mut symbols: Vec<(Symbol, u64)> = Vec::with_capacity(all.len());
        for (s, c) in all {
            match symbols.last_mut() {
                Some((last, total)) if *last == s => *total += c,
                _ => symbols.push((s, c)),
            }
        }
        Successors { symbols, boundary }
    }
}
