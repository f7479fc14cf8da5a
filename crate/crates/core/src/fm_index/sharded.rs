use std::sync::Arc;

use super::{FMIndexShard, FmIndexError, Occurrence, SearchRange, Successors};
use crate::container::Fingerprint;
use crate::corpus::Symbol;

/// Registry of immutable shards built under one vocabulary.
///
/// Adding a shard yields a new registry that shares the existing shards;
/// queries merge per-shard answers.
#[derive(Debug, Clone)]
pub struct ShardedIndex {
    shards: Vec<Arc<FMIndexShard>>,
    vocab_fingerprint: Fingerprint,
}

/// Per-shard ranges of one matched pattern. Only shards where the pattern
/// still occurs are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardedRange {
    pub ranges: Vec<(usize, SearchRange)>,
    pub pattern_len: u32,
}

impl ShardedRange {
    pub fn count(&self) -> u64 {
        self.ranges.iter().map(|(_, r)| r.width()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

impl ShardedIndex {
    pub fn new(vocab_fingerprint: Fingerprint) -> Self {
        ShardedIndex {
            shards: Vec::new(),
            vocab_fingerprint,
        }
    }

    pub fn from_shard(shard: FMIndexShard) -> Self {
        ShardedIndex {
            vocab_fingerprint: shard.vocab_fingerprint(),
            shards: vec![Arc::new(shard)],
        }
    }

    /// Returns a registry with `shard` appended; existing shards are shared,
    /// not rebuilt.
    pub fn add_shard(&self, shard: impl Into<Arc<FMIndexShard>>) -> Result<ShardedIndex, FmIndexError> {
        let shard = shard.into();
        if shard.vocab_fingerprint() != self.vocab_fingerprint {
            return Err(FmIndexError::VocabMismatch {
                expected: self.vocab_fingerprint,
                found: shard.vocab_fingerprint(),
            });
        }
        for existing in &self.shards {
            let ids = existing.doc_id_set();
            if let Some(dup) = shard.doc_ids().iter().find(|d| ids.contains(d.as_str())) {
                return Err(FmIndexError::DocIdCollision(dup.clone()));
            }
        }
        let mut shards = self.shards.clone();
        shards.push(shard);
        Ok(ShardedIndex {
            shards,
            vocab_fingerprint: self.vocab_fingerprint,
        })
    }

    pub fn shards(&self) -> &[Arc<FMIndexShard>] {
        &self.shards
    }

    pub fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    pub fn doc_count(&self) -> usize {
        self.shards.iter().map(|s| s.doc_ids().len()).sum()
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.shards.iter().any(|s| s.contains_doc(doc_id))
    }

    pub fn full_range(&self) -> ShardedRange {
        ShardedRange {
            ranges: self
                .shards
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.full_range()))
                .collect(),
            pattern_len: 0,
        }
    }

    pub fn extend(&self, range: &ShardedRange, symbol: Symbol) -> Result<ShardedRange, FmIndexError> {
        let mut ranges = Vec::with_capacity(range.ranges.len());
        for &(i, r) in &range.ranges {
            let shard = self.shards.get(i).ok_or(FmIndexError::ForeignRange)?;
            let next = shard.backward_extend(r, symbol)?;
            if !next.is_empty() {
                ranges.push((i, next));
            }
        }
        Ok(ShardedRange {
            ranges,
            pattern_len: range.pattern_len + 1,
        })
    }

    pub fn range_of(&self, pattern: &[Symbol]) -> Result<ShardedRange, FmIndexError> {
        let mut r = self.full_range();
        for &s in pattern {
            r = self.extend(&r, s)?;
        }
        Ok(r)
    }

    /// Total occurrences across shards.
    pub fn count(&self, pattern: &[Symbol]) -> Result<u64, FmIndexError> {
        Ok(self.range_of(pattern)?.count())
    }

    /// Union of per-shard successors with counts summed.
    pub fn successors(&self, range: &ShardedRange) -> Result<Successors, FmIndexError> {
        let mut parts = Vec::with_capacity(range.ranges.len());
        for &(i, r) in &range.ranges {
            let shard = self.shards.get(i).ok_or(FmIndexError::ForeignRange)?;
            parts.push(shard.successors(r)?);
        }
        Ok(Successors::merge(parts))
    }

    /// Up to `limit` occurrences ordered by (doc_id, offset). Each shard
    /// contributes its first `limit` rows, so the result does not depend on
    /// shard order.
    pub fn locate(&self, range: &ShardedRange, limit: usize) -> Result<Vec<Occurrence>, FmIndexError> {
        if limit == 0 {
            return Err(FmIndexError::ZeroLimit);
        }
        let mut out = Vec::new();
        for &(i, r) in &range.ranges {
            let shard = self.shards.get(i).ok_or(FmIndexError::ForeignRange)?;
            out.extend(shard.locate(r, limit)?);
        }
        out.sort_unstable_by(|a, b| (&a.doc_id, a.offset).cmp(&(&b.doc_id, b.offset)));
        out.truncate(limit);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::fm_index::StreamDoc;

    fn doc(id: &str, v: &Vocabulary, text: &str) -> StreamDoc {
        StreamDoc {
            doc_id: id.into(),
            symbols: v.encode(text),
        }
    }

    #[test]
    fn add_shard_merges_answers() {
        let v = Vocabulary::from_texts(["the cat sat on the mat"]);
        let s1 = FMIndexShard::build(&[doc("a", &v, "the cat sat")], &v).unwrap();
        let s2 = FMIndexShard::build(&[doc("b", &v, "the mat the cat")], &v).unwrap();
        let idx = ShardedIndex::from_shard(s1).add_shard(s2).unwrap();
        let the_cat = v.encode("the cat");
        assert_eq!(idx.count(&the_cat).unwrap(), 2);
        let succ = idx.successors(&idx.range_of(&v.encode("the")).unwrap()).unwrap();
        let cat = v.lookup("cat").unwrap();
        let mat = v.lookup("mat").unwrap();
        assert_eq!(succ.symbols, vec![(cat, 2), (mat, 1)]);
        assert_eq!(succ.boundary, 0);
        let occ = idx.locate(&idx.range_of(&the_cat).unwrap(), 10).unwrap();
        let got: Vec<_> = occ.iter().map(|o| (o.doc_id.as_str(), o.offset)).collect();
        assert_eq!(got, vec![("a", 0), ("b", 2)]);
    }

    #[test]
    fn add_shard_rejects_mismatch_and_collision() {
        let v = Vocabulary::from_texts(["x y"]);
        let other = Vocabulary::from_texts(["x y z"]);
        let s1 = FMIndexShard::build(&[doc("a", &v, "x")], &v).unwrap();
        let idx = ShardedIndex::from_shard(s1);
        let foreign = FMIndexShard::build(&[doc("b", &other, "x")], &other).unwrap();
        match idx.add_shard(foreign) {
            Err(FmIndexError::VocabMismatch { expected, found }) => {
                assert_eq!(expected, v.fingerprint());
                assert_eq!(found, other.fingerprint());
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = FMIndexShard::build(&[doc("a", &v, "y")], &v).unwrap();
        assert!(matches!(
            idx.add_shard(dup),
            Err(FmIndexError::DocIdCollision(id)) if id == "a"
        ));
        // The original registry is untouched.
        assert_eq!(idx.shards().len(), 1);
    }
}
