use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bits::RankBits;
use super::sais::suffix_array;
use super::wavelet::WaveletMatrix;
use super::{FmIndexError, SearchRange, Successors};
use crate::container::{write_atomic, ByteReader, ByteWriter, Fingerprint, FormatError};
use crate::corpus::{Document, Symbol, Vocabulary};

const MAGIC: &[u8; 8] = b"DYNIRFMI";
const VERSION: u32 = 1;

/// One document's identifier stream, ready for indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamDoc {
    pub doc_id: String,
    pub symbols: Vec<Symbol>,
}

impl StreamDoc {
    /// Tokenizes a document under a frozen vocabulary.
    pub fn from_document(doc: &Document, vocab: &Vocabulary, with_timestamp: bool) -> Self {
        StreamDoc {
            doc_id: doc.doc_id.clone(),
            symbols: vocab.encode(&doc.indexed_text(with_timestamp)),
        }
    }
}

/// Which view of a document an indexed n-gram was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierKind {
    Span,
    PseudoQuery,
    Title,
}

impl IdentifierKind {
    fn from_tag(s: Symbol) -> Option<Self> {
        match s {
            Symbol::ID_SPAN => Some(IdentifierKind::Span),
            Symbol::ID_PSEUDOQ => Some(IdentifierKind::PseudoQuery),
            Symbol::ID_TITLE => Some(IdentifierKind::Title),
            _ => None,
        }
    }

    fn code(self) -> u32 {
        match self {
            IdentifierKind::Span => 0,
            IdentifierKind::PseudoQuery => 1,
            IdentifierKind::Title => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        [
            IdentifierKind::Span,
            IdentifierKind::PseudoQuery,
            IdentifierKind::Title,
        ]
        .get(c as usize)
        .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardConfig {
    pub shard_id: u32,
    /// Suffix-array positions divisible by this rate are sampled for locate.
    pub sa_sample_rate: u32,
}

impl Default for ShardConfig {
    fn default() -> Self {
        ShardConfig {
            shard_id: 0,
            sa_sample_rate: 32,
        }
    }
}

/// A located pattern occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    /// Token offset within the document's identifier stream.
    pub offset: u32,
    pub kind: IdentifierKind,
}

/// Immutable FM-index over the reversed concatenation of identifier streams.
///
/// The forward stream is `doc_1 DOC_SEP doc_2 DOC_SEP ... doc_k DOC_SEP`
/// (documents ordered by id); the indexed text is that stream reversed,
/// closed by [`Symbol::TERMINATOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct FMIndexShard {
    shard_id: u32,
    vocab_fingerprint: Fingerprint,
    vocab_size: u32,
    /// Local code -> global symbol id, ascending.
    alphabet: Vec<u32>,
    /// BWT as local codes.
    bwt: Vec<u32>,
    /// `c_table[c]` = number of text symbols with a smaller local code.
    c_table: Vec<u64>,
    occ: WaveletMatrix,
    sa_rate: u32,
    sa_marks: RankBits,
    sa_samples: Vec<u32>,
    /// Forward-stream positions of every DOC_SEP, strictly increasing.
    doc_boundaries: Vec<u32>,
    doc_ids: Vec<String>,
    /// Forward-stream positions of identifier tags and their kinds.
    tag_positions: Vec<u32>,
    tag_kinds: Vec<IdentifierKind>,
}

impl FMIndexShard {
    pub fn build(docs: &[StreamDoc], vocab: &Vocabulary) -> Result<Self, FmIndexError> {
        Self::build_with(docs, vocab, ShardConfig::default())
    }

    pub fn build_with(docs: &[StreamDoc], vocab: &Vocabulary, config: ShardConfig) -> Result<Self, FmIndexError> {
        if docs.is_empty() {
            return Err(FmIndexError::EmptyDocuments);
        }
        assert!(config.sa_sample_rate >= 1);
        let vocab_size = vocab.len() as u32;
        let mut order: Vec<&StreamDoc> = docs.iter().collect();
        order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        for pair in order.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(FmIndexError::DuplicateDocId(pair[0].doc_id.clone()));
            }
        }

        let total: usize = order.iter().map(|d| d.symbols.len() + 1).sum();
        if total + 1 >= u32::MAX as usize {
            return Err(FmIndexError::TooLarge(total + 1));
        }
        let mut body: Vec<u32> = Vec::with_capacity(total);
        let mut doc_boundaries = Vec::with_capacity(order.len());
        let mut tag_positions = Vec::new();
        let mut tag_kinds = Vec::new();
        for d in &order {
            for &s in &d.symbols {
                if s.0 >= vocab_size {
                    return Err(FmIndexError::UnknownSymbol {
                        symbol: s,
                        vocab_size,
                    });
                }
                if s == Symbol::DOC_SEP || s == Symbol::TERMINATOR {
                    return Err(FmIndexError::ReservedSymbol {
                        doc_id: d.doc_id.clone(),
                        symbol: s,
                    });
                }
                if let Some(kind) = IdentifierKind::from_tag(s) {
                    tag_positions.push(body.len() as u32);
                    tag_kinds.push(kind);
                }
                body.push(s.0);
            }
            doc_boundaries.push(body.len() as u32);
            body.push(Symbol::DOC_SEP.0);
        }

        let mut text: Vec<u32> = body.iter().rev().copied().collect();
        text.push(Symbol::TERMINATOR.0);
        let n = text.len();

        let mut alphabet = text.clone();
        alphabet.sort_unstable();
        alphabet.dedup();
        let sigma = alphabet.len();
        for c in text.iter_mut() {
            *c = alphabet.binary_search(c).expect("symbol in alphabet") as u32;
        }

        let sa = suffix_array(&text, (sigma - 1) as u32);
        let bwt: Vec<u32> = sa
            .iter()
            .map(|&p| text[(p as usize + n - 1) % n])
            .collect();

        let mut c_table = vec![0u64; sigma + 1];
        for &c in &text {
            c_table[c as usize + 1] += 1;
        }
        for i in 1..=sigma {
            c_table[i] += c_table[i - 1];
        }

        let rate = config.sa_sample_rate;
        let sa_marks = RankBits::from_fn(n, |i| sa[i] % rate == 0);
        let sa_samples = sa.iter().copied().filter(|p| p % rate == 0).collect();
        let occ = WaveletMatrix::build(&bwt, sigma);

        Ok(FMIndexShard {
            shard_id: config.shard_id,
            vocab_fingerprint: vocab.fingerprint(),
            vocab_size,
            alphabet,
            bwt,
            c_table,
            occ,
            sa_rate: rate,
            sa_marks,
            sa_samples,
            doc_boundaries,
            doc_ids: order.iter().map(|d| d.doc_id.clone()).collect(),
            tag_positions,
            tag_kinds,
        })
    }

    pub fn shard_id(&self) -> u32 {
        self.shard_id
    }

    pub fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    /// Length of the indexed text, terminator included.
    pub fn symbol_count(&self) -> u32 {
        self.bwt.len() as u32
    }

    /// Number of identifier symbols (boundaries and terminator excluded).
    pub fn token_count(&self) -> u64 {
        self.bwt.len() as u64 - 1 - self.doc_ids.len() as u64
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_ids
            .binary_search_by(|d| d.as_str().cmp(doc_id))
            .is_ok()
    }

    pub fn doc_boundaries(&self) -> &[u32] {
        &self.doc_boundaries
    }

    /// Total occurrences of `s` in the indexed text.
    pub fn symbol_total(&self, s: Symbol) -> u64 {
        match self.alphabet.binary_search(&s.0) {
            Ok(c) => self.c_table[c + 1] - self.c_table[c],
            Err(_) => 0,
        }
    }

    pub fn full_range(&self) -> SearchRange {
        SearchRange {
            shard_id: self.shard_id,
            lo: 0,
            hi: self.symbol_count(),
            pattern_len: 0,
        }
    }

    fn local(&self, s: Symbol) -> Result<Option<u32>, FmIndexError> {
        if s.0 >= self.vocab_size {
            return Err(FmIndexError::UnknownSymbol {
                symbol: s,
                vocab_size: self.vocab_size,
            });
        }
        Ok(self.alphabet.binary_search(&s.0).ok().map(|c| c as u32))
    }

    fn check(&self, range: &SearchRange) -> Result<(), FmIndexError> {
        if range.shard_id != self.shard_id || range.lo > range.hi || range.hi > self.symbol_count() {
            return Err(FmIndexError::ForeignRange);
        }
        Ok(())
    }

    /// Range of `pattern · symbol` given the range of `pattern`, where
    /// `pattern` is read in forward (generation) order.
    pub fn backward_extend(&self, range: SearchRange, symbol: Symbol) -> Result<SearchRange, FmIndexError> {
        self.check(&range)?;
        let local = self.local(symbol)?;
        let mut out = SearchRange {
            pattern_len: range.pattern_len + 1,
            ..range
        };
        match local {
            Some(c) if !range.is_empty() => {
                let (r_lo, r_hi) = self.occ.rank_pair(c, range.lo as usize, range.hi as usize);
                let base = self.c_table[c as usize];
                out.lo = (base + r_lo as u64) as u32;
                out.hi = (base + r_hi as u64) as u32;
            }
            _ => out.hi = out.lo,
        }
        Ok(out)
    }

    pub fn range_of(&self, pattern: &[Symbol]) -> Result<SearchRange, FmIndexError> {
        let mut r = self.full_range();
        for &s in pattern {
            r = self.backward_extend(r, s)?;
        }
        Ok(r)
    }

    pub fn count(&self, pattern: &[Symbol]) -> Result<u64, FmIndexError> {
        Ok(self.range_of(pattern)?.width())
    }

    /// Symbols that follow the matched pattern in the forward stream.
    pub fn successors(&self, range: SearchRange) -> Result<Successors, FmIndexError> {
        self.check(&range)?;
        let mut out = Successors::default();
        if range.is_empty() {
            return Ok(out);
        }
        let mut codes = Vec::new();
        if range.lo == 0 && range.hi == self.symbol_count() {
            for c in 0..self.alphabet.len() {
                codes.push((c as u32, (self.c_table[c + 1] - self.c_table[c]) as usize));
            }
        } else {
            self.occ.distinct(range.lo as usize, range.hi as usize, &mut codes);
        }
        for (c, count) in codes {
            let s = Symbol(self.alphabet[c as usize]);
            if s.is_reserved() && s != Symbol::UNK {
                out.boundary += count as u64;
            } else {
                out.symbols.push((s, count as u64));
            }
        }
        Ok(out)
    }

    #[inline]
    fn lf(&self, row: usize) -> usize {
        let c = self.bwt[row];
        (self.c_table[c as usize] + self.occ.rank(c, row) as u64) as usize
    }

    /// Position in the indexed (reversed) text of the suffix at `row`.
    fn text_position(&self, mut row: usize) -> usize {
        let mut steps = 0;
        while !self.sa_marks.get(row) {
            row = self.lf(row);
            steps += 1;
        }
        self.sa_samples[self.sa_marks.rank1(row)] as usize + steps
    }

    /// Resolves up to `limit` occurrences, ascending by suffix-array row.
    pub fn locate(&self, range: SearchRange, limit: usize) -> Result<Vec<Occurrence>, FmIndexError> {
        if limit == 0 {
            return Err(FmIndexError::ZeroLimit);
        }
        self.check(&range)?;
        let end = range.hi.min(range.lo.saturating_add(limit as u32));
        let body_len = self.bwt.len() - 1;
        let m = range.pattern_len as usize;
        let mut out = Vec::with_capacity((end - range.lo) as usize);
        for row in range.lo..end {
            let j = self.text_position(row as usize);
            // Forward offset of the first pattern symbol. Only the empty
            // pattern can land on the terminator or past the stream end.
            let Some(fwd) = body_len.checked_sub(j + m) else {
                continue;
            };
            if fwd >= body_len {
                continue;
            }
            out.push(self.occurrence_at(fwd as u32));
        }
        Ok(out)
    }

    fn occurrence_at(&self, fwd: u32) -> Occurrence {
        let doc = self.doc_boundaries.partition_point(|&b| b < fwd);
        let start = if doc == 0 {
            0
        } else {
            self.doc_boundaries[doc - 1] + 1
        };
        let t = self.tag_positions.partition_point(|&p| p < fwd);
        let kind = if t > 0 && self.tag_positions[t - 1] >= start {
            self.tag_kinds[t - 1]
        } else {
            IdentifierKind::Span
        };
        Occurrence {
            doc_id: self.doc_ids[doc].clone(),
            offset: fwd - start,
            kind,
        }
    }

    /// Recovers the forward stream by walking LF from the terminator row.
    pub fn reconstruct_stream(&self) -> Vec<Symbol> {
        let n = self.bwt.len();
        let mut out = Vec::with_capacity(n - 1);
        let mut row = 0;
        for _ in 0..n - 1 {
            out.push(Symbol(self.alphabet[self.bwt[row] as usize]));
            row = self.lf(row);
        }
        out
    }

    /// Applies LF `n` times from row 0 and returns the visited rows.
    pub fn lf_cycle(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.bwt.len());
        let mut row = 0;
        for _ in 0..self.bwt.len() {
            rows.push(row);
            row = self.lf(row);
        }
        rows
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.raw(&self.vocab_fingerprint.0);
        w.u32(self.shard_id);
        w.u32(self.vocab_size);
        w.u64(self.bwt.len() as u64);
        w.u32(self.sa_rate);
        w.u32(self.occ.levels().len() as u32);
        // SA samples
        w.u64_slice(self.sa_marks.words());
        w.u32_slice(&self.sa_samples);
        // BWT as global symbol ids
        w.u64(self.bwt.len() as u64);
        for &c in &self.bwt {
            w.u32(self.alphabet[c as usize]);
        }
        // occ: C table plus wavelet levels over the BWT
        w.u64_slice(&self.c_table);
        for level in self.occ.levels() {
            w.u64_slice(level.words());
        }
        // doc boundary table
        w.u32_slice(&self.doc_boundaries);
        w.u32(self.doc_ids.len() as u32);
        for id in &self.doc_ids {
            w.str(id);
        }
        w.u32_slice(&self.tag_positions);
        let kinds: Vec<u32> = self.tag_kinds.iter().map(|k| k.code()).collect();
        w.u32_slice(&kinds);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FmIndexError> {
        let bad = |m: &str| FmIndexError::Format(FormatError::Malformed(m.to_string()));
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let vocab_fingerprint = r.fingerprint()?;
        let shard_id = r.u32()?;
        let vocab_size = r.u32()?;
        let n = r.u64()? as usize;
        let sa_rate = r.u32()?;
        let depth = r.u32()? as usize;
        if n == 0 || sa_rate == 0 {
            return Err(bad("empty shard header"));
        }
        let mark_words = r.u64_vec()?;
        if mark_words.len() != n.div_ceil(64) {
            return Err(bad("sample bitmap length"));
        }
        let sa_marks = RankBits::from_words(mark_words, n);
        let sa_samples = r.u32_vec()?;
        if sa_samples.len() != sa_marks.count_ones() {
            return Err(bad("sample count"));
        }
        let global_bwt = r.u32_vec()?;
        if global_bwt.len() != n {
            return Err(bad("bwt length"));
        }
        let mut alphabet = global_bwt.clone();
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.first() != Some(&Symbol::TERMINATOR.0)
            || alphabet.last().is_some_and(|&s| s >= vocab_size)
        {
            return Err(bad("bwt symbols"));
        }
        let bwt: Vec<u32> = global_bwt
            .iter()
            .map(|s| alphabet.binary_search(s).unwrap() as u32)
            .collect();
        let c_table = r.u64_vec()?;
        if c_table.len() != alphabet.len() + 1 || c_table.last() != Some(&(n as u64)) {
            return Err(bad("C table"));
        }
        if depth != WaveletMatrix::bits_for(alphabet.len()) {
            return Err(bad("occ depth"));
        }
        let mut levels = Vec::with_capacity(depth);
        for _ in 0..depth {
            let words = r.u64_vec()?;
            if words.len() != n.div_ceil(64) {
                return Err(bad("occ level length"));
            }
            levels.push(RankBits::from_words(words, n));
        }
        let occ = WaveletMatrix::from_parts(levels, n);
        let doc_boundaries = r.u32_vec()?;
        let n_docs = r.u32()? as usize;
        if n_docs != doc_boundaries.len() || n_docs == 0 {
            return Err(bad("doc table"));
        }
        let mut doc_ids = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_ids.push(r.str()?);
        }
        let tag_positions = r.u32_vec()?;
        let tag_kinds = r
            .u32_vec()?
            .into_iter()
            .map(IdentifierKind::from_code)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("tag kind"))?;
        if tag_kinds.len() != tag_positions.len() {
            return Err(bad("tag table"));
        }
        r.finish()?;
        Ok(FMIndexShard {
            shard_id,
            vocab_fingerprint,
            vocab_size,
            alphabet,
            bwt,
            c_table,
            occ,
            sa_rate,
            sa_marks,
            sa_samples,
            doc_boundaries,
            doc_ids,
            tag_positions,
            tag_kinds,
        })
    }

    /// Writes the shard file and returns its size in bytes.
    pub fn serialize(&self, path: &Path) -> Result<u64, FmIndexError> {
        Ok(write_atomic(path, &self.to_bytes())?)
    }

    pub fn deserialize(path: &Path) -> Result<Self, FmIndexError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub(crate) fn doc_id_set(&self) -> HashSet<&str> {
        self.doc_ids.iter().map(String::as_str).collect()
    }
}
