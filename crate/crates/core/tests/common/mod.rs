//! Naive-scan oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dynir_core::corpus::{Symbol, Vocabulary};
use dynir_core::fm_index::{IdentifierKind, StreamDoc};
use rand::Rng;

pub struct RandomCorpus {
    pub vocab: Vocabulary,
    pub docs: Vec<StreamDoc>,
}

pub fn vocab_of(words: usize) -> Vocabulary {
    let text: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    Vocabulary::from_texts([text.join(" ").as_str()])
}

pub fn word(i: usize) -> Symbol {
    Symbol(Symbol::RESERVED + i as u32)
}

/// Documents over a small alphabet so patterns repeat often. Some documents
/// open with an identifier tag and some carry UNK.
pub fn random_corpus(rng: &mut impl Rng, max_symbols: usize) -> RandomCorpus {
    let alphabet = rng.random_range(1..=8);
    let vocab = vocab_of(alphabet);
    let budget = rng.random_range(1..=max_symbols);
    let n_docs = rng.random_range(1..=budget.clamp(1, 200));
    let per_doc = (budget / n_docs).max(1);
    let docs = (0..n_docs)
        .map(|i| {
            let len = rng.random_range(1..=per_doc);
            let mut symbols = Vec::with_capacity(len + 1);
            match rng.random_range(0..6) {
                0 => symbols.push(Symbol::ID_PSEUDOQ),
                1 => symbols.push(Symbol::ID_TITLE),
                2 => symbols.push(Symbol::ID_SPAN),
                _ => {}
            }
            for _ in 0..len {
                symbols.push(if rng.random_range(0..50) == 0 {
                    Symbol::UNK
                } else {
                    word(rng.random_range(0..alphabet))
                });
            }
            StreamDoc {
                doc_id: format!("doc{:05}-{i:03}", rng.random_range(0..100_000)),
                symbols,
            }
        })
        .collect();
    RandomCorpus { vocab, docs }
}

/// `doc_1 SEP doc_2 SEP ... SEP` with documents in id order, plus the start
/// offset of every document.
pub fn forward_stream(docs: &[StreamDoc]) -> (Vec<Symbol>, Vec<(String, usize)>) {
    let mut sorted: Vec<&StreamDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut stream = Vec::new();
    let mut starts = Vec::new();
    for d in sorted {
        starts.push((d.doc_id.clone(), stream.len()));
        stream.extend_from_slice(&d.symbols);
        stream.push(Symbol::DOC_SEP);
    }
    (stream, starts)
}

fn occurrences(stream: &[Symbol], pattern: &[Symbol]) -> Vec<usize> {
    if pattern.is_empty() || pattern.len() > stream.len() {
        return Vec::new();
    }
    stream
        .windows(pattern.len())
        .enumerate()
        .filter(|(_, w)| *w == pattern)
        .map(|(i, _)| i)
        .collect()
}

pub fn naive_count(stream: &[Symbol], pattern: &[Symbol]) -> u64 {
    occurrences(stream, pattern).len() as u64
}

/// Next-symbol histogram: non-reserved symbols (UNK included) by id, plus
/// the number of occurrences followed by anything else or by the stream end.
pub type NaiveSuccessors = (BTreeMap<Symbol, u64>, u64);

pub type NaiveOccurrence = (String, u32, IdentifierKind);

/// Linear-scan answers over the forward stream of a document set.
pub struct Oracle {
    pub stream: Vec<Symbol>,
    starts: Vec<(String, usize)>,
    /// Kind of the nearest identifier tag strictly before each position in
    /// the same document, Span when there is none.
    kind_before: Vec<IdentifierKind>,
}

impl Oracle {
    pub fn new(docs: &[StreamDoc]) -> Self {
        let (stream, starts) = forward_stream(docs);
        let mut kind_before = Vec::with_capacity(stream.len());
        let mut current = IdentifierKind::Span;
        let mut next_start = starts.iter().map(|(_, s)| *s).peekable();
        for (i, &s) in stream.iter().enumerate() {
            if next_start.peek() == Some(&i) {
                next_start.next();
                current = IdentifierKind::Span;
            }
            kind_before.push(current);
            match s {
                Symbol::ID_SPAN => current = IdentifierKind::Span,
                Symbol::ID_PSEUDOQ => current = IdentifierKind::PseudoQuery,
                Symbol::ID_TITLE => current = IdentifierKind::Title,
                _ => {}
            }
        }
        Oracle {
            stream,
            starts,
            kind_before,
        }
    }

    /// Count, successors and sorted occurrences of `pattern` from one scan.
    pub fn answer(&self, pattern: &[Symbol]) -> (u64, NaiveSuccessors, Vec<NaiveOccurrence>) {
        let occ = occurrences(&self.stream, pattern);
        let mut symbols = BTreeMap::new();
        let mut boundary = 0;
        let mut located = Vec::with_capacity(occ.len());
        for &i in &occ {
            match self.stream.get(i + pattern.len()) {
                Some(&s) if !s.is_reserved() || s == Symbol::UNK => *symbols.entry(s).or_insert(0) += 1,
                _ => boundary += 1,
            }
            let d = self.starts.partition_point(|&(_, s)| s <= i) - 1;
            let (id, start) = &self.starts[d];
            located.push((id.clone(), (i - start) as u32, self.kind_before[i]));
        }
        located.sort();
        (occ.len() as u64, (symbols, boundary), located)
    }
}

/// Half substrings of the stream (which may cross document boundaries),
/// half random strings over the vocabulary.
pub fn random_pattern(rng: &mut impl Rng, stream: &[Symbol], vocab_len: usize) -> Vec<Symbol> {
    let len = rng.random_range(1..=8usize);
    if rng.random_bool(0.5) && stream.len() >= len {
        let i = rng.random_range(0..=stream.len() - len);
        stream[i..i + len].to_vec()
    } else {
        (0..len)
            .map(|_| Symbol(rng.random_range(1..vocab_len as u32)))
            .collect()
    }
}
