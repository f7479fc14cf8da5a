use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::GenError;
use crate::container::{write_atomic, ByteReader, ByteWriter, Fingerprint, FingerprintHasher, FormatError};
use crate::corpus::{Symbol, Vocabulary};
use crate::dp_analysis::{diff_and_select, DPReport, ModuleKind, ParamGroup, ParamSnapshot};
use crate::fm_index::StreamDoc;

const MAGIC: &[u8; 8] = b"DYNIRNGM";
const VERSION: u32 = 1;
const ORDER: u32 = 3;

/// Query-conditioned state handed to every `score_next` call of one search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryContext {
    /// Normalized copy weight per distinct query symbol.
    weight: HashMap<Symbol, f64>,
    /// For each query symbol, the distribution of the symbol that follows it
    /// in the query.
    follow: HashMap<Symbol, Vec<(Symbol, f64)>>,
}

impl QueryContext {
    /// Builds a copy distribution over `query` with the given per-symbol
    /// importance. Reserved symbols (including UNK) are skipped.
    pub fn new(query: &[Symbol], importance: impl Fn(Symbol) -> f64) -> Self {
        let usable: Vec<Symbol> = query.iter().copied().filter(|s| !s.is_reserved()).collect();
        let distinct: BTreeSet<Symbol> = usable.iter().copied().collect();
        let raw: Vec<(Symbol, f64)> = distinct
            .into_iter()
            .map(|s| (s, importance(s).max(0.0)))
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        let weight = if total > 0.0 {
            raw.into_iter().map(|(s, w)| (s, w / total)).collect()
        } else {
            HashMap::new()
        };
        let mut pairs: HashMap<Symbol, Vec<Symbol>> = HashMap::new();
        for w in usable.windows(2) {
            pairs.entry(w[0]).or_default().push(w[1]);
        }
        let follow = pairs
            .into_iter()
            .map(|(s, nexts)| {
                let n = nexts.len() as f64;
                let mut counts: Vec<(Symbol, f64)> = Vec::new();
                let mut sorted = nexts;
                sorted.sort_unstable();
                for t in sorted {
                    match counts.last_mut() {
                        Some((last, c)) if *last == t => *c += 1.0,
                        _ => counts.push((t, 1.0)),
                    }
                }
                for c in &mut counts {
                    c.1 /= n;
                }
                (s, counts)
            })
            .collect();
        QueryContext { weight, follow }
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    /// Probability of copying `w` next, given the last generated symbol.
    pub fn copy_prob(&self, last: Option<Symbol>, w: Symbol, continue_weight: f64) -> f64 {
        let base = self.weight.get(&w).copied().unwrap_or(0.0);
        match last.and_then(|l| self.follow.get(&l)) {
            Some(nexts) => {
                let f = nexts
                    .iter()
                    .find(|(s, _)| *s == w)
                    .map_or(0.0, |(_, p)| *p);
                continue_weight * f + (1.0 - continue_weight) * base
            }
            None => base,
        }
    }
}

/// Next-symbol scorer driving constrained decoding.
pub trait Scorer: Send + Sync {
    fn fingerprint(&self) -> Fingerprint;

    /// Fingerprint of the vocabulary the scorer's symbol ids refer to.
    fn vocab_fingerprint(&self) -> Fingerprint;

    /// Per-query state; the default weighs query symbols uniformly.
    fn prepare(&self, query: &[Symbol]) -> QueryContext {
        QueryContext::new(query, |_| 1.0)
    }

    /// Log-probability of each candidate following `prefix`. A non-finite
    /// value marks a candidate outside the scorer's support.
    fn score_next(&self, ctx: &QueryContext, prefix: &[Symbol], candidates: &[Symbol]) -> Vec<f64>;
}

/// Assigns every candidate the same score.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab_fingerprint: Fingerprint,
    vocab_size: u32,
}

impl UniformScorer {
    pub fn new(vocab: &Vocabulary) -> Self {
        UniformScorer {
            vocab_fingerprint: vocab.fingerprint(),
            vocab_size: vocab.len() as u32,
        }
    }
}

impl Scorer for UniformScorer {
    fn fingerprint(&self) -> Fingerprint {
        let mut h = FingerprintHasher::new();
        h.bytes(b"uniform").bytes(&self.vocab_fingerprint.0);
        h.finish()
    }

    fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    fn score_next(&self, _ctx: &QueryContext, _prefix: &[Symbol], candidates: &[Symbol]) -> Vec<f64> {
        vec![-(f64::from(self.vocab_size.max(1))).ln(); candidates.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Add the new corpus' counts to the existing tables.
    Merge,
    /// Same count update, plus a dynamic-parameter report over the
    /// probability tables before and after.
    FfnTargeted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    /// Mixture weight of the query-copy distribution.
    pub copy_weight: f64,
    /// Within the copy distribution, weight on the symbol that follows the
    /// last generated one in the query.
    pub continue_weight: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            copy_weight: 0.5,
            continue_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tables {
    ctx2: HashMap<[u32; 2], (u64, u64)>,
    cont2: HashMap<[u32; 2], u64>,
    ctx1: HashMap<u32, (u64, u64)>,
    cont1: HashMap<u32, u64>,
    cont1_total: u64,
    cont1_types: u64,
    d3: f64,
    d2: f64,
    d1: f64,
}

fn discount<'a>(counts: impl Iterator<Item = &'a u64>) -> f64 {
    let (mut n1, mut n2) = (0u64, 0u64);
    for &c in counts {
        match c {
            1 => n1 += 1,
            2 => n2 += 1,
            _ => {}
        }
    }
    if n1 + 2 * n2 == 0 {
        0.5
    } else {
        (n1 as f64 / (n1 + 2 * n2) as f64).clamp(0.05, 0.95)
    }
}

impl Tables {
    fn derive(tri: &HashMap<[u32; 3], u64>) -> Self {
        let mut t = Tables::default();
        for (&[u, v, w], &c) in tri {
            let e = t.ctx2.entry([u, v]).or_default();
            e.0 += c;
            e.1 += 1;
            *t.cont2.entry([v, w]).or_default() += 1;
        }
        for (&[v, w], &c) in &t.cont2 {
            let e = t.ctx1.entry(v).or_default();
            e.0 += c;
            e.1 += 1;
            *t.cont1.entry(w).or_default() += 1;
        }
        t.cont1_total = t.cont1.values().sum();
        t.cont1_types = t.cont1.len() as u64;
        t.d3 = discount(tri.values());
        t.d2 = discount(t.cont2.values());
        t.d1 = discount(t.cont1.values());
        t
    }
}

/// Interpolated Kneser–Ney trigram model over identifier streams, mixed
/// with a query-copy distribution so generation is conditioned on the query.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    config: NgramConfig,
    vocab_fingerprint: Fingerprint,
    vocab_size: u32,
    fingerprint: Fingerprint,
    n_docs: u64,
    df: HashMap<u32, u64>,
    tri: HashMap<[u32; 3], u64>,
    tables: Tables,
}

/// Result of [`NgramScorer::update`].
#[derive(Debug, Clone)]
pub struct ScorerUpdate {
    pub scorer: NgramScorer,
    /// False when the update carried no documents and nothing changed.
    pub changed: bool,
    pub dp_report: Option<DPReport>,
}

fn stream_digest(h: &mut FingerprintHasher, docs: &[StreamDoc]) {
    let mut order: Vec<&StreamDoc> = docs.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for d in order {
        h.bytes(d.doc_id.as_bytes());
        h.u64(d.symbols.len() as u64);
        for s in &d.symbols {
            h.u64(u64::from(s.0));
        }
    }
}

impl NgramScorer {
    fn empty(vocab: &Vocabulary, config: NgramConfig) -> Self {
        NgramScorer {
            config,
            vocab_fingerprint: vocab.fingerprint(),
            vocab_size: vocab.len() as u32,
            fingerprint: Fingerprint::default(),
            n_docs: 0,
            df: HashMap::new(),
            tri: HashMap::new(),
            tables: Tables::default(),
        }
    }

    pub fn train(docs: &[StreamDoc], vocab: &Vocabulary) -> Result<Self, GenError> {
        Self::train_with(docs, vocab, NgramConfig::default())
    }

    pub fn train_with(docs: &[StreamDoc], vocab: &Vocabulary, config: NgramConfig) -> Result<Self, GenError> {
        let mut s = Self::empty(vocab, config);
        s.add_counts(docs)?;
        let mut h = FingerprintHasher::new();
        h.bytes(b"ngram")
            .u64(u64::from(ORDER))
            .f64(config.copy_weight)
            .f64(config.continue_weight)
            .bytes(&vocab.fingerprint().0);
        stream_digest(&mut h, docs);
        s.fingerprint = h.finish();
        s.tables = Tables::derive(&s.tri);
        Ok(s)
    }

    fn add_counts(&mut self, docs: &[StreamDoc]) -> Result<(), GenError> {
        for d in docs {
            if let Some(&bad) = d.symbols.iter().find(|s| s.0 >= self.vocab_size) {
                return Err(GenError::SymbolOutOfRange {
                    symbol: bad,
                    vocab_size: self.vocab_size,
                });
            }
        }
        let pad = Symbol::DOC_SEP.0;
        for d in docs {
            let mut seq = Vec::with_capacity(d.symbols.len() + 3);
            seq.extend([pad, pad]);
            seq.extend(d.symbols.iter().map(|s| s.0));
            seq.push(pad);
            for w in seq.windows(3) {
                *self.tri.entry([w[0], w[1], w[2]]).or_default() += 1;
            }
            let distinct: BTreeSet<u32> = d.symbols.iter().map(|s| s.0).collect();
            for s in distinct {
                *self.df.entry(s).or_default() += 1;
            }
            self.n_docs += 1;
        }
        Ok(())
    }

    /// Returns a new scorer with `new_docs` folded in; `self` is untouched.
    pub fn update(&self, new_docs: &[StreamDoc], mode: UpdateMode) -> Result<ScorerUpdate, GenError> {
        if new_docs.is_empty() {
            return Ok(ScorerUpdate {
                scorer: self.clone(),
                changed: false,
                dp_report: None,
            });
        }
        let mut next = self.clone();
        next.add_counts(new_docs)?;
        let mut h = FingerprintHasher::new();
        h.bytes(b"ngram-update").bytes(&self.fingerprint.0);
        stream_digest(&mut h, new_docs);
        next.fingerprint = h.finish();
        next.tables = Tables::derive(&next.tri);
        let dp_report = match mode {
            UpdateMode::Merge => None,
            UpdateMode::FfnTargeted => {
                let (before, after) = self.paired_snapshots(&next);
                Some(diff_and_select(&before, &after, 90.0)?)
            }
        };
        Ok(ScorerUpdate {
            scorer: next,
            changed: true,
            dp_report,
        })
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn doc_count(&self) -> u64 {
        self.n_docs
    }

    pub fn trigram_types(&self) -> usize {
        self.tri.len()
    }

    /// Document frequency of a symbol in the training streams.
    pub fn df(&self, s: Symbol) -> u64 {
        self.df.get(&s.0).copied().unwrap_or(0)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, s: Symbol) -> f64 {
        let n = self.n_docs as f64;
        let df = self.df(s) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn p1(&self, w: u32) -> f64 {
        let t = &self.tables;
        let uniform = 1.0 / f64::from(self.vocab_size.max(1));
        if t.cont1_total == 0 {
            return uniform;
        }
        let total = t.cont1_total as f64;
        let c = t.cont1.get(&w).copied().unwrap_or(0) as f64;
        (c - t.d1).max(0.0) / total + t.d1 * t.cont1_types as f64 / total * uniform
    }

    fn p2(&self, v: u32, w: u32) -> f64 {
        let t = &self.tables;
        let lower = self.p1(w);
        match t.ctx1.get(&v) {
            Some(&(total, distinct)) if total > 0 => {
                let total = total as f64;
                let c = t.cont2.get(&[v, w]).copied().unwrap_or(0) as f64;
                (c - t.d2).max(0.0) / total + t.d2 * distinct as f64 / total * lower
            }
            _ => lower,
        }
    }

    fn p3(&self, u: u32, v: u32, w: u32) -> f64 {
        let t = &self.tables;
        let lower = self.p2(v, w);
        match t.ctx2.get(&[u, v]) {
            Some(&(total, distinct)) if total > 0 => {
                let total = total as f64;
                let c = self.tri.get(&[u, v, w]).copied().unwrap_or(0) as f64;
                (c - t.d3).max(0.0) / total + t.d3 * distinct as f64 / total * lower
            }
            _ => lower,
        }
    }

    /// Smoothed n-gram probability of `w` after `prefix`, ignoring the query.
    pub fn lm_prob(&self, prefix: &[Symbol], w: Symbol) -> f64 {
        match prefix {
            [] => self.p1(w.0),
            [v] => self.p2(v.0, w.0),
            [.., u, v] => self.p3(u.0, v.0, w.0),
        }
    }

    /// Mean per-symbol log-probability of a sequence under the n-gram model
    /// alone, starting from a document boundary.
    pub fn avg_log_prob(&self, seq: &[Symbol]) -> f64 {
        if seq.is_empty() {
            return 0.0;
        }
        let mut ctx = vec![Symbol::DOC_SEP, Symbol::DOC_SEP];
        let mut sum = 0.0;
        for &s in seq {
            sum += self.lm_prob(&ctx, s).ln();
            ctx.push(s);
        }
        sum / seq.len() as f64
    }

    /// Probability tables of `self` and `other` over the union of their
    /// observed keys, as aligned snapshots: layer 1 unigram continuation,
    /// layer 2 bigram, layer 3 trigram.
    pub fn paired_snapshots(&self, other: &NgramScorer) -> (ParamSnapshot, ParamSnapshot) {
        let v = self.vocab_size.max(other.vocab_size);
        let bi: BTreeSet<[u32; 2]> = self
            .tables
            .cont2
            .keys()
            .chain(other.tables.cont2.keys())
            .copied()
            .collect();
        let tri: BTreeSet<[u32; 3]> = self.tri.keys().chain(other.tri.keys()).copied().collect();
        let snap = |m: &NgramScorer| {
            ParamSnapshot::new(vec![
                ParamGroup {
                    layer: 1,
                    kind: ModuleKind::Other,
                    values: (0..v).map(|w| m.p1(w)).collect(),
                },
                ParamGroup {
                    layer: 2,
                    kind: ModuleKind::Other,
                    values: bi.iter().map(|&[a, b]| m.p2(a, b)).collect(),
                },
                ParamGroup {
                    layer: 3,
                    kind: ModuleKind::Other,
                    values: tri.iter().map(|&[a, b, c]| m.p3(a, b, c)).collect(),
                },
            ])
        };
        (snap(self), snap(other))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u32(ORDER);
        w.raw(&self.vocab_fingerprint.0);
        w.u32(self.vocab_size);
        w.raw(&self.fingerprint.0);
        w.f64(self.config.copy_weight);
        w.f64(self.config.continue_weight);
        w.u64(self.n_docs);
        let mut df: Vec<(u32, u64)> = self.df.iter().map(|(&k, &c)| (k, c)).collect();
        df.sort_unstable();
        w.u32_slice(&df.iter().map(|x| x.0).collect::<Vec<_>>());
        w.u64_slice(&df.iter().map(|x| x.1).collect::<Vec<_>>());
        let mut tri: Vec<([u32; 3], u64)> = self.tri.iter().map(|(&k, &c)| (k, c)).collect();
        tri.sort_unstable();
        w.u32_slice(&tri.iter().flat_map(|x| x.0).collect::<Vec<_>>());
        w.u64_slice(&tri.iter().map(|x| x.1).collect::<Vec<_>>());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GenError> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let order = r.u32()?;
        if order != ORDER {
            return Err(FormatError::Malformed(format!("unsupported n-gram order {order}")).into());
        }
        let vocab_fingerprint = r.fingerprint()?;
        let vocab_size = r.u32()?;
        let fingerprint = r.fingerprint()?;
        let config = NgramConfig {
            copy_weight: r.f64()?,
            continue_weight: r.f64()?,
        };
        let n_docs = r.u64()?;
        let df_keys = r.u32_vec()?;
        let df_counts = r.u64_vec()?;
        let tri_keys = r.u32_vec()?;
        let tri_counts = r.u64_vec()?;
        r.finish()?;
        if df_keys.len() != df_counts.len() || tri_keys.len() != 3 * tri_counts.len() {
            return Err(FormatError::Malformed("count table lengths disagree".into()).into());
        }
        let df = df_keys.into_iter().zip(df_counts).collect();
        let tri: HashMap<[u32; 3], u64> = tri_keys
            .chunks_exact(3)
            .map(|k| [k[0], k[1], k[2]])
            .zip(tri_counts)
            .collect();
        let tables = Tables::derive(&tri);
        Ok(NgramScorer {
            config,
            vocab_fingerprint,
            vocab_size,
            fingerprint,
            n_docs,
            df,
            tri,
            tables,
        })
    }

    pub fn save(&self, path: &Path) -> Result<u64, GenError> {
        Ok(write_atomic(path, &self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let bytes = std::fs::read(path).map_err(FormatError::from)?;
        Self::from_bytes(&bytes)
    }
}

impl Scorer for NgramScorer {
    fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn vocab_fingerprint(&self) -> Fingerprint {
        self.vocab_fingerprint
    }

    /// Query symbols are weighted by idf; symbols never seen in training get
    /// the maximal idf.
    fn prepare(&self, query: &[Symbol]) -> QueryContext {
        QueryContext::new(query, |s| self.idf(s))
    }

    fn score_next(&self, ctx: &QueryContext, prefix: &[Symbol], candidates: &[Symbol]) -> Vec<f64> {
        let lambda = self.config.copy_weight;
        let last = prefix.last().copied();
        candidates
            .iter()
            .map(|&w| {
                let p_lm = self.lm_prob(prefix, w);
                let p_copy = ctx.copy_prob(last, w, self.config.continue_weight);
                ((1.0 - lambda) * p_lm + lambda * p_copy).ln()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Vocabulary, Vec<StreamDoc>) {
        let texts = [
            "the bank raised interest rates again this spring",
            "the central bank kept rates unchanged in winter",
            "a new stadium opened in the city centre",
            "the team won the cup final after extra time",
            "interest rates are expected to fall next year",
        ];
        let vocab = Vocabulary::from_texts(texts.iter().copied().chain(["brand new words here"]));
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| StreamDoc {
                doc_id: format!("d{i}"),
                symbols: vocab.encode(t),
            })
            .collect();
        (vocab, docs)
    }

    #[test]
    fn distributions_normalize() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let all: Vec<Symbol> = (0..vocab.len() as u32).map(Symbol).collect();
        for prefix in [vec![], vocab.encode("the"), vocab.encode("the bank"), vocab.encode("zzz unseen")] {
            let total: f64 = all.iter().map(|&w| m.lm_prob(&prefix, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "prefix {prefix:?} sums to {total}");
        }
    }

    #[test]
    fn corpus_text_beats_random() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut wins = 0;
        for i in 0..100 {
            let doc = &docs[i % docs.len()].symbols;
            let random: Vec<Symbol> = (0..doc.len())
                .map(|_| Symbol(rng.random_range(Symbol::RESERVED..vocab.len() as u32)))
                .collect();
            if m.avg_log_prob(doc) > m.avg_log_prob(&random) {
                wins += 1;
            }
        }
        assert_eq!(wins, 100);
    }

    #[test]
    fn merge_updates() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let same = m.update(&[], UpdateMode::Merge).unwrap();
        assert!(!same.changed);
        assert_eq!(same.scorer.fingerprint(), m.fingerprint());
        let ctx = m.prepare(&vocab.encode("new words"));
        let cands = vocab.encode("words here");
        assert_eq!(
            same.scorer.score_next(&ctx, &vocab.encode("brand new"), &cands),
            m.score_next(&ctx, &vocab.encode("brand new"), &cands)
        );

        let new_doc = StreamDoc {
            doc_id: "n0".into(),
            symbols: vocab.encode("brand new words here"),
        };
        let up = m.update(std::slice::from_ref(&new_doc), UpdateMode::FfnTargeted).unwrap();
        assert!(up.changed);
        assert_ne!(up.scorer.fingerprint(), m.fingerprint());
        let prefix = vocab.encode("brand new");
        let w = vocab.lookup("words").unwrap();
        assert!(up.scorer.lm_prob(&prefix, w) > m.lm_prob(&prefix, w));
        let report = up.dp_report.unwrap();
        assert!(report.selected > 0 && report.selected <= report.total / 10 + 1);
    }

    #[test]
    fn vocab_range_checked() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let bad = StreamDoc {
            doc_id: "x".into(),
            symbols: vec![Symbol(vocab.len() as u32 + 3)],
        };
        assert!(matches!(
            m.update(&[bad], UpdateMode::Merge),
            Err(GenError::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn copy_context_boosts_query_symbols() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let ctx = m.prepare(&vocab.encode("stadium city"));
        let cands = vocab.encode("stadium the");
        let s = m.score_next(&ctx, &[], &cands);
        assert!(s[0] > s[1]);
        assert!(s.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn bytes_roundtrip() {
        let (vocab, docs) = fixture();
        let m = NgramScorer::train(&docs, &vocab).unwrap();
        let back = NgramScorer::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.fingerprint(), m.fingerprint());
        let ctx = m.prepare(&vocab.encode("interest rates"));
        let all: Vec<Symbol> = (0..vocab.len() as u32).map(Symbol).collect();
        let p = vocab.encode("the bank");
        assert_eq!(back.score_next(&ctx, &p, &all), m.score_next(&ctx, &p, &all));
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(NgramScorer::from_bytes(&bytes).is_err());
    }
}
