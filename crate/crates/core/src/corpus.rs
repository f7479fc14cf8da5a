//! Timestamped documents and queries, date-prefix rendering, and the
//! symbol vocabulary shared by every index.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::LazyLock;

use chrono::{Datelike, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::container::{Fingerprint, FingerprintHasher};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDoc(String),
    #[error("duplicate qid {0:?}")]
    DuplicateQuery(String),
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::Malformed { .. } => "CORPUS_MALFORMED",
            CorpusError::DuplicateDoc(_) => "CORPUS_DUPLICATE_DOC",
            CorpusError::DuplicateQuery(_) => "CORPUS_DUPLICATE_QUERY",
            CorpusError::Io(_) => "CORPUS_IO",
        }
    }
}

/// Which side of the cutover a document or evaluation query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Initial,
    New,
}

impl Split {
    pub fn of(date: NaiveDate, cutover: NaiveDate) -> Split {
        if date < cutover {
            Split::Initial
        } else {
            Split::New
        }
    }
}

/// Default cutover between the initial and new corpora.
pub fn default_cutover() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub pub_date: NaiveDate,
    pub split: Split,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>, pub_date: NaiveDate, cutover: NaiveDate) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            pub_date,
            split: Split::of(pub_date, cutover),
        }
    }

    /// Text as it is fed to indexes: date-prefixed unless disabled.
    pub fn indexed_text(&self, with_timestamp: bool) -> String {
        if with_timestamp {
            render_doc_prefix(self.pub_date, &self.text)
        } else {
            self.text.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub qid: String,
    pub question: String,
    pub asked_date: NaiveDate,
    pub gold_doc_ids: BTreeSet<String>,
    pub gold_answers: Vec<String>,
    pub split: Split,
    pub is_pseudo: bool,
}

impl Query {
    /// The question with its "Today is ..." prefix. Questions that already
    /// carry a prefix are returned unchanged.
    pub fn rendered(&self) -> String {
        if strip_timestamp(&self.question).len() != self.question.len() {
            self.question.clone()
        } else {
            render_query_prefix(self.asked_date, &self.question)
        }
    }
}

fn date_phrase(date: NaiveDate) -> String {
    date.format("%A, %B %-d, %Y").to_string()
}

/// `Today is Wednesday, May 6, 2020. {question}`
pub fn render_query_prefix(asked_date: NaiveDate, question: &str) -> String {
    format!("Today is {}. {}", date_phrase(asked_date), question)
}

/// `Thursday, February 7, 2019. {text}`
pub fn render_doc_prefix(pub_date: NaiveDate, text: &str) -> String {
    format!("{}. {}", date_phrase(pub_date), text)
}

const WEEKDAYS: &str = "Monday|Tuesday|Wednesday|Thursday|Friday|Saturday|Sunday";
const MONTHS: &str =
    "January|February|March|April|May|June|July|August|September|October|November|December";

static PREFIX_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:Today is )?({WEEKDAYS}), ({MONTHS}) (\d{{1,2}}) ?, (\d{{4}})\.(?: |$)"
    ))
    .expect("static regex")
});

/// Removes one leading date prefix (query or document style). Text without
/// a recognised prefix is returned unchanged.
pub fn strip_timestamp(text: &str) -> &str {
    match PREFIX_RE.find(text) {
        Some(m) => &text[m.end()..],
        None => text,
    }
}

/// Returns a warning when a prefix names a weekday that disagrees with its
/// own calendar date.
pub fn check_prefix_weekday(text: &str) -> Option<String> {
    let caps = PREFIX_RE.captures(text)?;
    let month = MONTHS.split('|').position(|m| m == &caps[2])? as u32 + 1;
    let day: u32 = caps[3].parse().ok()?;
    let year: i32 = caps[4].parse().ok()?;
    let date = NaiveDate::from_ymd_opt(year, month, day)?;
    let actual = date.format("%A").to_string();
    (actual != caps[1]).then(|| {
        format!(
            "prefix says {} but {} is a {}",
            &caps[1],
            date.format("%Y-%m-%d"),
            actual
        )
    })
}

/// Splits text into lowercase word and punctuation tokens.
///
/// Every non-alphanumeric, non-whitespace character becomes its own token.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            let lower: String = ch.to_lowercase().collect();
            if lower.chars().all(char::is_alphanumeric) {
                cur.push_str(&lower);
            } else {
                cur.push(ch);
            }
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Word tokens only (punctuation dropped), the unit of lexical matching.
pub fn terms(text: &str) -> Vec<String> {
    let mut t = tokenize_words(text);
    t.retain(|w| w.chars().next().is_some_and(char::is_alphanumeric));
    t
}

/// Canonical form recovered by `detokenize(tokenize(x))`: lowercase,
/// punctuation separated by single spaces, whitespace collapsed.
pub fn normalize_text(text: &str) -> String {
    tokenize_words(text).join(" ")
}

/// Whitespace token count, the "words separated by space" statistic.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Vocabulary symbol id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u32);

impl Symbol {
    /// Lexicographically smallest sentinel closing every indexed stream.
    pub const TERMINATOR: Symbol = Symbol(0);
    /// Document boundary.
    pub const DOC_SEP: Symbol = Symbol(1);
    pub const ID_SPAN: Symbol = Symbol(2);
    pub const ID_PSEUDOQ: Symbol = Symbol(3);
    pub const ID_TITLE: Symbol = Symbol(4);
    /// Out-of-vocabulary text at query time.
    pub const UNK: Symbol = Symbol(5);

    pub const RESERVED: u32 = 6;

    pub fn is_reserved(self) -> bool {
        self.0 < Self::RESERVED
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

// Names cannot be produced by tokenize_words, which splits off '<' and '>'.
const RESERVED_NAMES: [&str; 6] = ["<$>", "<sep>", "<span>", "<pseudoq>", "<title>", "<unk>"];

/// Bidirectional string/symbol table. Ids are dense from 0 and the first
/// [`Symbol::RESERVED`] ids are reserved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    #[serde(skip)]
    fingerprint: Fingerprint,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            symbols: RESERVED_NAMES.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
            fingerprint: Fingerprint::default(),
        };
        v.reindex();
        v
    }

    /// Builds a vocabulary covering every token of `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        v.extend(texts);
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        self.refresh_fingerprint();
    }

    fn refresh_fingerprint(&mut self) {
        let mut h = FingerprintHasher::new();
        for s in &self.symbols {
            h.bytes(s.as_bytes());
        }
        self.fingerprint = h.finish();
    }

    /// Grows the table with any unseen tokens in `texts`. Ingestion only;
    /// indexes built before growth no longer match the fingerprint.
    pub fn extend<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) {
        let before = self.symbols.len();
        for text in texts {
            for tok in tokenize_words(text) {
                if !self.index.contains_key(&tok) {
                    self.index.insert(tok.clone(), self.symbols.len() as u32);
                    self.symbols.push(tok);
                }
            }
        }
        if self.symbols.len() != before {
            self.refresh_fingerprint();
        }
    }

    /// Maps text to symbols under the current (frozen) table. Unknown tokens
    /// become [`Symbol::UNK`].
    pub fn encode(&self, text: &str) -> Vec<Symbol> {
        tokenize_words(text)
            .iter()
            .map(|t| self.lookup(t).unwrap_or(Symbol::UNK))
            .collect()
    }

    pub fn lookup(&self, token: &str) -> Option<Symbol> {
        self.index
            .get(token)
            .copied()
            .filter(|&id| id >= Symbol::RESERVED)
            .map(Symbol)
    }

    pub fn name(&self, s: Symbol) -> Option<&str> {
        self.symbols.get(s.index()).map(String::as_str)
    }

    pub fn detokenize(&self, symbols: &[Symbol]) -> String {
        symbols
            .iter()
            .map(|s| self.name(*s).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Vocabulary size `|V|`, reserved symbols included.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= Symbol::RESERVED as usize
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        let mut v: Vocabulary = serde_json::from_str(s).map_err(|e| CorpusError::Malformed {
            line: e.line(),
            reason: e.to_string(),
        })?;
        if v.symbols.len() < RESERVED_NAMES.len()
            || v.symbols[..RESERVED_NAMES.len()] != RESERVED_NAMES
        {
            return Err(CorpusError::Malformed {
                line: 1,
                reason: "vocabulary lacks reserved symbols".into(),
            });
        }
        v.reindex();
        Ok(v)
    }
}

#[derive(Deserialize)]
struct DocRecord {
    id: String,
    text: String,
    date: NaiveDate,
}

#[derive(Deserialize)]
struct QueryRecord {
    qid: String,
    question: String,
    asked_date: NaiveDate,
    #[serde(default)]
    gold_ids: Vec<String>,
    #[serde(default)]
    answers: Vec<String>,
    #[serde(default)]
    pseudo: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub docs: usize,
    pub tokens: usize,
    pub tokens_per_passage: f64,
}

impl SplitStats {
    fn add(&mut self, tokens: usize) {
        self.docs += 1;
        self.tokens += tokens;
        self.tokens_per_passage = self.tokens as f64 / self.docs as f64;
    }
}

/// Per-split document and whitespace-token counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub initial: SplitStats,
    pub new: SplitStats,
    pub total: SplitStats,
}

impl CorpusStats {
    pub fn of(docs: &[Document]) -> Self {
        let mut stats = CorpusStats::default();
        for d in docs {
            let n = whitespace_tokens(&d.text);
            match d.split {
                Split::Initial => stats.initial.add(n),
                Split::New => stats.new.add(n),
            }
            stats.total.add(n);
        }
        stats
    }
}

fn jsonl_lines<R: Read>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

/// Reads a corpus JSONL stream (`{"id", "text", "date"}` per line).
pub fn read_corpus<R: Read>(reader: R, cutover: NaiveDate) -> Result<(Vec<Document>, CorpusStats), CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (line, text) in jsonl_lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        if rec.text.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line,
                reason: "empty document text".into(),
            });
        }
        if let Some(w) = check_prefix_weekday(&rec.text) {
            log::warn!("line {line}: doc {}: {w}", rec.id);
        }
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateDoc(rec.id));
        }
        docs.push(Document::new(rec.id, rec.text, rec.date, cutover));
    }
    let stats = CorpusStats::of(&docs);
    Ok((docs, stats))
}

pub fn load_corpus(path: &Path, cutover: NaiveDate) -> Result<(Vec<Document>, CorpusStats), CorpusError> {
    read_corpus(File::open(path)?, cutover)
}

/// Reads a query JSONL stream. The caller decides which evaluation set the
/// file represents; non-pseudo queries must name at least one gold document.
pub fn read_queries<R: Read>(reader: R, split: Split) -> Result<Vec<Query>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, text) in jsonl_lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        if !rec.pseudo && rec.gold_ids.is_empty() {
            return Err(CorpusError::Malformed {
                line,
                reason: "evaluation query without gold_ids".into(),
            });
        }
        if let Some(w) = check_prefix_weekday(&rec.question) {
            log::warn!("line {line}: query {}: {w}", rec.qid);
        }
        if !seen.insert(rec.qid.clone()) {
            return Err(CorpusError::DuplicateQuery(rec.qid));
        }
        out.push(Query {
            qid: rec.qid,
            question: rec.question,
            asked_date: rec.asked_date,
            gold_doc_ids: rec.gold_ids.into_iter().collect(),
            gold_answers: rec.answers,
            split,
            is_pseudo: rec.pseudo,
        });
    }
    Ok(out)
}

pub fn load_queries(path: &Path, split: Split) -> Result<Vec<Query>, CorpusError> {
    read_queries(File::open(path)?, split)
}

/// Partitions documents into (initial, new) by their split tag.
pub fn partition(docs: &[Document]) -> (Vec<Document>, Vec<Document>) {
    docs.iter().cloned().partition(|d| d.split == Split::Initial)
}

/// Calendar date helper for tests and fixtures.
pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Weekday of `date` as it appears in rendered prefixes.
pub fn weekday_name(date: NaiveDate) -> String {
    date.weekday().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn query_prefix_examples() {
        assert_eq!(
            render_query_prefix(ymd(2020, 5, 6), "Who won?"),
            "Today is Wednesday, May 6, 2020. Who won?"
        );
        assert_eq!(
            render_query_prefix(ymd(2019, 2, 7), ""),
            "Today is Thursday, February 7, 2019. "
        );
        assert_eq!(
            render_query_prefix(ymd(2020, 10, 25), "When did the pay gap...decrease to 2%?"),
            "Today is Sunday, October 25, 2020. When did the pay gap...decrease to 2%?"
        );
    }

    #[test]
    fn doc_prefix_examples() {
        assert_eq!(render_doc_prefix(ymd(2019, 2, 7), "X"), "Thursday, February 7, 2019. X");
        assert_eq!(
            render_doc_prefix(ymd(2020, 3, 24), "President Donald Trump signs executive order..."),
            "Tuesday, March 24, 2020. President Donald Trump signs executive order..."
        );
        assert_eq!(render_doc_prefix(ymd(2020, 1, 1), ""), "Wednesday, January 1, 2020. ");
    }

    #[test]
    fn strip_examples() {
        assert_eq!(
            strip_timestamp("Today is Sunday, May 2, 2020. What was the top level of the FTSE 100?"),
            "What was the top level of the FTSE 100?"
        );
        assert_eq!(strip_timestamp("No date here."), "No date here.");
        assert_eq!(strip_timestamp("Thursday, February 7, 2019. body"), "body");
        assert_eq!(strip_timestamp("Today is Thursday, February 7, 2019. "), "");
        // Stops at the first period-plus-space.
        assert_eq!(
            strip_timestamp("Monday, October 12, 2020. In 2019 wages rose. More."),
            "In 2019 wages rose. More."
        );
    }

    #[test]
    fn weekday_mismatch_is_reported() {
        // May 2, 2020 was a Saturday.
        let w = check_prefix_weekday("Today is Sunday, May 2, 2020. Q?").unwrap();
        assert!(w.contains("Saturday"), "{w}");
        assert!(check_prefix_weekday("Today is Saturday, May 2, 2020. Q?").is_none());
        assert!(check_prefix_weekday("plain").is_none());
        assert_eq!(weekday_name(ymd(2020, 5, 2)), "Sat");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize_words("Hello, world"), vec!["hello", ",", "world"]);
        assert!(tokenize_words("").is_empty());
        assert_eq!(tokenize_words("  40.5%\tUP "), vec!["40", ".", "5", "%", "up"]);
    }

    #[test]
    fn vocabulary_reserved_ids() {
        let v = Vocabulary::from_texts(["<sep> <$> <unk> <title> a b"]);
        assert_eq!(v.name(Symbol::TERMINATOR), Some("<$>"));
        for s in v.encode("<sep> <$> <unk> <title> a") {
            assert!(!s.is_reserved(), "{s}");
        }
        assert_eq!(v.encode("zzz"), vec![Symbol::UNK]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    #[test]
    fn vocabulary_fingerprint_tracks_growth() {
        let mut v = Vocabulary::from_texts(["a b"]);
        let fp = v.fingerprint();
        v.extend(["a"]);
        assert_eq!(v.fingerprint(), fp);
        v.extend(["c"]);
        assert_ne!(v.fingerprint(), fp);
    }

    fn fixture_jsonl() -> String {
        let mut s = String::new();
        for i in 0..7 {
            s.push_str(&format!(
                "{{\"id\":\"d{i}\",\"text\":\"old text {i}\",\"date\":\"2019-0{}-1{i}\"}}\n",
                i % 9 + 1
            ));
        }
        for i in 7..10 {
            s.push_str(&format!(
                "{{\"id\":\"d{i}\",\"text\":\"new text number {i}\",\"date\":\"2020-03-0{}\"}}\n",
                i - 6
            ));
        }
        s
    }

    #[test]
    fn load_splits_by_cutover() {
        let (docs, stats) = read_corpus(fixture_jsonl().as_bytes(), default_cutover()).unwrap();
        assert_eq!(docs.len(), 10);
        assert_eq!((stats.initial.docs, stats.new.docs), (7, 3));
        assert_eq!(stats.initial.tokens, 21);
        assert_eq!(stats.new.tokens, 12);
        assert_eq!(stats.total.docs, 10);
        assert!((stats.new.tokens_per_passage - 4.0).abs() < 1e-12);
    }

    #[test]
    fn load_empty_and_errors() {
        let (docs, stats) = read_corpus(&b""[..], default_cutover()).unwrap();
        assert!(docs.is_empty());
        assert_eq!(stats, CorpusStats::default());

        let bad = "{\"id\":\"a\",\"text\":\"x\",\"date\":\"2020-01-01\"}\nnot json\n";
        match read_corpus(bad.as_bytes(), default_cutover()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "{\"id\":\"a\",\"text\":\"x\",\"date\":\"2020-01-01\"}\n{\"id\":\"a\",\"text\":\"y\",\"date\":\"2020-01-02\"}\n";
        assert!(matches!(
            read_corpus(dup.as_bytes(), default_cutover()),
            Err(CorpusError::DuplicateDoc(_))
        ));
    }

    #[test]
    fn query_loading() {
        let src = concat!(
            "{\"qid\":\"q1\",\"question\":\"Who?\",\"asked_date\":\"2020-05-06\",\"gold_ids\":[\"d1\"],\"answers\":[\"Bob\"]}\n",
            "{\"qid\":\"p1\",\"question\":\"pseudo\",\"asked_date\":\"2020-05-06\",\"gold_ids\":[\"d1\"],\"pseudo\":true}\n",
        );
        let qs = read_queries(src.as_bytes(), Split::New).unwrap();
        assert_eq!(qs.len(), 2);
        assert!(qs[1].is_pseudo);
        assert_eq!(qs[0].rendered(), "Today is Wednesday, May 6, 2020. Who?");
        let no_gold = "{\"qid\":\"q\",\"question\":\"x\",\"asked_date\":\"2020-05-06\",\"gold_ids\":[]}";
        assert!(read_queries(no_gold.as_bytes(), Split::New).is_err());
    }

    fn date_strategy() -> impl Strategy<Value = NaiveDate> {
        (2007i32..=2020, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| ymd(y, m, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn strip_inverts_render(date in date_strategy(), text in "[a-zA-Z0-9 ,?.]{0,40}") {
            prop_assume!(strip_timestamp(&text) == text);
            let q = render_query_prefix(date, &text);
            let d = render_doc_prefix(date, &text);
            prop_assert_eq!(strip_timestamp(&q), text.as_str());
            prop_assert_eq!(strip_timestamp(&d), text.as_str());
            prop_assert_eq!(strip_timestamp(strip_timestamp(&q)), strip_timestamp(&q));
        }

        #[test]
        fn tokenize_roundtrip(text in "\\PC{0,60}") {
            let toks = tokenize_words(&text);
            let joined = toks.join(" ");
            prop_assert_eq!(&joined, &normalize_text(&text));
            prop_assert_eq!(tokenize_words(&joined), toks.clone());
            prop_assert_eq!(tokenize_words(&text), toks);
        }
    }
}
