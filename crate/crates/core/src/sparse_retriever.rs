//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::container::{ByteReader, ByteWriter, FormatError};
use crate::corpus::{terms, Document};

const MAGIC: &[u8; 8] = b"DYNIRBM2";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    /// Sorted ascending; postings refer to positions in this list.
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    avg_len: f64,
    postings: HashMap<String, Vec<(u32, u32)>>,
}

type DocTerms = (String, u32, BTreeMap<String, u32>);

fn doc_terms(d: &Document, with_timestamp: bool) -> DocTerms {
    let mut tf = BTreeMap::new();
    let ts = terms(&d.indexed_text(with_timestamp));
    for t in &ts {
        *tf.entry(t.clone()).or_default() += 1;
    }
    (d.doc_id.clone(), ts.len() as u32, tf)
}

impl Bm25Index {
    pub fn build(docs: &[Document], params: Bm25Params, with_timestamp: bool) -> Self {
        Self::from_terms(docs.iter().map(|d| doc_terms(d, with_timestamp)).collect(), params)
    }

    fn from_terms(mut entries: Vec<DocTerms>, params: Bm25Params) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(entries.len());
        let mut doc_len = Vec::with_capacity(entries.len());
        for (i, (id, len, tf)) in entries.into_iter().enumerate() {
            for (t, c) in tf {
                postings.entry(t).or_default().push((i as u32, c));
            }
            doc_ids.push(id);
            doc_len.push(len);
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_len = if doc_ids.is_empty() {
            0.0
        } else {
            total as f64 / doc_ids.len() as f64
        };
        Bm25Index {
            params,
            doc_ids,
            doc_len,
            avg_len,
            postings,
        }
    }

    fn entries(&self) -> Vec<DocTerms> {
        let mut out: Vec<DocTerms> = self
            .doc_ids
            .iter()
            .zip(&self.doc_len)
            .map(|(id, &len)| (id.clone(), len, BTreeMap::new()))
            .collect();
        for (t, list) in &self.postings {
            for &(i, c) in list {
                out[i as usize].2.insert(t.clone(), c);
            }
        }
        out
    }

    /// Index over the union of the current documents and `docs`; scores
    /// equal those of a rebuild over the union.
    pub fn extend(&self, docs: &[Document], with_timestamp: bool) -> Self {
        let mut entries = self.entries();
        entries.extend(docs.iter().map(|d| doc_terms(d, with_timestamp)));
        Self::from_terms(entries, self.params)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of every document for the distinct terms of `query`.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let mut acc = vec![0.0; self.doc_ids.len()];
        let qterms: BTreeSet<String> = terms(query).into_iter().collect();
        for t in &qterms {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(i, tf) in list {
                let tf = f64::from(tf);
                let norm = 1.0 - b + b * f64::from(self.doc_len[i as usize]) / self.avg_len;
                acc[i as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        acc
    }

    /// Top `k` documents by score, ties by doc id. Zero-score documents fill
    /// the tail when fewer than `k` match.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let s = self.scores(query);
        let mut order: Vec<usize> = (0..s.len()).collect();
        // Positions are already in doc-id order, so a stable sort keeps ties by id.
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        order
            .into_iter()
            .take(k)
            .map(|i| (self.doc_ids[i].clone(), s[i]))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.u64(self.doc_ids.len() as u64);
        for id in &self.doc_ids {
            w.str(id);
        }
        w.u32_slice(&self.doc_len);
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.u64(terms.len() as u64);
        for t in terms {
            w.str(t);
            let list = &self.postings[t];
            w.u32_slice(&list.iter().flat_map(|&(i, c)| [i, c]).collect::<Vec<_>>());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        let n = r.u64()? as usize;
        let mut entries: Vec<DocTerms> = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            entries.push((r.str()?, 0, BTreeMap::new()));
        }
        let lens = r.u32_vec()?;
        if lens.len() != n {
            return Err(FormatError::Malformed("doc length table size".into()));
        }
        for (e, l) in entries.iter_mut().zip(lens) {
            e.1 = l;
        }
        let n_terms = r.u64()?;
        for _ in 0..n_terms {
            let t = r.str()?;
            let flat = r.u32_vec()?;
            for pair in flat.chunks_exact(2) {
                let e = entries
                    .get_mut(pair[0] as usize)
                    .ok_or_else(|| FormatError::Malformed("posting out of range".into()))?;
                e.2.insert(t.clone(), pair[1]);
            }
        }
        r.finish()?;
        Ok(Self::from_terms(entries, params))
    }
}
