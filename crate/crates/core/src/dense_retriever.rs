//! Dual-encoder analogue: a fitted text embedder and an exhaustive
//! inner-product index whose rows are tied to the embedder's fingerprint.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{write_atomic, ByteReader, ByteWriter, Fingerprint, FingerprintHasher, FormatError};
use crate::corpus::{terms, Document};

const MAGIC: &[u8; 8] = b"DYNIRVEC";
const VERSION: u32 = 1;
const EMB_MAGIC: &[u8; 8] = b"DYNIREMB";

#[derive(Debug, thiserror::Error)]
pub enum DenseError {
    #[error("cannot fit an embedder on an empty corpus")]
    EmptyCorpus,
    #[error("d_model must be at least 8, got {0}")]
    BadDimension(usize),
    #[error("index was embedded by {index} but the embedder is {embedder}; re-embed the full corpus")]
    StaleIndex {
        index: Fingerprint,
        embedder: Fingerprint,
    },
    #[error("document {0:?} is already in the index")]
    DuplicateDoc(String),
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl DenseError {
    pub fn code(&self) -> &'static str {
        match self {
            DenseError::EmptyCorpus => "DENSE_EMPTY_CORPUS",
            DenseError::BadDimension(_) => "DENSE_BAD_DIMENSION",
            DenseError::StaleIndex { .. } => "DENSE_STALE_INDEX",
            DenseError::DuplicateDoc(_) => "DENSE_DUPLICATE_DOC",
            DenseError::InvalidK(_) => "DENSE_INVALID_K",
            DenseError::Format(e) => e.code(),
        }
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn fingerprint(&self) -> Fingerprint;
    /// Unit-length (or all-zero) vector of length [`Embedder::dim`].
    fn embed(&self, text: &str) -> Vec<f32>;
}

fn term_seed(term: &str) -> u64 {
    let fp = Fingerprint::of(term.as_bytes());
    u64::from_le_bytes(fp.0[..8].try_into().unwrap())
}

/// Sublinear TF-IDF composed with a seeded sign projection to `d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEmbedder {
    d_model: usize,
    seed: u64,
    n_docs: u64,
    /// term -> (document frequency, idf)
    idf: HashMap<String, (u64, f64)>,
    fingerprint: Fingerprint,
}

impl TfIdfEmbedder {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, d_model: usize, seed: u64) -> Result<Self, DenseError> {
        if d_model < 8 {
            return Err(DenseError::BadDimension(d_model));
        }
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        let mut n = 0u64;
        for t in texts {
            n += 1;
            let distinct: HashSet<String> = terms(t).into_iter().collect();
            for w in distinct {
                *df.entry(w).or_default() += 1;
            }
        }
        if n == 0 {
            return Err(DenseError::EmptyCorpus);
        }
        Ok(Self::from_df(df, n, d_model, seed))
    }

    fn from_df(df: BTreeMap<String, u64>, n_docs: u64, d_model: usize, seed: u64) -> Self {
        let mut h = FingerprintHasher::new();
        h.bytes(b"tfidf-proj").u64(seed).u64(d_model as u64).u64(n_docs);
        let mut idf = HashMap::with_capacity(df.len());
        for (w, c) in df {
            let v = Self::idf_of(n_docs, c);
            h.bytes(w.as_bytes()).f64(v);
            idf.insert(w, (c, v));
        }
        TfIdfEmbedder {
            d_model,
            seed,
            n_docs,
            idf,
            fingerprint: h.finish(),
        }
    }

    /// Smoothed `ln((N + 1) / (df + 1)) + 1`; unseen terms get df = 0.
    fn idf_of(n_docs: u64, df: u64) -> f64 {
        ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_len(&self) -> usize {
        self.idf.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        self.idf
            .get(term)
            .map_or_else(|| Self::idf_of(self.n_docs, 0), |e| e.1)
    }

    fn project(&self, term: &str, weight: f64, acc: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ term_seed(term));
        let mut bits = 0u64;
        for (j, a) in acc.iter_mut().enumerate() {
            if j % 64 == 0 {
                bits = rng.random();
            }
            if (bits >> (j % 64)) & 1 == 1 {
                *a += weight;
            } else {
                *a -= weight;
            }
        }
    }

    /// Serialized embedder state: the idf table and projection seed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(EMB_MAGIC, VERSION);
        w.u64(self.seed);
        w.u64(self.d_model as u64);
        w.u64(self.n_docs);
        let mut entries: Vec<(&String, u64)> = self.idf.iter().map(|(t, e)| (t, e.0)).collect();
        entries.sort();
        w.u64(entries.len() as u64);
        for (t, _) in &entries {
            w.str(t);
        }
        for (_, df) in &entries {
            w.u64(*df);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DenseError> {
        let mut r = ByteReader::open(bytes, EMB_MAGIC, VERSION)?;
        let seed = r.u64()?;
        let d_model = r.u64()? as usize;
        let n_docs = r.u64()?;
        let n = r.u64()? as usize;
        let mut names = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            names.push(r.str()?);
        }
        let mut df = BTreeMap::new();
        for name in names {
            df.insert(name, r.u64()?);
        }
        r.finish()?;
        if d_model < 8 {
            return Err(DenseError::BadDimension(d_model));
        }
        Ok(Self::from_df(df, n_docs, d_model, seed))
    }
}

impl Embedder for TfIdfEmbedder {
    fn dim(&self) -> usize {
        self.d_model
    }

    fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for w in terms(text) {
            *tf.entry(w).or_default() += 1;
        }
        let mut acc = vec![0.0f64; self.d_model];
        for (w, c) in &tf {
            let weight = (1.0 + f64::from(*c).ln()) * self.idf(w);
            self.project(w, weight, &mut acc);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; self.d_model]
        }
    }
}

/// Exhaustive inner-product index.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatVectorIndex {
    embedder_fingerprint: Fingerprint,
    dim: usize,
    doc_ids: Vec<String>,
    vectors: Vec<f32>,
    /// Wall-clock seconds spent embedding the rows of this index.
    pub embed_seconds: f64,
}

/// Ranked hits with the multiply-add count spent scoring them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHits {
    pub hits: Vec<(String, f32)>,
    pub flops: u64,
}

fn embed_rows(embedder: &dyn Embedder, docs: &[Document], with_timestamp: bool) -> Vec<f32> {
    let mut out = Vec::with_capacity(docs.len() * embedder.dim());
    for d in docs {
        out.extend(embedder.embed(&d.indexed_text(with_timestamp)));
    }
    out
}

/// Embeds every document (date-prefixed unless disabled) into a new index.
pub fn embed_corpus(embedder: &dyn Embedder, docs: &[Document], with_timestamp: bool) -> Result<FlatVectorIndex, DenseError> {
    let mut seen = HashSet::new();
    if let Some(d) = docs.iter().find(|d| !seen.insert(d.doc_id.as_str())) {
        return Err(DenseError::DuplicateDoc(d.doc_id.clone()));
    }
    let t = Instant::now();
    let vectors = embed_rows(embedder, docs, with_timestamp);
    Ok(FlatVectorIndex {
        embedder_fingerprint: embedder.fingerprint(),
        dim: embedder.dim(),
        doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
        vectors,
        embed_seconds: t.elapsed().as_secs_f64(),
    })
}

impl FlatVectorIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embedder_fingerprint(&self) -> Fingerprint {
        self.embedder_fingerprint
    }

    fn check(&self, embedder: &dyn Embedder) -> Result<(), DenseError> {
        if embedder.fingerprint() != self.embedder_fingerprint || embedder.dim() != self.dim {
            return Err(DenseError::StaleIndex {
                index: self.embedder_fingerprint,
                embedder: embedder.fingerprint(),
            });
        }
        Ok(())
    }

    /// Scores the query against every row; top `k` by score, ties by doc id.
    pub fn search(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<DenseHits, DenseError> {
        self.check(embedder)?;
        if k < 1 {
            return Err(DenseError::InvalidK(k));
        }
        let q = embedder.embed(query);
        let d = self.dim;
        let mut scored: Vec<(f32, usize)> = Vec::with_capacity(self.len());
        let mut flops = 0u64;
        for i in 0..self.len() {
            let row = self.row(i);
            let mut s = row[0] * q[0];
            for j in 1..d {
                s += row[j] * q[j];
            }
            flops += (2 * d - 1) as u64;
            scored.push((s, i));
        }
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.doc_ids[a.1].cmp(&self.doc_ids[b.1]))
        });
        scored.truncate(k);
        Ok(DenseHits {
            hits: scored
                .into_iter()
                .map(|(s, i)| (self.doc_ids[i].clone(), s))
                .collect(),
            flops,
        })
    }

    /// New index with `docs` embedded by the unchanged embedder and appended.
    pub fn append_vectors(&self, embedder: &dyn Embedder, docs: &[Document], with_timestamp: bool) -> Result<FlatVectorIndex, DenseError> {
        self.check(embedder)?;
        let mut seen: HashSet<&str> = self.doc_ids.iter().map(String::as_str).collect();
        if let Some(d) = docs.iter().find(|d| !seen.insert(d.doc_id.as_str())) {
            return Err(DenseError::DuplicateDoc(d.doc_id.clone()));
        }
        let t = Instant::now();
        let rows = embed_rows(embedder, docs, with_timestamp);
        let mut next = self.clone();
        next.vectors.extend(rows);
        next.doc_ids.extend(docs.iter().map(|d| d.doc_id.clone()));
        next.embed_seconds = self.embed_seconds + t.elapsed().as_secs_f64();
        Ok(next)
    }

    /// File size implied by the format: header, id table, f32 matrix, CRC.
    pub fn analytic_size(&self) -> u64 {
        let header = 8 + 4 + 32 + 4 + 4;
        let ids: usize = self.doc_ids.iter().map(|s| 4 + s.len()).sum();
        (header + ids + self.vectors.len() * 4 + 8) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.raw(&self.embedder_fingerprint.0);
        w.u32(self.doc_ids.len() as u32);
        w.u32(self.dim as u32);
        for id in &self.doc_ids {
            w.str(id);
        }
        w.f32_slice_raw(&self.vectors);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DenseError> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let embedder_fingerprint = r.fingerprint()?;
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut doc_ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            doc_ids.push(r.str()?);
        }
        let vectors = r.f32_vec_raw(n * dim)?;
        r.finish()?;
        Ok(FlatVectorIndex {
            embedder_fingerprint,
            dim,
            doc_ids,
            vectors,
            embed_seconds: 0.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<u64, DenseError> {
        Ok(write_atomic(path, &self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, DenseError> {
        let bytes = std::fs::read(path).map_err(FormatError::from)?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseConfig {
    pub d_model: usize,
    pub seed: u64,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig { d_model: 256, seed: 42 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_cutover, ymd};

    fn docs(n: usize, offset: usize) -> Vec<Document> {
        let words = ["market", "storm", "vaccine", "election", "stadium", "bridge", "river", "court", "budget", "school"];
        (0..n)
            .map(|i| {
                let j = i + offset;
                let text = format!(
                    "{} {} report number {} on the {}",
                    words[j % 10],
                    words[(j / 10) % 10],
                    j,
                    words[(j * 7) % 10]
                );
                Document::new(format!("doc{j:04}"), text, ymd(2019, 1 + (j % 12) as u32, 1 + (j % 27) as u32), default_cutover())
            })
            .collect()
    }

    fn fit(d: &[Document]) -> TfIdfEmbedder {
        let texts: Vec<String> = d.iter().map(|x| x.indexed_text(true)).collect();
        TfIdfEmbedder::fit(texts.iter().map(String::as_str), 64, 42).unwrap()
    }

    #[test]
    fn fit_is_deterministic_and_normalized() {
        let d = docs(100, 0);
        let a = fit(&d);
        let b = fit(&d);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let v = a.embed(&d[3].indexed_text(true));
        let self_sim: f32 = v.iter().map(|x| x * x).sum();
        assert!((self_sim - 1.0).abs() < 1e-6);
        let mut more = d.clone();
        more.extend(docs(10, 100));
        assert_ne!(fit(&more).fingerprint(), a.fingerprint());
        assert!(matches!(TfIdfEmbedder::fit(["x"], 4, 1), Err(DenseError::BadDimension(4))));
        assert!(matches!(TfIdfEmbedder::fit([], 8, 1), Err(DenseError::EmptyCorpus)));
    }

    #[test]
    fn search_and_staleness() {
        let d = docs(100, 0);
        let e = fit(&d);
        let idx = embed_corpus(&e, &d, true).unwrap();
        assert_eq!(idx.len(), 100);
        assert_eq!(idx.vectors.len(), 100 * 64);
        assert!(idx.embed_seconds > 0.0);
        let again = embed_corpus(&e, &d, true).unwrap();
        assert_eq!(again.to_bytes(), idx.to_bytes());

        let hits = idx.search(&e, &d[17].indexed_text(true), 5).unwrap();
        assert_eq!(hits.hits[0].0, d[17].doc_id);
        assert_eq!(hits.flops, 100 * (2 * 64 - 1));
        assert_eq!(idx.search(&e, "market", 1000).unwrap().hits.len(), 100);

        let refit = fit(&docs(120, 0));
        assert!(matches!(idx.search(&refit, "market", 5), Err(DenseError::StaleIndex { .. })));
        assert!(matches!(
            idx.append_vectors(&refit, &docs(5, 200), true),
            Err(DenseError::StaleIndex { .. })
        ));
    }

    #[test]
    fn append_matches_rebuild() {
        let all = docs(60, 0);
        let e = fit(&all);
        let base = embed_corpus(&e, &all[..40], true).unwrap();
        assert_eq!(base.append_vectors(&e, &[], true).unwrap().to_bytes(), base.to_bytes());
        let appended = base.append_vectors(&e, &all[40..], true).unwrap();
        let rebuilt = embed_corpus(&e, &all, true).unwrap();
        for q in ["storm bridge", "vaccine court report", "budget", "number 45"] {
            assert_eq!(appended.search(&e, q, 10).unwrap(), rebuilt.search(&e, q, 10).unwrap());
        }
        assert!(matches!(
            base.append_vectors(&e, &all[..1], true),
            Err(DenseError::DuplicateDoc(_))
        ));
    }

    #[test]
    fn file_size_is_analytic() {
        let d = docs(30, 0);
        let e = fit(&d);
        let idx = embed_corpus(&e, &d, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let written = idx.save(&p).unwrap();
        assert_eq!(written, idx.analytic_size());
        assert_eq!(std::fs::metadata(&p).unwrap().len(), idx.analytic_size());
        let back = FlatVectorIndex::load(&p).unwrap();
        assert_eq!(back.doc_ids, idx.doc_ids);
        assert_eq!(back.vectors, idx.vectors);

        let eb = TfIdfEmbedder::from_bytes(&e.to_bytes()).unwrap();
        assert_eq!(eb.fingerprint(), e.fingerprint());
    }
}
