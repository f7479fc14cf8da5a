use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::container::{write_atomic, FormatError};
use crate::corpus::{Document, Query, Vocabulary};
use crate::dense_retriever::{embed_corpus, DenseConfig, Embedder, FlatVectorIndex, TfIdfEmbedder};
use crate::dp_analysis::DPReport;
use crate::efficiency::{timed, ArtifactSize, IndexEvent, IndexEventKind};
use crate::error::{Error, Result};
use crate::fm_index::{FMIndexShard, ShardConfig, ShardedIndex, StreamDoc};
use crate::gen_retriever::{build_identifier_stream, retrieve, GenConfig, IdentifierMode, NgramScorer, Scorer, UpdateMode};
use crate::sparse_retriever::{Bm25Index, Bm25Params};

use super::HarnessError;

/// A retrieval system the scenario runner can drive.
pub trait Retriever: Send + Sync {
    fn name(&self) -> String;

    /// Label for how `search` finds candidates, when latency needs one.
    fn search_method(&self) -> Option<&'static str> {
        None
    }

    /// Indexes the initial corpus (and trains any model on it).
    fn build(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>>;

    /// Adds a corpus to the index without touching model parameters.
    fn update_index(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>>;

    /// Updates model parameters on a corpus, re-indexing if the model change
    /// invalidates the index.
    fn update_model(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>>;

    /// Ranked doc ids, best first.
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>>;

    /// Number of completed `update_model` calls.
    fn model_updates(&self) -> usize;

    /// Serialized size of every artifact the retriever needs at query time.
    fn storage(&self) -> Result<Vec<ArtifactSize>>;

    fn fingerprints(&self) -> BTreeMap<String, String>;

    /// Writes artifacts under `dir`.
    fn save(&self, dir: &Path) -> Result<Vec<ArtifactSize>>;

    /// Loads the artifacts written by `save` into a ready-to-query retriever.
    fn load(&self, dir: &Path) -> Result<Box<dyn Retriever>>;

    /// Replaces this retriever's state with the artifacts under `dir`,
    /// keeping its configuration. `indexed` are the documents those artifacts
    /// cover; retrievers that refit or rebuild from raw text keep them.
    fn restore(&mut self, dir: &Path, indexed: &[Document]) -> Result<()>;

    /// Analytic search-side FLOPs per query where the retriever counts them.
    fn search_flops(&self) -> Option<u64> {
        None
    }

    fn indexed_docs(&self) -> usize;
}

fn not_built() -> Error {
    HarnessError::NotBuilt.into()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FormatError::from(e).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrOptions {
    pub gen: GenConfig,
    pub mode: IdentifierMode,
    pub update_mode: UpdateMode,
    pub with_timestamp: bool,
    /// Rebuild a single shard on every index update instead of appending.
    pub rebuild: bool,
}

impl Default for GrOptions {
    fn default() -> Self {
        GrOptions {
            gen: GenConfig::default(),
            mode: IdentifierMode::Span,
            update_mode: UpdateMode::Merge,
            with_timestamp: true,
            rebuild: false,
        }
    }
}

/// Generative retriever over a sharded FM-index with an n-gram scorer.
#[derive(Clone)]
pub struct GrRetriever {
    vocab: Arc<Vocabulary>,
    opts: GrOptions,
    pseudo: Vec<Query>,
    titles: Option<HashMap<String, String>>,
    index: Option<ShardedIndex>,
    scorer: Option<Arc<NgramScorer>>,
    streams: Vec<StreamDoc>,
    model_updates: usize,
    last_dp: Option<DPReport>,
}

impl GrRetriever {
    /// `vocab` must cover every corpus slice that will be indexed.
    pub fn new(vocab: Arc<Vocabulary>, opts: GrOptions) -> Self {
        GrRetriever {
            vocab,
            opts,
            pseudo: Vec::new(),
            titles: None,
            index: None,
            scorer: None,
            streams: Vec::new(),
            model_updates: 0,
            last_dp: None,
        }
    }

    /// Pseudo-queries and titles used as extra identifiers in MultiView mode.
    pub fn with_views(mut self, pseudo: Vec<Query>, titles: Option<HashMap<String, String>>) -> Self {
        self.pseudo = pseudo;
        self.titles = titles;
        self
    }

    pub fn from_parts(vocab: Arc<Vocabulary>, opts: GrOptions, index: ShardedIndex, scorer: NgramScorer) -> Self {
        let mut r = Self::new(vocab, opts);
        r.index = Some(index);
        r.scorer = Some(Arc::new(scorer));
        r
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn index(&self) -> Option<&ShardedIndex> {
        self.index.as_ref()
    }

    pub fn scorer(&self) -> Option<&Arc<NgramScorer>> {
        self.scorer.as_ref()
    }

    pub fn last_dp_report(&self) -> Option<&DPReport> {
        self.last_dp.as_ref()
    }

    fn streams_for(&self, docs: &[Document]) -> Result<Vec<StreamDoc>> {
        let ids: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        let pseudo: Vec<Query> = self
            .pseudo
            .iter()
            .filter(|q| !q.gold_doc_ids.is_empty() && q.gold_doc_ids.iter().all(|g| ids.contains(g.as_str())))
            .cloned()
            .collect();
        let titles = self.titles.as_ref().map(|t| {
            t.iter()
                .filter(|(id, _)| ids.contains(id.as_str()))
                .map(|(a, b)| (a.clone(), b.clone()))
                .collect::<HashMap<_, _>>()
        });
        Ok(build_identifier_stream(
            docs,
            &pseudo,
            titles.as_ref(),
            self.opts.mode,
            &self.vocab,
            self.opts.with_timestamp,
        )?)
    }

    fn build_shard(&self, streams: &[StreamDoc], shard_id: u32) -> Result<FMIndexShard> {
        let cfg = ShardConfig {
            shard_id,
            ..ShardConfig::default()
        };
        Ok(FMIndexShard::build_with(streams, &self.vocab, cfg)?)
    }
}

impl Retriever for GrRetriever {
    fn name(&self) -> String {
        match self.opts.mode {
            IdentifierMode::Span => "gr-span".into(),
            IdentifierMode::MultiView => "gr-multiview".into(),
        }
    }

    fn build(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let streams = self.streams_for(docs)?;
        let (shard, secs) = timed(|| self.build_shard(&streams, 0));
        let (scorer, train_secs) = timed(|| NgramScorer::train(&streams, &self.vocab));
        self.index = Some(ShardedIndex::from_shard(shard?));
        self.scorer = Some(Arc::new(scorer?));
        self.streams = streams;
        Ok(vec![
            IndexEvent {
                kind: IndexEventKind::FullBuild,
                docs: docs.len(),
                seconds: secs,
            },
            IndexEvent {
                kind: IndexEventKind::ModelUpdate,
                docs: docs.len(),
                seconds: train_secs,
            },
        ])
    }

    fn update_index(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        let streams = self.streams_for(docs)?;
        if self.opts.rebuild {
            let mut all = self.streams.clone();
            all.extend(streams);
            let (shard, secs) = timed(|| self.build_shard(&all, 0));
            self.index = Some(ShardedIndex::from_shard(shard?));
            self.streams = all;
            return Ok(vec![IndexEvent {
                kind: IndexEventKind::FullBuild,
                docs: self.streams.len(),
                seconds: secs,
            }]);
        }
        let shard_id = index.shards().len() as u32;
        let (next, secs) = timed(|| -> Result<ShardedIndex> {
            let shard = self.build_shard(&streams, shard_id)?;
            Ok(index.add_shard(shard)?)
        });
        self.index = Some(next?);
        self.streams.extend(streams);
        Ok(vec![IndexEvent {
            kind: IndexEventKind::Append,
            docs: docs.len(),
            seconds: secs,
        }])
    }

    fn update_model(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let scorer = self.scorer.as_ref().ok_or_else(not_built)?;
        let streams = self.streams_for(docs)?;
        let (up, secs) = timed(|| scorer.update(&streams, self.opts.update_mode));
        let up = up?;
        self.scorer = Some(Arc::new(up.scorer));
        self.last_dp = up.dp_report;
        self.model_updates += 1;
        Ok(vec![IndexEvent {
            kind: IndexEventKind::ModelUpdate,
            docs: docs.len(),
            seconds: secs,
        }])
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let scorer = self.scorer.as_ref().ok_or_else(not_built)?;
        let (_, docs) = retrieve(query, &self.vocab, index, scorer.as_ref(), &self.opts.gen, k)?;
        Ok(docs.into_iter().map(|d| d.doc_id).collect())
    }

    fn model_updates(&self) -> usize {
        self.model_updates
    }

    fn storage(&self) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let scorer = self.scorer.as_ref().ok_or_else(not_built)?;
        let mut out: Vec<ArtifactSize> = index
            .shards()
            .iter()
            .enumerate()
            .map(|(i, s)| ArtifactSize {
                name: format!("shard{i}.fmi"),
                bytes: s.to_bytes().len() as u64,
            })
            .collect();
        out.push(ArtifactSize {
            name: "scorer.ngm".into(),
            bytes: scorer.to_bytes().len() as u64,
        });
        out.push(ArtifactSize {
            name: "vocab.json".into(),
            bytes: self.vocab.to_json().len() as u64,
        });
        Ok(out)
    }

    fn fingerprints(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("vocab".into(), self.vocab.fingerprint().hex());
        if let Some(s) = &self.scorer {
            m.insert("scorer".into(), s.fingerprint().hex());
        }
        m
    }

    fn save(&self, dir: &Path) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let scorer = self.scorer.as_ref().ok_or_else(not_built)?;
        fs::create_dir_all(dir).map_err(FormatError::from)?;
        let mut out = Vec::new();
        for (i, s) in index.shards().iter().enumerate() {
            let name = format!("shard{i}.fmi");
            let bytes = s.serialize(&dir.join(&name))?;
            out.push(ArtifactSize { name, bytes });
        }
        for i in index.shards().len().. {
            let stale = dir.join(format!("shard{i}.fmi"));
            if !stale.exists() {
                break;
            }
            fs::remove_file(stale).map_err(FormatError::from)?;
        }
        out.push(ArtifactSize {
            name: "scorer.ngm".into(),
            bytes: scorer.save(&dir.join("scorer.ngm"))?,
        });
        out.push(ArtifactSize {
            name: "vocab.json".into(),
            bytes: write_atomic(&dir.join("vocab.json"), self.vocab.to_json().as_bytes())?,
        });
        Ok(out)
    }

    fn load(&self, dir: &Path) -> Result<Box<dyn Retriever>> {
        let (vocab, index, scorer) = load_gr_parts(dir)?;
        Ok(Box::new(GrRetriever::from_parts(Arc::new(vocab), self.opts, index, scorer)))
    }

    fn restore(&mut self, dir: &Path, indexed: &[Document]) -> Result<()> {
        let (vocab, index, scorer) = load_gr_parts(dir)?;
        self.vocab = Arc::new(vocab);
        self.index = Some(index);
        self.scorer = Some(Arc::new(scorer));
        self.streams = self.streams_for(indexed)?;
        self.last_dp = None;
        Ok(())
    }

    fn indexed_docs(&self) -> usize {
        self.index.as_ref().map_or(0, ShardedIndex::doc_count)
    }
}

fn load_gr_parts(dir: &Path) -> Result<(Vocabulary, ShardedIndex, NgramScorer)> {
    let vocab = Vocabulary::from_json(&String::from_utf8_lossy(&read(&dir.join("vocab.json"))?))?;
    let mut index = ShardedIndex::new(vocab.fingerprint());
    for i in 0.. {
        let p = dir.join(format!("shard{i}.fmi"));
        if !p.exists() {
            break;
        }
        index = index.add_shard(FMIndexShard::deserialize(&p)?)?;
    }
    let scorer = NgramScorer::load(&dir.join("scorer.ngm"))?;
    Ok((vocab, index, scorer))
}

/// TF-IDF projection embedder over a flat inner-product index.
#[derive(Clone)]
pub struct DeRetriever {
    cfg: DenseConfig,
    with_timestamp: bool,
    embedder: Option<Arc<TfIdfEmbedder>>,
    index: Option<FlatVectorIndex>,
    docs: Vec<Document>,
    model_updates: usize,
}

impl DeRetriever {
    pub fn new(cfg: DenseConfig, with_timestamp: bool) -> Self {
        DeRetriever {
            cfg,
            with_timestamp,
            embedder: None,
            index: None,
            docs: Vec::new(),
            model_updates: 0,
        }
    }

    pub fn embedder(&self) -> Option<&Arc<TfIdfEmbedder>> {
        self.embedder.as_ref()
    }

    pub fn index(&self) -> Option<&FlatVectorIndex> {
        self.index.as_ref()
    }

    fn fit(&self, docs: &[Document]) -> Result<TfIdfEmbedder> {
        let texts: Vec<String> = docs.iter().map(|d| d.indexed_text(self.with_timestamp)).collect();
        Ok(TfIdfEmbedder::fit(
            texts.iter().map(String::as_str),
            self.cfg.d_model,
            self.cfg.seed,
        )?)
    }
}

impl Retriever for DeRetriever {
    fn name(&self) -> String {
        "de".into()
    }

    fn search_method(&self) -> Option<&'static str> {
        Some("flat-exhaustive")
    }

    fn build(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let (e, train_secs) = timed(|| self.fit(docs));
        let e = e?;
        let index = embed_corpus(&e, docs, self.with_timestamp)?;
        let secs = index.embed_seconds;
        self.embedder = Some(Arc::new(e));
        self.index = Some(index);
        self.docs = docs.to_vec();
        Ok(vec![
            IndexEvent {
                kind: IndexEventKind::ModelUpdate,
                docs: docs.len(),
                seconds: train_secs,
            },
            IndexEvent {
                kind: IndexEventKind::FullBuild,
                docs: docs.len(),
                seconds: secs,
            },
        ])
    }

    fn update_index(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let e = self.embedder.as_ref().ok_or_else(not_built)?;
        let before = index.embed_seconds;
        let next = index.append_vectors(e.as_ref(), docs, self.with_timestamp)?;
        let secs = next.embed_seconds - before;
        self.index = Some(next);
        self.docs.extend_from_slice(docs);
        Ok(vec![IndexEvent {
            kind: IndexEventKind::Append,
            docs: docs.len(),
            seconds: secs,
        }])
    }

    /// Refits on everything seen so far plus `docs`. The old index no longer
    /// matches the embedder, so the whole corpus is embedded again.
    fn update_model(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        self.index.as_ref().ok_or_else(not_built)?;
        let mut all = self.docs.clone();
        let seen: BTreeSet<String> = all.iter().map(|d| d.doc_id.clone()).collect();
        all.extend(docs.iter().filter(|d| !seen.contains(&d.doc_id)).cloned());
        let (e, train_secs) = timed(|| self.fit(&all));
        let e = e?;
        let index = embed_corpus(&e, &self.docs, self.with_timestamp)?;
        let secs = index.embed_seconds;
        self.embedder = Some(Arc::new(e));
        self.index = Some(index);
        self.model_updates += 1;
        Ok(vec![
            IndexEvent {
                kind: IndexEventKind::ModelUpdate,
                docs: all.len(),
                seconds: train_secs,
            },
            IndexEvent {
                kind: IndexEventKind::ModelForcedReindex,
                docs: self.docs.len(),
                seconds: secs,
            },
        ])
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let e = self.embedder.as_ref().ok_or_else(not_built)?;
        Ok(index
            .search(e.as_ref(), query, k)?
            .hits
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    }

    fn model_updates(&self) -> usize {
        self.model_updates
    }

    fn storage(&self) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let e = self.embedder.as_ref().ok_or_else(not_built)?;
        Ok(vec![
            ArtifactSize {
                name: "vectors.vec".into(),
                bytes: index.analytic_size(),
            },
            ArtifactSize {
                name: "embedder.emb".into(),
                bytes: e.to_bytes().len() as u64,
            },
        ])
    }

    fn fingerprints(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        if let Some(e) = &self.embedder {
            m.insert("embedder".into(), e.fingerprint().hex());
        }
        if let Some(i) = &self.index {
            m.insert("vector_index".into(), i.embedder_fingerprint().hex());
        }
        m
    }

    fn save(&self, dir: &Path) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let e = self.embedder.as_ref().ok_or_else(not_built)?;
        fs::create_dir_all(dir).map_err(FormatError::from)?;
        Ok(vec![
            ArtifactSize {
                name: "vectors.vec".into(),
                bytes: index.save(&dir.join("vectors.vec"))?,
            },
            ArtifactSize {
                name: "embedder.emb".into(),
                bytes: write_atomic(&dir.join("embedder.emb"), &e.to_bytes())?,
            },
        ])
    }

    fn load(&self, dir: &Path) -> Result<Box<dyn Retriever>> {
        let mut r = DeRetriever::new(self.cfg, self.with_timestamp);
        r.restore(dir, &[])?;
        Ok(Box::new(r))
    }

    fn restore(&mut self, dir: &Path, indexed: &[Document]) -> Result<()> {
        let index = FlatVectorIndex::load(&dir.join("vectors.vec"))?;
        let e = TfIdfEmbedder::from_bytes(&read(&dir.join("embedder.emb"))?)?;
        self.embedder = Some(Arc::new(e));
        self.index = Some(index);
        self.docs = indexed.to_vec();
        Ok(())
    }

    fn search_flops(&self) -> Option<u64> {
        self.index
            .as_ref()
            .map(|i| i.len() as u64 * (2 * i.dim() as u64 - 1))
    }

    fn indexed_docs(&self) -> usize {
        self.index.as_ref().map_or(0, FlatVectorIndex::len)
    }
}

/// BM25 baseline. It has no model, so `update_model` only counts the call.
#[derive(Clone)]
pub struct Bm25Retriever {
    params: Bm25Params,
    with_timestamp: bool,
    index: Option<Bm25Index>,
    model_updates: usize,
}

impl Bm25Retriever {
    pub fn new(params: Bm25Params, with_timestamp: bool) -> Self {
        Bm25Retriever {
            params,
            with_timestamp,
            index: None,
            model_updates: 0,
        }
    }

    pub fn index(&self) -> Option<&Bm25Index> {
        self.index.as_ref()
    }
}

impl Retriever for Bm25Retriever {
    fn name(&self) -> String {
        "bm25".into()
    }

    fn build(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let (idx, secs) = timed(|| Bm25Index::build(docs, self.params, self.with_timestamp));
        self.index = Some(idx);
        Ok(vec![IndexEvent {
            kind: IndexEventKind::FullBuild,
            docs: docs.len(),
            seconds: secs,
        }])
    }

    fn update_index(&mut self, docs: &[Document]) -> Result<Vec<IndexEvent>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        let (next, secs) = timed(|| index.extend(docs, self.with_timestamp));
        self.index = Some(next);
        Ok(vec![IndexEvent {
            kind: IndexEventKind::Append,
            docs: docs.len(),
            seconds: secs,
        }])
    }

    fn update_model(&mut self, _docs: &[Document]) -> Result<Vec<IndexEvent>> {
        self.model_updates += 1;
        Ok(Vec::new())
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        Ok(index.search(query, k).into_iter().map(|(id, _)| id).collect())
    }

    fn model_updates(&self) -> usize {
        self.model_updates
    }

    fn storage(&self) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        Ok(vec![ArtifactSize {
            name: "bm25.idx".into(),
            bytes: index.to_bytes().len() as u64,
        }])
    }

    fn fingerprints(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    fn save(&self, dir: &Path) -> Result<Vec<ArtifactSize>> {
        let index = self.index.as_ref().ok_or_else(not_built)?;
        fs::create_dir_all(dir).map_err(FormatError::from)?;
        Ok(vec![ArtifactSize {
            name: "bm25.idx".into(),
            bytes: write_atomic(&dir.join("bm25.idx"), &index.to_bytes())?,
        }])
    }

    fn load(&self, dir: &Path) -> Result<Box<dyn Retriever>> {
        let mut r = Bm25Retriever::new(self.params, self.with_timestamp);
        r.restore(dir, &[])?;
        Ok(Box::new(r))
    }

    fn restore(&mut self, dir: &Path, _indexed: &[Document]) -> Result<()> {
        self.index = Some(Bm25Index::from_bytes(&read(&dir.join("bm25.idx"))?)?);
        Ok(())
    }

    fn indexed_docs(&self) -> usize {
        self.index.as_ref().map_or(0, Bm25Index::len)
    }
}
