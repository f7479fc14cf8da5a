//! Retriever construction from flags, input loading and the artifact
//! manifest shared by the index-lifecycle subcommands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dynir_core::container::FingerprintHasher;
use dynir_core::corpus::{load_corpus, load_queries, Document, Query, Split};
use dynir_core::dense_retriever::DenseConfig;
use dynir_core::dp_analysis::DPReport;
use dynir_core::gen_retriever::{BeamConfig, GenConfig, IdentifierMode, UpdateMode};
use dynir_core::harness::{scenario_vocabulary, Bm25Retriever, Corpora, DeRetriever, GrOptions, GrRetriever, Retriever};
use dynir_core::sparse_retriever::Bm25Params;

use crate::error::{CliError, Res};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrieverKind {
    GrSpan,
    GrMultiview,
    De,
    Bm25,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateModeArg {
    Merge,
    FfnTargeted,
}

/// Settings shared by every retriever kind.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Tuning {
    /// Beam size B for generative retrieval.
    #[arg(short = 'B', long = "beam", default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub beam: u32,
    /// Maximum identifier length L for generative retrieval.
    #[arg(short = 'L', long = "max-len", default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_len: u32,
    /// Occurrences located per generated identifier.
    #[arg(long, default_value_t = 1000)]
    pub locate_limit: usize,
    /// How a generative retriever's scorer absorbs a new corpus.
    #[arg(long, value_enum, default_value = "merge")]
    pub update_mode: UpdateModeArg,
    /// Rebuild one shard on every index update instead of appending.
    #[arg(long)]
    pub rebuild: bool,
    /// Embedding width for the dense retriever.
    #[arg(long, default_value_t = 256)]
    pub d_model: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long = "bm25-b", default_value_t = 0.4)]
    pub bm25_b: f64,
    /// Index documents without their date prefix.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Pseudo-query JSONL keyed to documents by gold_ids (multiview).
    #[arg(long)]
    pub pseudo: Option<PathBuf>,
    /// JSON object mapping doc ids to titles (multiview, optional).
    #[arg(long)]
    pub titles: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RetrieverArgs {
    #[arg(short, long, value_enum, default_value = "gr-span")]
    pub retriever: RetrieverKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub tuning: Tuning,
}

impl RetrieverArgs {
    pub fn validate(&self) -> Result<(), String> {
        if self.retriever == RetrieverKind::GrMultiview && self.tuning.pseudo.is_none() {
            return Err("--retriever gr-multiview requires --pseudo".into());
        }
        if self.tuning.titles.is_some() && self.retriever != RetrieverKind::GrMultiview {
            return Err("--titles only applies to --retriever gr-multiview".into());
        }
        Ok(())
    }

    pub fn config_json(&self) -> String {
        serde_json::to_string(self).expect("settings serialize")
    }
}

/// A concrete retriever, kept concrete so kind-specific results (such as a
/// scorer update's dynamic-parameter report) stay reachable.
pub enum Engine {
    Gr(GrRetriever),
    De(DeRetriever),
    Bm25(Bm25Retriever),
}

impl Engine {
    pub fn as_dyn(&self) -> &dyn Retriever {
        match self {
            Engine::Gr(r) => r,
            Engine::De(r) => r,
            Engine::Bm25(r) => r,
        }
    }

    pub fn as_dyn_mut(&mut self) -> &mut dyn Retriever {
        match self {
            Engine::Gr(r) => r,
            Engine::De(r) => r,
            Engine::Bm25(r) => r,
        }
    }

    pub fn dp_report(&self) -> Option<&DPReport> {
        match self {
            Engine::Gr(r) => r.last_dp_report(),
            _ => None,
        }
    }
}

/// Extra identifier views for multiview generative retrieval.
#[derive(Default)]
pub struct Views {
    pub pseudo: Vec<Query>,
    pub titles: Option<HashMap<String, String>>,
}

pub fn load_views(tuning: &Tuning) -> Res<Views> {
    let pseudo = match &tuning.pseudo {
        Some(p) => load_queries(p, Split::Initial)?,
        None => Vec::new(),
    };
    let titles = match &tuning.titles {
        Some(p) => {
            let raw = read_file(p)?;
            Some(serde_json::from_slice(&raw).map_err(|e| CliError::Input {
                path: p.clone(),
                reason: e.to_string(),
            })?)
        }
        None => None,
    };
    Ok(Views { pseudo, titles })
}

/// Builds an unfitted retriever. Generative retrievers get a vocabulary
/// frozen over `vocab_docs` so later slices index into compatible shards.
pub fn make_engine(args: &RetrieverArgs, seed: u64, vocab_docs: &Corpora, views: Views) -> Engine {
    let t = &args.tuning;
    match args.retriever {
        RetrieverKind::GrSpan | RetrieverKind::GrMultiview => {
            let mode = if args.retriever == RetrieverKind::GrMultiview {
                IdentifierMode::MultiView
            } else {
                IdentifierMode::Span
            };
            let (pseudo, titles) = if mode == IdentifierMode::MultiView {
                (views.pseudo, views.titles)
            } else {
                (Vec::new(), None)
            };
            let vocab = scenario_vocabulary(vocab_docs, &pseudo, titles.as_ref());
            let opts = GrOptions {
                gen: GenConfig {
                    beam: BeamConfig {
                        beam_size: t.beam as usize,
                        max_len: t.max_len as usize,
                    },
                    locate_limit: t.locate_limit,
                },
                mode,
                update_mode: match t.update_mode {
                    UpdateModeArg::Merge => UpdateMode::Merge,
                    UpdateModeArg::FfnTargeted => UpdateMode::FfnTargeted,
                },
                with_timestamp: !t.no_timestamp,
                rebuild: t.rebuild,
            };
            Engine::Gr(GrRetriever::new(Arc::new(vocab), opts).with_views(pseudo, titles))
        }
        RetrieverKind::De => Engine::De(DeRetriever::new(
            DenseConfig {
                d_model: t.d_model,
                seed,
            },
            !t.no_timestamp,
        )),
        RetrieverKind::Bm25 => Engine::Bm25(Bm25Retriever::new(
            Bm25Params {
                k1: t.k1,
                b: t.bm25_b,
            },
            !t.no_timestamp,
        )),
    }
}

pub fn read_file(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Res<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_docs(path: &Path, cutover: NaiveDate) -> Res<Vec<Document>> {
    let (docs, stats) = load_corpus(path, cutover)?;
    log::info!(
        "{}: {} initial / {} new documents",
        path.display(),
        stats.initial.docs,
        stats.new.docs
    );
    Ok(docs)
}

pub fn split_corpus(docs: &[Document]) -> Corpora {
    let (initial, new) = dynir_core::corpus::partition(docs);
    Corpora { initial, new }
}

/// Hash of a document slice: ids, texts and dates in order.
pub fn docs_hash(h: &mut FingerprintHasher, docs: &[Document]) {
    for d in docs {
        h.bytes(d.doc_id.as_bytes())
            .bytes(d.text.as_bytes())
            .bytes(d.pub_date.to_string().as_bytes());
    }
    h.u64(docs.len() as u64);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub config_hash: String,
    pub docs: usize,
}

/// Written next to the artifacts; records how they were produced so later
/// steps rebuild an identical retriever and chain their config hashes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub settings: RetrieverArgs,
    pub seed: u64,
    pub cutover: NaiveDate,
    /// Every document covered by the artifacts, sorted.
    pub indexed: BTreeSet<String>,
    pub model_updates: usize,
    pub steps: Vec<Step>,
    pub fingerprints: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Res<Self> {
        let path = dir.join(MANIFEST);
        let raw = read_file(&path)?;
        serde_json::from_slice(&raw).map_err(|e| CliError::Input {
            path,
            reason: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Res<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join(MANIFEST), json.as_bytes())
    }

    pub fn last_hash(&self) -> Option<&str> {
        self.steps.last().map(|s| s.config_hash.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        args: RetrieverArgs,
    }

    fn parse(argv: &[&str]) -> RetrieverArgs {
        Wrap::parse_from(std::iter::once("x").chain(argv.iter().copied())).args
    }

    #[test]
    fn settings_roundtrip_through_the_manifest_encoding() {
        let a = parse(&["-r", "de", "--d-model", "64", "--no-timestamp"]);
        let back: RetrieverArgs = serde_json::from_str(&a.config_json()).unwrap();
        assert_eq!(back.config_json(), a.config_json());
        assert_eq!(back.retriever, RetrieverKind::De);
        assert_eq!(back.tuning.d_model, 64);
        assert!(back.tuning.no_timestamp);
    }

    #[test]
    fn multiview_needs_pseudo_queries() {
        assert!(parse(&["-r", "gr-multiview"]).validate().is_err());
        assert!(parse(&["-r", "gr-multiview", "--pseudo", "p.jsonl"]).validate().is_ok());
        assert!(parse(&["-r", "bm25", "--titles", "t.json"]).validate().is_err());
    }

    #[test]
    fn engines_carry_the_requested_settings() {
        let docs = Corpora::default();
        let gr = make_engine(&parse(&["-B", "4", "-L", "6"]), 42, &docs, Views::default());
        assert_eq!(gr.as_dyn().name(), "gr-span");
        let de = make_engine(&parse(&["-r", "de"]), 42, &docs, Views::default());
        assert_eq!(de.as_dyn().name(), "de");
        assert!(de.dp_report().is_none());
    }
}
