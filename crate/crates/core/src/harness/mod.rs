//! Update scenarios, evaluation metrics and run reports.

mod metrics;
mod retrievers;
pub mod synthetic;

pub use metrics::{answer_recall_at_k, hits_at_k, normalize_for_match, MetricTable};
pub use retrievers::{Bm25Retriever, DeRetriever, GrOptions, GrRetriever, Retriever};

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::container::FingerprintHasher;
use crate::corpus::{strip_timestamp, Document, Query, Vocabulary};
use crate::efficiency::{de_flops, gr_flops, measure_latency, CostModelConfig, FlopsMode, FlopsReport, IndexEventKind, IndexingReport};
use crate::error::{Error, Result};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario {scenario:?} needs the {set} evaluation set")]
    MissingEvalSet { scenario: Scenario, set: &'static str },
    #[error("query {0:?} has no gold documents")]
    EmptyGold(String),
    #[error("gold answers are empty")]
    EmptyAnswers,
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("retriever has not been built")]
    NotBuilt,
    #[error("{0}")]
    Config(String),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::MissingEvalSet { .. } => "HARNESS_MISSING_EVAL_SET",
            HarnessError::EmptyGold(_) => "HARNESS_EMPTY_GOLD",
            HarnessError::EmptyAnswers => "HARNESS_EMPTY_ANSWERS",
            HarnessError::InvalidK(_) => "HARNESS_INVALID_K",
            HarnessError::NotBuilt => "HARNESS_NOT_BUILT",
            HarnessError::Config(_) => "HARNESS_CONFIG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[serde(rename = "static")]
    StaticIR,
    IndexUpdate,
    TrainUpdate,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "static" | "static-ir" => Some(Scenario::StaticIR),
            "index-update" => Some(Scenario::IndexUpdate),
            "train-update" => Some(Scenario::TrainUpdate),
            _ => None,
        }
    }
}

pub const DEFAULT_KS: [usize; 4] = [5, 10, 50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ks: Vec<usize>,
    pub bias_ablation: bool,
    /// Cost model used for the FLOPs block; the corpus size is taken from
    /// the run.
    pub cost: Option<CostModelConfig>,
    /// When set, artifacts are written here and latency is measured by
    /// reloading them.
    #[serde(skip)]
    pub artifact_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            ks: DEFAULT_KS.to_vec(),
            bias_ablation: true,
            cost: None,
            artifact_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpora {
    pub initial: Vec<Document>,
    pub new: Vec<Document>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSets {
    pub q_initial: Vec<Query>,
    pub q_new: Option<Vec<Query>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_total: Option<MetricTable>,
    pub q_initial: MetricTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_new: Option<MetricTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_total_wo_bias: Option<MetricTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_initial_wo_bias: Option<MetricTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_new_wo_bias: Option<MetricTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub kind: IndexEventKind,
    pub docs: usize,
}

/// Deterministic cost figures: FLOPs, storage and the kinds of indexing
/// work performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBlock {
    pub flops: Option<FlopsReport>,
    pub measured_search_flops: Option<u64>,
    pub index_events: Vec<EventSummary>,
    pub forced_reindex: bool,
    pub storage_bytes: u64,
    pub artifacts: Vec<crate::efficiency::ArtifactSize>,
}

/// Wall-clock figures. Excluded from the report hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBlock {
    pub indexing_seconds: f64,
    pub event_seconds: Vec<f64>,
    pub eval_seconds: f64,
    pub t_online_median_s: Option<f64>,
    pub t_offline_s: Option<f64>,
    /// What the latency figures measured, e.g. exhaustive vector search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub fingerprints: BTreeMap<String, String>,
    pub model_updates: usize,
    pub docs_indexed: usize,
    pub eval_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub retriever: String,
    pub metrics: Metrics,
    pub efficiency: EfficiencyBlock,
    pub provenance: Provenance,
    pub report_hash: String,
    pub timing: TimingBlock,
}

impl RunReport {
    /// Hash over everything except the timing block.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.timing = TimingBlock::default();
        copy.report_hash = String::new();
        let json = serde_json::to_vec(&copy).expect("report serializes");
        let mut h = FingerprintHasher::new();
        h.bytes(&json);
        h.finish().hex()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Vocabulary over every slice a generative retriever may index: all
/// documents with their date prefixes, pseudo-queries and titles. It is
/// built once and frozen so shards over different slices stay compatible.
pub fn scenario_vocabulary(corpora: &Corpora, pseudo: &[Query], titles: Option<&HashMap<String, String>>) -> Vocabulary {
    let mut texts: Vec<String> = corpora
        .initial
        .iter()
        .chain(&corpora.new)
        .map(|d| d.indexed_text(true))
        .collect();
    texts.extend(pseudo.iter().map(Query::rendered));
    if let Some(t) = titles {
        let mut sorted: Vec<&String> = t.values().collect();
        sorted.sort();
        texts.extend(sorted.into_iter().cloned());
    }
    Vocabulary::from_texts(texts.iter().map(String::as_str))
}

/// Stable hash of the scenario inputs.
pub fn config_hash(scenario: Scenario, retriever: &str, retriever_cfg: &str, corpora: &Corpora, evals: &EvalSets, cfg: &ScenarioConfig) -> String {
    let mut h = FingerprintHasher::new();
    h.bytes(serde_json::to_string(&scenario).unwrap().as_bytes())
        .bytes(retriever.as_bytes())
        .bytes(retriever_cfg.as_bytes())
        .bytes(serde_json::to_string(cfg).unwrap().as_bytes());
    for d in corpora.initial.iter().chain(&corpora.new) {
        h.bytes(d.doc_id.as_bytes())
            .bytes(d.text.as_bytes())
            .bytes(d.pub_date.to_string().as_bytes());
    }
    h.u64(corpora.initial.len() as u64);
    for q in evals.q_initial.iter().chain(evals.q_new.iter().flatten()) {
        h.bytes(serde_json::to_string(q).unwrap().as_bytes());
    }
    h.u64(evals.q_initial.len() as u64);
    h.finish().hex()
}

fn query_text(q: &Query, strip: bool) -> String {
    let rendered = q.rendered();
    if strip {
        strip_timestamp(&rendered).to_string()
    } else {
        rendered
    }
}

fn eval_one(retriever: &dyn Retriever, q: &Query, texts: &HashMap<&str, &str>, ks: &[usize], strip: bool) -> Result<(Vec<u8>, Option<Vec<u8>>)> {
    if q.gold_doc_ids.is_empty() {
        return Err(HarnessError::EmptyGold(q.qid.clone()).into());
    }
    let kmax = ks.iter().copied().max().unwrap_or(1);
    let ranked = retriever.search(&query_text(q, strip), kmax)?;
    let mut hits = Vec::with_capacity(ks.len());
    for &k in ks {
        hits.push(hits_at_k(&ranked, &q.gold_doc_ids, k)?);
    }
    let has_answers = q.gold_answers.iter().any(|a| !a.trim().is_empty());
    let recall = if has_answers {
        let passages: Vec<&str> = ranked
            .iter()
            .map(|id| texts.get(id.as_str()).copied().unwrap_or(""))
            .collect();
        let mut r = Vec::with_capacity(ks.len());
        for &k in ks {
            r.push(answer_recall_at_k(&passages, &q.gold_answers, k)?);
        }
        Some(r)
    } else {
        None
    };
    Ok((hits, recall))
}

/// Metric table of one evaluation set. With `strip`, every query's date
/// prefix is removed before retrieval; gold labels are never touched.
pub fn evaluate_set(retriever: &dyn Retriever, queries: &[Query], texts: &HashMap<&str, &str>, ks: &[usize], strip: bool) -> Result<MetricTable> {
    if let Some(&k) = ks.iter().find(|&&k| k < 1) {
        return Err(HarnessError::InvalidK(k).into());
    }
    #[cfg(feature = "parallel")]
    let rows: Vec<(Vec<u8>, Option<Vec<u8>>)> = {
        use rayon::prelude::*;
        queries
            .par_iter()
            .map(|q| eval_one(retriever, q, texts, ks, strip))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(Vec<u8>, Option<Vec<u8>>)> = queries
        .iter()
        .map(|q| eval_one(retriever, q, texts, ks, strip))
        .collect::<Result<_>>()?;
    let (hits, recall): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(MetricTable::from_indicators(ks, &hits, &recall))
}

/// Re-runs evaluation on date-stripped queries. The total pairs the base
/// Q_initial with the stripped Q_new.
pub fn bias_ablation(retriever: &dyn Retriever, evals: &EvalSets, texts: &HashMap<&str, &str>, ks: &[usize], base_initial: &MetricTable) -> Result<(MetricTable, Option<MetricTable>, Option<MetricTable>)> {
    let initial = evaluate_set(retriever, &evals.q_initial, texts, ks, true)?;
    let (new, total) = match &evals.q_new {
        Some(q) => {
            let n = evaluate_set(retriever, q, texts, ks, true)?;
            let t = MetricTable::mean(base_initial, &n);
            (Some(n), Some(t))
        }
        None => (None, None),
    };
    Ok((initial, new, total))
}

fn flops_for(retriever: &dyn Retriever, cost: &CostModelConfig, corpus: u64) -> Result<Option<FlopsReport>> {
    let mut cfg = cost.clone();
    cfg.corpus = corpus;
    let name = retriever.name();
    Ok(if name.starts_with("gr") {
        Some(gr_flops(&cfg, FlopsMode::DecoderPasses)?)
    } else if name == "de" {
        Some(de_flops(&cfg)?)
    } else {
        None
    })
}

/// Builds, updates and evaluates `retriever` under one scenario.
///
/// `retriever_cfg` is a serialized description of the retriever's settings,
/// folded into the config hash.
pub fn run_scenario(
    scenario: Scenario,
    retriever: &mut dyn Retriever,
    retriever_cfg: &str,
    corpora: &Corpora,
    evals: &EvalSets,
    cfg: &ScenarioConfig,
) -> Result<RunReport> {
    if scenario != Scenario::StaticIR && evals.q_new.is_none() {
        return Err(HarnessError::MissingEvalSet { scenario, set: "Q_new" }.into());
    }
    if let Some(&k) = cfg.ks.iter().find(|&&k| k < 1) {
        return Err(HarnessError::InvalidK(k).into());
    }
    let config_hash = config_hash(scenario, &retriever.name(), retriever_cfg, corpora, evals, cfg);
    let mut indexing = IndexingReport::default();
    indexing.events.extend(retriever.build(&corpora.initial)?);
    if scenario != Scenario::StaticIR {
        indexing.events.extend(retriever.update_index(&corpora.new)?);
    }
    if scenario == Scenario::TrainUpdate {
        indexing.events.extend(retriever.update_model(&corpora.new)?);
    }

    let texts: HashMap<&str, &str> = corpora
        .initial
        .iter()
        .chain(&corpora.new)
        .map(|d| (d.doc_id.as_str(), d.text.as_str()))
        .collect();
    let ks = &cfg.ks;
    let t_eval = std::time::Instant::now();
    let q_initial = evaluate_set(retriever, &evals.q_initial, &texts, ks, false)?;
    let (q_new, q_total) = if scenario == Scenario::StaticIR {
        (None, None)
    } else {
        let q = evals.q_new.as_deref().unwrap_or_default();
        let n = evaluate_set(retriever, q, &texts, ks, false)?;
        let t = MetricTable::mean(&q_initial, &n);
        (Some(n), Some(t))
    };
    let (q_initial_wo_bias, q_new_wo_bias, q_total_wo_bias) = if cfg.bias_ablation {
        let scoped = EvalSets {
            q_initial: evals.q_initial.clone(),
            q_new: if scenario == Scenario::StaticIR { None } else { evals.q_new.clone() },
        };
        let (i, n, t) = bias_ablation(retriever, &scoped, &texts, ks, &q_initial)?;
        (Some(i), n, t)
    } else {
        (None, None, None)
    };
    let eval_seconds = t_eval.elapsed().as_secs_f64();

    let artifacts = match &cfg.artifact_dir {
        Some(dir) => retriever.save(dir)?,
        None => retriever.storage()?,
    };
    let mut timing = TimingBlock {
        indexing_seconds: indexing.indexing_seconds(),
        event_seconds: indexing.events.iter().map(|e| e.seconds).collect(),
        eval_seconds,
        search_method: retriever.search_method().map(str::to_string),
        ..TimingBlock::default()
    };
    if let Some(dir) = &cfg.artifact_dir {
        let queries: Vec<String> = evals
            .q_initial
            .iter()
            .chain(evals.q_new.iter().flatten())
            .map(|q| q.rendered())
            .collect();
        if !queries.is_empty() {
            let kmax = ks.iter().copied().max().unwrap_or(1);
            let (_, lat) = measure_latency::<_, _, Error>(
                &queries,
                || retriever.load(dir),
                |r, q| r.search(q, kmax).map(|_| ()),
            )?;
            timing.t_online_median_s = Some(lat.t_online_median_s);
            timing.t_offline_s = Some(lat.t_offline_s);
        }
    }
    let corpus_size = retriever.indexed_docs() as u64;
    let flops = match &cfg.cost {
        Some(c) => flops_for(retriever, c, corpus_size)?,
        None => None,
    };
    let mut eval_sizes = BTreeMap::new();
    eval_sizes.insert("q_initial".to_string(), evals.q_initial.len());
    if scenario != Scenario::StaticIR {
        eval_sizes.insert("q_new".to_string(), evals.q_new.as_ref().map_or(0, Vec::len));
    }
    let mut report = RunReport {
        scenario,
        retriever: retriever.name(),
        metrics: Metrics {
            q_total,
            q_initial,
            q_new,
            q_total_wo_bias,
            q_initial_wo_bias,
            q_new_wo_bias,
        },
        efficiency: EfficiencyBlock {
            flops,
            measured_search_flops: retriever.search_flops(),
            index_events: indexing
                .events
                .iter()
                .map(|e| EventSummary {
                    kind: e.kind,
                    docs: e.docs,
                })
                .collect(),
            forced_reindex: indexing.forced_reindex(),
            storage_bytes: artifacts.iter().map(|a| a.bytes).sum(),
            artifacts,
        },
        provenance: Provenance {
            config_hash,
            fingerprints: retriever.fingerprints(),
            model_updates: retriever.model_updates(),
            docs_indexed: retriever.indexed_docs(),
            eval_sizes,
        },
        report_hash: String::new(),
        timing,
    };
    report.report_hash = report.content_hash();
    Ok(report)
}

const CSV_HEADER: &str = "retriever,scenario,metric,k,q_total,q_initial,q_new,q_total_wo_bias,q_initial_wo_bias,q_new_wo_bias,flops,indexing_s,t_online_ms,t_offline_s,storage_bytes";

/// One row per (report, metric, k), shaped like a retrieval summary
/// table. Absent values are left empty.
pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let cell = |t: Option<&MetricTable>, metric: &str, k: usize| -> String {
        t.and_then(|t| match metric {
            "hits" => t.hits.get(&k),
            _ => t.answer_recall.get(&k),
        })
        .map(|v| format!("{v:.4}"))
        .unwrap_or_default()
    };
    for r in reports {
        let m = &r.metrics;
        let scenario = serde_json::to_value(r.scenario).unwrap();
        let scenario = scenario.as_str().unwrap_or_default();
        for metric in ["hits", "answer_recall"] {
            for &k in m.q_initial.hits.keys() {
                let row = [
                    r.retriever.clone(),
                    scenario.to_string(),
                    metric.to_string(),
                    k.to_string(),
                    cell(m.q_total.as_ref(), metric, k),
                    cell(Some(&m.q_initial), metric, k),
                    cell(m.q_new.as_ref(), metric, k),
                    cell(m.q_total_wo_bias.as_ref(), metric, k),
                    cell(m.q_initial_wo_bias.as_ref(), metric, k),
                    cell(m.q_new_wo_bias.as_ref(), metric, k),
                    r.efficiency
                        .flops
                        .as_ref()
                        .map(|f| f.headline_total.to_string())
                        .unwrap_or_default(),
                    format!("{:.6}", r.timing.indexing_seconds),
                    r.timing
                        .t_online_median_s
                        .map(|s| format!("{:.4}", s * 1e3))
                        .unwrap_or_default(),
                    r.timing
                        .t_offline_s
                        .map(|s| format!("{s:.6}"))
                        .unwrap_or_default(),
                    r.efficiency.storage_bytes.to_string(),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
    }
    out
}
