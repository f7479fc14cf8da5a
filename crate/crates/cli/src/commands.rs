use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{ArgGroup, Args, ValueEnum};
use serde::Serialize;

use dynir_core::container::FingerprintHasher;
use dynir_core::corpus::{default_cutover, load_queries, render_query_prefix, strip_timestamp, Document, Query, Split};
use dynir_core::dp_analysis::{diff_and_select, DPReport, ParamSnapshot};
use dynir_core::efficiency::{
    de_flops, gr_flops, measure_latency, ArtifactSize, CostModelConfig, FlopsMode, FlopsReport, IndexEvent,
    IndexingReport, LatencyReport,
};
use dynir_core::gen_retriever::NgramScorer;
use dynir_core::harness::synthetic::{timestamp_corpus, SyntheticConfig};
use dynir_core::harness::{
    reports_to_csv, run_scenario, Corpora, EvalSets, EventSummary, MetricTable, RunReport, Scenario, ScenarioConfig,
    DEFAULT_KS,
};

use crate::engine::{
    docs_hash, load_docs, load_views, make_engine, read_file, split_corpus, write_file, Engine, Manifest,
    RetrieverArgs, RetrieverKind, Step, Tuning,
};
use crate::error::{CliError, Res};

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus JSONL: one {"id", "text", "date"} object per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Documents dated on or after this day form the new corpus.
    #[arg(long, value_parser = parse_date, default_value_t = default_cutover())]
    pub cutover: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Slice {
    Initial,
    New,
    All,
}

impl Slice {
    fn select(self, docs: &[Document]) -> Vec<Document> {
        docs.iter()
            .filter(|d| match self {
                Slice::Initial => d.split == Split::Initial,
                Slice::New => d.split == Split::New,
                Slice::All => true,
            })
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Static,
    IndexUpdate,
    TrainUpdate,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Static => Scenario::StaticIR,
            ScenarioArg::IndexUpdate => Scenario::IndexUpdate,
            ScenarioArg::TrainUpdate => Scenario::TrainUpdate,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[command(flatten)]
    pub retriever: RetrieverArgs,
    /// Artifact directory to create.
    #[arg(long)]
    pub index: PathBuf,
    /// Corpus slice to index.
    #[arg(long, value_enum, default_value = "initial")]
    pub split: Slice,
    /// Report path, `<index>/build.json` by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct UpdateArgs {
    /// Artifact directory written by `build`.
    #[arg(long)]
    pub index: PathBuf,
    /// Corpus JSONL holding both the indexed documents and the update.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Corpus slice the update draws from.
    #[arg(long, value_enum, default_value = "new")]
    pub split: Slice,
    /// Report path, `<index>/<command>.json` by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).multiple(true).args(["query", "queries"])))]
pub struct RetrieveArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query text; repeatable.
    #[arg(short, long)]
    pub query: Vec<String>,
    /// Date to render into each `--query` prefix.
    #[arg(long, value_parser = parse_date)]
    pub date: Option<NaiveDate>,
    /// Query JSONL; questions are rendered with their asked date.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(short, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("k must be a positive integer, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalInputs {
    /// Q_initial JSONL.
    #[arg(long)]
    pub initial_queries: Option<PathBuf>,
    /// Q_new JSONL; required by the update scenarios.
    #[arg(long)]
    pub new_queries: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "index-update")]
    pub scenario: ScenarioArg,
    /// Cutoffs for Hits@k and AnswerRecall@k.
    #[arg(long, value_delimiter = ',', value_parser = parse_k, default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[command(flatten)]
    pub eval: EvalInputs,
    #[command(flatten)]
    pub retriever: RetrieverArgs,
    /// Cost model (TOML or JSON) for the FLOPs block.
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long)]
    pub no_bias_ablation: bool,
    /// Skip saving artifacts and measuring latency.
    #[arg(long)]
    pub skip_latency: bool,
    /// Output directory for report.json, report.csv and artifacts.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long, required_unless_present = "synthetic")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_date, default_value_t = default_cutover())]
    pub cutover: NaiveDate,
    /// Use the built-in timestamped corpus instead of files.
    #[arg(long, conflicts_with_all = ["corpus", "initial_queries", "new_queries"])]
    pub synthetic: bool,
    #[command(flatten)]
    pub eval: EvalInputs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gr-span,de,bm25")]
    pub retrievers: Vec<RetrieverKind>,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    De,
    Gr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Decoder,
    Full,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
pub struct FlopsArgs {
    /// Cost model config, TOML or JSON, with CostModelConfig field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in reference configuration.
    #[arg(long, value_enum)]
    pub preset: Option<Family>,
    /// Retriever family; inferred from the decoder settings when absent.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// `decoder` counts decoder passes in the beam term; `full` adds the
    /// successor lookup term.
    #[arg(long, value_enum, default_value = "decoder")]
    pub mode: ModeArg,
    /// Override the corpus size C.
    #[arg(long)]
    pub corpus_size: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    /// Query JSONL used for latency sampling.
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub retriever: RetrieverArgs,
    /// Index sizes (document counts, oldest first); the whole corpus when
    /// absent.
    #[arg(long, value_delimiter = ',', value_parser = parse_k)]
    pub sizes: Vec<usize>,
    #[arg(short, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DpArgs {
    /// Snapshot or n-gram scorer file before continual training.
    #[arg(long)]
    pub init: PathBuf,
    /// Snapshot or n-gram scorer file after continual training.
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long, default_value_t = 90.0)]
    pub percentile: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn emit<T: Serialize>(v: &T, out: Option<&Path>) -> Res<()> {
    let s = json(v);
    match out {
        Some(p) => write_file(p, s.as_bytes()),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

/// Wall-clock numbers, kept apart from the hashed body.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StepTiming {
    pub event_seconds: Vec<f64>,
    pub indexing_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub command: String,
    pub retriever: String,
    pub config_hash: String,
    pub parent_hash: Option<String>,
    pub step_docs: usize,
    pub docs_indexed: usize,
    pub model_updates: usize,
    pub index_events: Vec<EventSummary>,
    pub forced_reindex: bool,
    pub storage_bytes: u64,
    pub artifacts: Vec<ArtifactSize>,
    pub fingerprints: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_report: Option<DPReport>,
    pub report_hash: String,
    pub timing: StepTiming,
}

impl StepReport {
    fn seal(mut self) -> Self {
        let timing = std::mem::take(&mut self.timing);
        self.report_hash = String::new();
        let mut h = FingerprintHasher::new();
        h.bytes(&serde_json::to_vec(&self).expect("report serializes"));
        self.report_hash = h.finish().hex();
        self.timing = timing;
        self
    }
}

fn step_hash(command: &str, parent: Option<&str>, m: &Manifest, docs: &[Document]) -> String {
    let mut h = FingerprintHasher::new();
    h.bytes(command.as_bytes())
        .bytes(parent.unwrap_or("").as_bytes())
        .bytes(m.settings.config_json().as_bytes())
        .u64(m.seed)
        .bytes(m.cutover.to_string().as_bytes());
    docs_hash(&mut h, docs);
    h.finish().hex()
}

fn step_report(command: &str, engine: &Engine, m: &Manifest, parent: Option<String>, step_docs: usize, events: Vec<IndexEvent>, artifacts: Vec<ArtifactSize>) -> StepReport {
    let r = engine.as_dyn();
    let indexing = IndexingReport {
        events,
        artifacts: artifacts.clone(),
    };
    StepReport {
        command: command.into(),
        retriever: r.name(),
        config_hash: m.last_hash().unwrap_or_default().to_string(),
        parent_hash: parent,
        step_docs,
        docs_indexed: r.indexed_docs(),
        model_updates: m.model_updates,
        index_events: indexing
            .events
            .iter()
            .map(|e| EventSummary {
                kind: e.kind,
                docs: e.docs,
            })
            .collect(),
        forced_reindex: indexing.forced_reindex(),
        storage_bytes: indexing.storage_bytes(),
        artifacts,
        fingerprints: r.fingerprints(),
        dp_report: engine.dp_report().cloned(),
        report_hash: String::new(),
        timing: StepTiming {
            event_seconds: indexing.events.iter().map(|e| e.seconds).collect(),
            indexing_seconds: indexing.indexing_seconds(),
        },
    }
    .seal()
}

pub fn build(a: &BuildArgs, seed: u64) -> Res<()> {
    let docs = load_docs(&a.data.corpus, a.data.cutover)?;
    let slice = a.split.select(&docs);
    if slice.is_empty() {
        return Err(CliError::Empty(format!("no documents in the {:?} slice", a.split)));
    }
    let views = load_views(&a.retriever.tuning)?;
    let mut engine = make_engine(&a.retriever, seed, &split_corpus(&docs), views);
    let events = engine.as_dyn_mut().build(&slice)?;
    let artifacts = engine.as_dyn().save(&a.index)?;
    let mut settings = a.retriever.clone();
    for p in [&mut settings.tuning.pseudo, &mut settings.tuning.titles].into_iter().flatten() {
        if let Ok(abs) = p.canonicalize() {
            *p = abs;
        }
    }
    let mut m = Manifest {
        settings,
        seed,
        cutover: a.data.cutover,
        indexed: slice.iter().map(|d| d.doc_id.clone()).collect(),
        model_updates: 0,
        steps: Vec::new(),
        fingerprints: engine.as_dyn().fingerprints(),
    };
    let hash = step_hash("build", None, &m, &slice);
    m.steps.push(Step {
        command: "build".into(),
        config_hash: hash,
        docs: slice.len(),
    });
    m.save(&a.index)?;
    let report = step_report("build", &engine, &m, None, slice.len(), events, artifacts);
    emit(&report, Some(&build_report_path(a)))
}

pub fn build_report_path(a: &BuildArgs) -> PathBuf {
    a.report.clone().unwrap_or_else(|| a.index.join("build.json"))
}

pub fn update_report_path(a: &UpdateArgs, command: &str) -> PathBuf {
    a.report.clone().unwrap_or_else(|| a.index.join(format!("{command}.json")))
}

/// Restores the retriever recorded in `index` together with the documents it
/// covers, all taken from `corpus`.
fn reopen(index: &Path, corpus: &Path) -> Res<(Manifest, Engine, Vec<Document>)> {
    let m = Manifest::load(index)?;
    let docs = load_docs(corpus, m.cutover)?;
    let present: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    if let Some(missing) = m.indexed.iter().find(|id| !present.contains(id.as_str())) {
        return Err(CliError::CorpusMismatch(missing.clone()));
    }
    let indexed: Vec<Document> = docs.iter().filter(|d| m.indexed.contains(&d.doc_id)).cloned().collect();
    let views = load_views(&m.settings.tuning)?;
    let mut engine = make_engine(&m.settings, m.seed, &split_corpus(&docs), views);
    engine.as_dyn_mut().restore(index, &indexed)?;
    Ok((m, engine, docs))
}

pub fn update_index(a: &UpdateArgs) -> Res<()> {
    let (mut m, mut engine, docs) = reopen(&a.index, &a.corpus)?;
    let step: Vec<Document> = a
        .split
        .select(&docs)
        .into_iter()
        .filter(|d| !m.indexed.contains(&d.doc_id))
        .collect();
    if step.is_empty() {
        return Err(CliError::Empty(format!("every document in the {:?} slice is already indexed", a.split)));
    }
    let events = engine.as_dyn_mut().update_index(&step)?;
    let artifacts = engine.as_dyn().save(&a.index)?;
    let parent = m.last_hash().map(str::to_string);
    let hash = step_hash("update-index", parent.as_deref(), &m, &step);
    m.indexed.extend(step.iter().map(|d| d.doc_id.clone()));
    m.steps.push(Step {
        command: "update-index".into(),
        config_hash: hash,
        docs: step.len(),
    });
    m.fingerprints = engine.as_dyn().fingerprints();
    m.save(&a.index)?;
    let report = step_report("update-index", &engine, &m, parent, step.len(), events, artifacts);
    emit(&report, Some(&update_report_path(a, "update-index")))
}

pub fn update_model(a: &UpdateArgs) -> Res<()> {
    let (mut m, mut engine, docs) = reopen(&a.index, &a.corpus)?;
    let step = a.split.select(&docs);
    if step.is_empty() {
        return Err(CliError::Empty(format!("no documents in the {:?} slice", a.split)));
    }
    let events = engine.as_dyn_mut().update_model(&step)?;
    let artifacts = engine.as_dyn().save(&a.index)?;
    let parent = m.last_hash().map(str::to_string);
    let hash = step_hash("update-model", parent.as_deref(), &m, &step);
    m.model_updates += engine.as_dyn().model_updates();
    m.steps.push(Step {
        command: "update-model".into(),
        config_hash: hash,
        docs: step.len(),
    });
    m.fingerprints = engine.as_dyn().fingerprints();
    m.save(&a.index)?;
    let report = step_report("update-model", &engine, &m, parent, step.len(), events, artifacts);
    emit(&report, Some(&update_report_path(a, "update-model")))
}

#[derive(Debug, Serialize)]
struct QueryResult {
    qid: String,
    query: String,
    doc_ids: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RetrieveReport {
    retriever: String,
    config_hash: String,
    k: u32,
    results: Vec<QueryResult>,
}

fn query_text(q: &Query, with_timestamp: bool) -> String {
    let rendered = q.rendered();
    if with_timestamp {
        rendered
    } else {
        strip_timestamp(&rendered).to_string()
    }
}

pub fn retrieve(a: &RetrieveArgs) -> Res<()> {
    let m = Manifest::load(&a.index)?;
    let with_timestamp = !m.settings.tuning.no_timestamp;
    let mut queries: Vec<(String, String)> = a
        .query
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let text = match a.date {
                Some(d) if with_timestamp => render_query_prefix(d, q),
                _ => q.clone(),
            };
            (format!("q{i}"), text)
        })
        .collect();
    if let Some(p) = &a.queries {
        for q in load_queries(p, Split::Initial)? {
            let text = query_text(&q, with_timestamp);
            queries.push((q.qid, text));
        }
    }
    let mut engine = make_engine(&m.settings, m.seed, &Corpora::default(), Default::default());
    engine.as_dyn_mut().restore(&a.index, &[])?;
    let r = engine.as_dyn();
    let mut results = Vec::with_capacity(queries.len());
    for (qid, query) in queries {
        let doc_ids = r.search(&query, a.k as usize)?;
        results.push(QueryResult { qid, query, doc_ids });
    }
    let report = RetrieveReport {
        retriever: r.name(),
        config_hash: m.last_hash().unwrap_or_default().to_string(),
        k: a.k,
        results,
    };
    emit(&report, a.out.as_deref())
}

fn load_evals(e: &EvalInputs) -> Res<EvalSets> {
    let q_initial = match &e.initial_queries {
        Some(p) => load_queries(p, Split::Initial)?,
        None => Vec::new(),
    };
    let q_new = match &e.new_queries {
        Some(p) => Some(load_queries(p, Split::New)?),
        None => None,
    };
    Ok(EvalSets { q_initial, q_new })
}

pub fn load_cost(path: &Path) -> Res<CostModelConfig> {
    let raw = read_file(path)?;
    let text = String::from_utf8_lossy(&raw);
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        CostModelConfig::from_json(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|reason| CliError::Input {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn evaluate(a: &EvaluateArgs, seed: u64) -> Res<()> {
    let docs = load_docs(&a.data.corpus, a.data.cutover)?;
    let corpora = split_corpus(&docs);
    let evals = load_evals(&a.eval)?;
    let cost = a.cost.as_deref().map(load_cost).transpose()?;
    let views = load_views(&a.retriever.tuning)?;
    let mut engine = make_engine(&a.retriever, seed, &corpora, views);
    let cfg = ScenarioConfig {
        ks: a.eval.ks.clone(),
        bias_ablation: !a.no_bias_ablation,
        cost,
        artifact_dir: (!a.skip_latency).then(|| a.out.join("artifacts")),
    };
    let retriever_cfg = format!("{}|seed={seed}", a.retriever.config_json());
    let report = run_scenario(
        a.eval.scenario.into(),
        engine.as_dyn_mut(),
        &retriever_cfg,
        &corpora,
        &evals,
        &cfg,
    )?;
    write_file(&a.out.join("report.csv"), reports_to_csv(std::slice::from_ref(&report)).as_bytes())?;
    emit(&report, Some(&a.out.join("report.json")))
}

#[derive(Debug, Serialize)]
struct AblationRow {
    retriever: String,
    set: &'static str,
    metric: &'static str,
    k: usize,
    with_timestamp: f64,
    without_timestamp: f64,
    drop: f64,
}

#[derive(Debug, Serialize)]
struct AblationRun {
    retriever: String,
    config_hash: String,
    report_hash: String,
}

#[derive(Debug, Serialize)]
struct AblationReport {
    scenario: Scenario,
    runs: Vec<AblationRun>,
    rows: Vec<AblationRow>,
}

fn ablation_rows(r: &RunReport, rows: &mut Vec<AblationRow>) {
    let m = &r.metrics;
    let pairs: [(&'static str, Option<&MetricTable>, Option<&MetricTable>); 3] = [
        ("q_total", m.q_total.as_ref(), m.q_total_wo_bias.as_ref()),
        ("q_initial", Some(&m.q_initial), m.q_initial_wo_bias.as_ref()),
        ("q_new", m.q_new.as_ref(), m.q_new_wo_bias.as_ref()),
    ];
    for (set, with, without) in pairs {
        let (Some(with), Some(without)) = (with, without) else {
            continue;
        };
        for (metric, a, b) in [
            ("hits", &with.hits, &without.hits),
            ("answer_recall", &with.answer_recall, &without.answer_recall),
        ] {
            for (&k, &w) in a {
                let wo = b.get(&k).copied().unwrap_or(0.0);
                rows.push(AblationRow {
                    retriever: r.retriever.clone(),
                    set,
                    metric,
                    k,
                    with_timestamp: w,
                    without_timestamp: wo,
                    drop: w - wo,
                });
            }
        }
    }
}

pub fn ablate(a: &AblateArgs, seed: u64) -> Res<()> {
    let (corpora, evals) = if a.synthetic {
        let data = timestamp_corpus(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        });
        (data.corpora, data.evals)
    } else {
        let corpus = a.corpus.as_deref().expect("clap requires --corpus");
        (split_corpus(&load_docs(corpus, a.cutover)?), load_evals(&a.eval)?)
    };
    let scenario: Scenario = a.eval.scenario.into();
    let cfg = ScenarioConfig {
        ks: a.eval.ks.clone(),
        bias_ablation: true,
        cost: None,
        artifact_dir: None,
    };
    let mut report = AblationReport {
        scenario,
        runs: Vec::new(),
        rows: Vec::new(),
    };
    let mut full = Vec::new();
    for &kind in &a.retrievers {
        let args = RetrieverArgs {
            retriever: kind,
            tuning: a.tuning.clone(),
        };
        let mut engine = make_engine(&args, seed, &corpora, load_views(&a.tuning)?);
        let retriever_cfg = format!("{}|seed={seed}", args.config_json());
        let r = run_scenario(scenario, engine.as_dyn_mut(), &retriever_cfg, &corpora, &evals, &cfg)?;
        ablation_rows(&r, &mut report.rows);
        report.runs.push(AblationRun {
            retriever: r.retriever.clone(),
            config_hash: r.provenance.config_hash.clone(),
            report_hash: r.report_hash.clone(),
        });
        write_file(&a.out.join(format!("report-{}.json", r.retriever)), json(&r).as_bytes())?;
        full.push(r);
    }
    let mut csv = String::from("retriever,set,metric,k,with_timestamp,without_timestamp,drop\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4}\n",
            r.retriever, r.set, r.metric, r.k, r.with_timestamp, r.without_timestamp, r.drop
        ));
    }
    write_file(&a.out.join("ablation.csv"), csv.as_bytes())?;
    write_file(&a.out.join("reports.csv"), reports_to_csv(&full).as_bytes())?;
    emit(&report, Some(&a.out.join("ablation.json")))
}

pub fn flops(a: &FlopsArgs) -> Res<()> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => load_cost(p)?,
        (None, Some(Family::De)) => CostModelConfig::bert_large_de(),
        (None, Some(Family::Gr)) => CostModelConfig::bart_large_gr(),
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(c) = a.corpus_size {
        cfg.corpus = c;
    }
    let family = a.family.unwrap_or(if cfg.n_dec > 0 && cfg.beam > 0 && cfg.out_len > 0 {
        Family::Gr
    } else {
        Family::De
    });
    let report: FlopsReport = match family {
        Family::De => de_flops(&cfg)?,
        Family::Gr => gr_flops(
            &cfg,
            match a.mode {
                ModeArg::Decoder => FlopsMode::DecoderPasses,
                ModeArg::Full => FlopsMode::FullFormula,
            },
        )?,
    };
    emit(&report, a.out.as_deref())
}

#[derive(Debug, Serialize)]
struct BenchPoint {
    docs: usize,
    indexing_seconds: f64,
    storage_bytes: u64,
    artifacts: Vec<ArtifactSize>,
    search_flops: Option<u64>,
    latency: LatencyReport,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    retriever: String,
    k: u32,
    queries: usize,
    points: Vec<BenchPoint>,
}

pub fn bench(a: &BenchArgs, seed: u64) -> Res<()> {
    let mut docs = load_docs(&a.data.corpus, a.data.cutover)?;
    docs.sort_by(|x, y| (x.pub_date, &x.doc_id).cmp(&(y.pub_date, &y.doc_id)));
    let sizes = if a.sizes.is_empty() { vec![docs.len()] } else { a.sizes.clone() };
    if let Some(&n) = sizes.iter().find(|&&n| n > docs.len()) {
        return Err(CliError::Input {
            path: a.data.corpus.clone(),
            reason: format!("size {n} exceeds the {} documents in the corpus", docs.len()),
        });
    }
    let with_timestamp = !a.retriever.tuning.no_timestamp;
    let queries: Vec<String> = load_queries(&a.queries, Split::Initial)?
        .iter()
        .map(|q| query_text(q, with_timestamp))
        .collect();
    let corpora = split_corpus(&docs);
    let mut report = BenchReport {
        retriever: String::new(),
        k: a.k,
        queries: queries.len(),
        points: Vec::new(),
    };
    for n in sizes {
        let mut engine = make_engine(&a.retriever, seed, &corpora, load_views(&a.retriever.tuning)?);
        let events = engine.as_dyn_mut().build(&docs[..n])?;
        let dir = a.out.join(format!("index-{n}"));
        let artifacts = engine.as_dyn().save(&dir)?;
        let r = engine.as_dyn();
        let (_, latency) = measure_latency::<_, _, CliError>(
            &queries,
            || Ok(r.load(&dir)?),
            |loaded, q| {
                loaded.search(q, a.k as usize)?;
                Ok(())
            },
        )?;
        let indexing = IndexingReport {
            events,
            artifacts: artifacts.clone(),
        };
        report.retriever = r.name();
        report.points.push(BenchPoint {
            docs: n,
            indexing_seconds: indexing.indexing_seconds(),
            storage_bytes: indexing.storage_bytes(),
            artifacts,
            search_flops: r.search_flops(),
            latency,
        });
    }
    emit(&report, Some(&a.out.join("bench.json")))
}

fn load_params(path: &Path) -> Res<Result<ParamSnapshot, NgramScorer>> {
    let raw = read_file(path)?;
    if raw.starts_with(b"DYNIRSNAP") {
        Ok(Ok(ParamSnapshot::from_bytes(&raw)?))
    } else {
        Ok(Err(NgramScorer::from_bytes(&raw)?))
    }
}

pub fn dp_analyze(a: &DpArgs) -> Res<()> {
    let (init, new) = match (load_params(&a.init)?, load_params(&a.new)?) {
        (Ok(i), Ok(n)) => (i, n),
        (Err(i), Err(n)) => i.paired_snapshots(&n),
        _ => {
            return Err(CliError::Input {
                path: a.new.clone(),
                reason: "--init and --new must both be snapshots or both be scorers".into(),
            })
        }
    };
    let report = diff_and_select(&init, &new, a.percentile)?;
    emit(&report, a.out.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_and_date_parsers() {
        assert_eq!(parse_k("5"), Ok(5));
        assert!(parse_k("0").is_err());
        assert!(parse_k("-1").is_err());
        assert_eq!(parse_date("2020-05-06").unwrap().to_string(), "2020-05-06");
        assert!(parse_date("May 6 2020").is_err());
    }

    #[test]
    fn slices_follow_the_cutover() {
        let c = default_cutover();
        let d = |id: &str, y| Document::new(id, "text", dynir_core::corpus::ymd(y, 6, 1), c);
        let docs = vec![d("a", 2019), d("b", 2020), d("c", 2019)];
        let ids = |v: Vec<Document>| v.into_iter().map(|d| d.doc_id).collect::<Vec<_>>();
        assert_eq!(ids(Slice::Initial.select(&docs)), ["a", "c"]);
        assert_eq!(ids(Slice::New.select(&docs)), ["b"]);
        assert_eq!(Slice::All.select(&docs).len(), 3);
    }

    #[test]
    fn report_hash_ignores_timing() {
        let base = StepReport {
            command: "build".into(),
            retriever: "bm25".into(),
            config_hash: "h".into(),
            parent_hash: None,
            step_docs: 1,
            docs_indexed: 1,
            model_updates: 0,
            index_events: Vec::new(),
            forced_reindex: false,
            storage_bytes: 10,
            artifacts: Vec::new(),
            fingerprints: BTreeMap::new(),
            dp_report: None,
            report_hash: String::new(),
            timing: StepTiming::default(),
        };
        let mut slow = base.clone();
        slow.timing.indexing_seconds = 3.0;
        let mut bigger = base.clone();
        bigger.storage_bytes = 11;
        let (a, b, c) = (base.seal(), slow.seal(), bigger.seal());
        assert_eq!(a.report_hash, b.report_hash);
        assert_ne!(a.report_hash, c.report_hash);
    }
}
