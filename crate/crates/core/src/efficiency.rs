//! Inference cost model (forward-pass, inner-product, dense and generative
//! retrieval FLOPs) and wall-clock / storage instrumentation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

const FLOP_LIMIT: u128 = 1 << 63;

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("FLOP count exceeds 2^63 in {0}")]
    Overflow(&'static str),
    #[error("log base must be finite and > 1, got {0}")]
    BadLogBase(f64),
    #[error("latency measurement needs at least one query")]
    NoQueries,
    #[error("invalid cost config: {0}")]
    Parse(String),
}

impl CostError {
    pub fn code(&self) -> &'static str {
        match self {
            CostError::NonPositive { .. } => "COST_NON_POSITIVE",
            CostError::Overflow(_) => "COST_OVERFLOW",
            CostError::BadLogBase(_) => "COST_BAD_LOG_BASE",
            CostError::NoQueries => "COST_NO_QUERIES",
            CostError::Parse(_) => "COST_PARSE",
        }
    }
}

fn bounded(v: u128, what: &'static str) -> Result<u64, CostError> {
    if v >= FLOP_LIMIT {
        Err(CostError::Overflow(what))
    } else {
        Ok(v as u64)
    }
}

fn positive(v: u64, field: &'static str) -> Result<u128, CostError> {
    if v == 0 {
        Err(CostError::NonPositive { field })
    } else {
        Ok(u128::from(v))
    }
}

/// `2N + 2 * n_layer * n_ctx * d_attn`.
pub fn fw_flops(n_params: u64, n_layer: u64, n_ctx: u64, d_attn: u64) -> Result<u64, CostError> {
    let n = positive(n_params, "n_params")?;
    let l = positive(n_layer, "n_layer")?;
    let c = positive(n_ctx, "n_ctx")?;
    let d = positive(d_attn, "d_attn")?;
    bounded(2 * n + 2 * l * c * d, "fw_flops")
}

/// `d + (d - 1)`: multiplies plus adds of one dot product.
pub fn ip_flops(d_model: u64) -> Result<u64, CostError> {
    let d = positive(d_model, "d_model")?;
    bounded(2 * d - 1, "ip_flops")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelConfig {
    #[serde(rename = "N_enc")]
    pub n_enc: u64,
    #[serde(rename = "N_dec", default)]
    pub n_dec: u64,
    pub d_model: u64,
    pub n_layer_enc: u64,
    #[serde(default)]
    pub n_layer_dec: u64,
    pub n_ctx: u64,
    pub d_attn: u64,
    #[serde(rename = "V", default)]
    pub vocab: u64,
    #[serde(rename = "L", default)]
    pub out_len: u64,
    #[serde(rename = "B", default)]
    pub beam: u64,
    #[serde(rename = "C", default)]
    pub corpus: u64,
    #[serde(default = "one")]
    pub n_cluster: u64,
    #[serde(default = "one")]
    pub n_nearest: u64,
    #[serde(default = "two")]
    pub log_base: f64,
}

fn one() -> u64 {
    1
}

fn two() -> f64 {
    2.0
}

impl CostModelConfig {
    /// BERT-large-sized dual encoder over a 50M-passage corpus.
    pub fn bert_large_de() -> Self {
        CostModelConfig {
            n_enc: 336_000_000,
            n_dec: 0,
            d_model: 1024,
            n_layer_enc: 24,
            n_layer_dec: 0,
            n_ctx: 512,
            d_attn: 1024,
            vocab: 30_522,
            out_len: 0,
            beam: 0,
            corpus: 50_000_000,
            n_cluster: 1,
            n_nearest: 1,
            log_base: 2.0,
        }
    }

    /// BART-large split evenly between encoder and decoder, L = B = 10.
    pub fn bart_large_gr() -> Self {
        CostModelConfig {
            n_enc: 200_000_000,
            n_dec: 200_000_000,
            d_model: 1024,
            n_layer_enc: 12,
            n_layer_dec: 12,
            n_ctx: 1024,
            d_attn: 1024,
            vocab: 50_265,
            out_len: 10,
            beam: 10,
            corpus: 50_000_000,
            n_cluster: 1,
            n_nearest: 1,
            log_base: 2.0,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, CostError> {
        serde_json::from_str(s).map_err(|e| CostError::Parse(e.to_string()))
    }

    fn check_log_base(&self) -> Result<(), CostError> {
        if self.log_base.is_finite() && self.log_base > 1.0 {
            Ok(())
        } else {
            Err(CostError::BadLogBase(self.log_base))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FlopsMode {
    /// Beam term counts decoder forward passes only.
    #[default]
    DecoderPasses,
    /// Beam term also counts successor lookup, `IP * V log V` per beam step.
    FullFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverFamily {
    De,
    Gr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub family: RetrieverFamily,
    pub mode: FlopsMode,
    pub fw_enc: u64,
    /// One decoder forward pass; zero for dual encoders.
    pub fw_dec: u64,
    /// `L * B * fw_dec`.
    pub fw_dec_total: u64,
    pub ip: u64,
    /// `C * n_nearest * IP / n_cluster`; zero for generative retrieval.
    pub search_total: u64,
    /// `L * B * IP * V log V`.
    pub fmindex_term: f64,
    pub headline_total: u64,
    pub full_total: f64,
}

impl FlopsReport {
    /// Total under the report's mode.
    pub fn total(&self) -> f64 {
        match self.mode {
            FlopsMode::DecoderPasses => self.headline_total as f64,
            FlopsMode::FullFormula => self.full_total,
        }
    }
}

/// `FW_enc + C * n_nearest * IP / n_cluster`. A non-divisible cluster
/// split rounds down.
pub fn de_flops(cfg: &CostModelConfig) -> Result<FlopsReport, CostError> {
    let fw_enc = fw_flops(cfg.n_enc, cfg.n_layer_enc, cfg.n_ctx, cfg.d_attn)?;
    let ip = ip_flops(cfg.d_model)?;
    let n_cluster = positive(cfg.n_cluster, "n_cluster")?;
    let search = u128::from(cfg.corpus) * u128::from(cfg.n_nearest) * u128::from(ip) / n_cluster;
    let search_total = bounded(search, "de search")?;
    let headline_total = bounded(u128::from(fw_enc) + u128::from(search_total), "de total")?;
    Ok(FlopsReport {
        family: RetrieverFamily::De,
        mode: FlopsMode::DecoderPasses,
        fw_enc,
        fw_dec: 0,
        fw_dec_total: 0,
        ip,
        search_total,
        fmindex_term: 0.0,
        headline_total,
        full_total: headline_total as f64,
    })
}

/// `FW_enc + L * (FW_dec + IP * V log V) * B`. The headline drops the
/// successor term; `full_total` keeps it.
pub fn gr_flops(cfg: &CostModelConfig, mode: FlopsMode) -> Result<FlopsReport, CostError> {
    cfg.check_log_base()?;
    let fw_enc = fw_flops(cfg.n_enc, cfg.n_layer_enc, cfg.n_ctx, cfg.d_attn)?;
    let fw_dec = fw_flops(cfg.n_dec, cfg.n_layer_dec, cfg.n_ctx, cfg.d_attn)?;
    let ip = ip_flops(cfg.d_model)?;
    let steps = u128::from(cfg.out_len) * u128::from(cfg.beam);
    let fw_dec_total = bounded(steps * u128::from(fw_dec), "gr decoder")?;
    let headline_total = bounded(u128::from(fw_enc) + u128::from(fw_dec_total), "gr total")?;
    let v = cfg.vocab as f64;
    let vlogv = if cfg.vocab == 0 { 0.0 } else { v * v.ln() / cfg.log_base.ln() };
    let fmindex_term = steps as f64 * ip as f64 * vlogv;
    Ok(FlopsReport {
        family: RetrieverFamily::Gr,
        mode,
        fw_enc,
        fw_dec,
        fw_dec_total,
        ip,
        search_total: 0,
        fmindex_term,
        headline_total,
        full_total: headline_total as f64 + fmindex_term,
    })
}

/// Runs `f` and returns its output with elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub t_offline_s: f64,
    pub t_online_median_s: f64,
    pub warmup: usize,
    pub samples: usize,
}

pub const WARMUP_QUERIES: usize = 10;
pub const MIN_TIMED_QUERIES: usize = 100;

/// Times `load` once as the offline cost, then runs `query` over `queries`
/// (cycling if fewer than the sample floor) and reports the median
/// per-query wall-clock after warm-up.
pub fn measure_latency<Q, T, E>(
    queries: &[Q],
    load: impl FnOnce() -> Result<T, E>,
    mut query: impl FnMut(&T, &Q) -> Result<(), E>,
) -> Result<(T, LatencyReport), E>
where
    E: From<CostError>,
{
    if queries.is_empty() {
        return Err(CostError::NoQueries.into());
    }
    let (loaded, t_offline_s) = timed(load);
    let loaded = loaded?;
    for q in queries.iter().cycle().take(WARMUP_QUERIES) {
        query(&loaded, q)?;
    }
    let n = queries.len().max(MIN_TIMED_QUERIES);
    let mut samples = Vec::with_capacity(n);
    for q in queries.iter().cycle().take(n) {
        let (r, s) = timed(|| query(&loaded, q));
        r?;
        samples.push(s);
    }
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    let median = if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2.0
    };
    Ok((
        loaded,
        LatencyReport {
            t_offline_s,
            t_online_median_s: median,
            warmup: WARMUP_QUERIES,
            samples: n,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexEventKind {
    /// Index built from scratch over the given corpus.
    FullBuild,
    /// New corpus incorporated by appending a shard or rows; nothing rebuilt.
    Append,
    /// A model update invalidated the index and every document was re-embedded.
    ModelForcedReindex,
    /// Model parameters changed but existing index data stayed valid.
    ModelUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEvent {
    pub kind: IndexEventKind,
    pub docs: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSize {
    pub name: String,
    pub bytes: u64,
}

/// Indexing time and storage footprint accumulated over one scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexingReport {
    pub events: Vec<IndexEvent>,
    pub artifacts: Vec<ArtifactSize>,
}

impl IndexingReport {
    pub fn record(&mut self, kind: IndexEventKind, docs: usize, seconds: f64) {
        self.events.push(IndexEvent { kind, docs, seconds });
    }

    pub fn indexing_seconds(&self) -> f64 {
        self.events
            .iter()
            .filter(|e| e.kind != IndexEventKind::ModelUpdate)
            .map(|e| e.seconds)
            .sum()
    }

    pub fn storage_bytes(&self) -> u64 {
        self.artifacts.iter().map(|a| a.bytes).sum()
    }

    pub fn forced_reindex(&self) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == IndexEventKind::ModelForcedReindex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(fw_flops(336_000_000, 24, 512, 1024).unwrap(), 697_165_824);
        assert_eq!(fw_flops(200_000_000, 12, 1024, 1024).unwrap(), 425_165_824);
        assert!(matches!(fw_flops(0, 1, 1, 1), Err(CostError::NonPositive { .. })));
        assert_eq!(ip_flops(1024).unwrap(), 2047);
        assert_eq!(ip_flops(1).unwrap(), 1);

        let de = de_flops(&CostModelConfig::bert_large_de()).unwrap();
        assert_eq!(de.fw_enc, 697_165_824);
        assert_eq!(de.search_total, 102_350_000_000);
        assert_eq!(de.headline_total, 103_047_165_824);

        let gr = gr_flops(&CostModelConfig::bart_large_gr(), FlopsMode::DecoderPasses).unwrap();
        assert_eq!(gr.fw_enc, 425_165_824);
        assert_eq!(gr.fw_dec_total, 42_516_582_400);
        assert_eq!(gr.headline_total, 42_941_748_224);
    }

    #[test]
    fn dot_product_op_count() {
        let a = vec![1.0f64; 1024];
        let mut ops = 0u64;
        let mut acc = a[0] * a[0];
        ops += 1;
        for x in &a[1..] {
            acc += x * x;
            ops += 2;
        }
        assert_eq!(acc, 1024.0);
        assert_eq!(ops, ip_flops(1024).unwrap());
    }

    #[test]
    fn degenerate_sizes() {
        let mut de = CostModelConfig::bert_large_de();
        de.corpus = 0;
        let r = de_flops(&de).unwrap();
        assert_eq!(r.headline_total, r.fw_enc);

        let mut gr = CostModelConfig::bart_large_gr();
        gr.out_len = 0;
        let r = gr_flops(&gr, FlopsMode::FullFormula).unwrap();
        assert_eq!(r.headline_total, r.fw_enc);
        assert_eq!(r.fmindex_term, 0.0);
    }

    #[test]
    fn full_formula_gap() {
        let cfg = CostModelConfig::bart_large_gr();
        let r = gr_flops(&cfg, FlopsMode::FullFormula).unwrap();
        let v = cfg.vocab as f64;
        let expected = 100.0 * 2047.0 * v * v.log2();
        assert!((r.full_total - r.headline_total as f64 - expected).abs() <= 1e-6 * expected);
        assert_eq!(r.total(), r.full_total);
    }

    #[test]
    fn overflow_checked() {
        assert!(matches!(
            fw_flops(u64::MAX, 1, 1, 1),
            Err(CostError::Overflow(_))
        ));
    }

    #[test]
    fn json_config() {
        let cfg = CostModelConfig::bart_large_gr();
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"N_enc\""));
        assert_eq!(CostModelConfig::from_json(&s).unwrap(), cfg);
        assert!(CostModelConfig::from_json("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn latency_requires_queries() {
        let r: Result<((), LatencyReport), CostError> =
            measure_latency(&[] as &[u32], || Ok(()), |_, _| Ok(()));
        assert!(matches!(r, Err(CostError::NoQueries)));
        let (_, rep) = measure_latency(&[1u32, 2], || Ok::<_, CostError>(()), |_, _| Ok(())).unwrap();
        assert_eq!(rep.samples, MIN_TIMED_QUERIES);
    }
}
