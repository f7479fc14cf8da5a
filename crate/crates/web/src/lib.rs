//! Browser bindings: a FLOPs explorer, constrained generative search over
//! user-supplied lines, and a dynamic-parameter selection demo. Every
//! export returns a JSON string; failures come back as
//! `{"error": {"module", "code", "message"}}`.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use dynir_core::corpus::{render_doc_prefix, render_query_prefix, Vocabulary};
use dynir_core::dp_analysis::{diff_and_select, ModuleKind, ParamGroup, ParamSnapshot};
use dynir_core::efficiency::{de_flops, gr_flops, CostModelConfig, FlopsMode};
use dynir_core::fm_index::{FMIndexShard, ShardedIndex, StreamDoc};
use dynir_core::gen_retriever::{retrieve, BeamConfig, GenConfig, NgramScorer};
use dynir_core::Error;

fn error_json(module: &str, code: &str, message: impl std::fmt::Display) -> String {
    json!({"error": {"module": module, "code": code, "message": message.to_string()}}).to_string()
}

fn core_error(e: impl Into<Error>) -> String {
    let e = e.into();
    error_json(e.module(), e.code(), &e)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// Reference cost model for `"de"` or `"gr"`, for prefilling the editor.
#[wasm_bindgen]
pub fn preset(family: &str) -> String {
    match family {
        "gr" => to_json(&CostModelConfig::bart_large_gr()),
        _ => to_json(&CostModelConfig::bert_large_de()),
    }
}

/// FLOPs report for a cost model given as JSON. `family` is `"de"` or
/// `"gr"`; `full` adds the successor-lookup term to the beam cost.
#[wasm_bindgen]
pub fn flops(config_json: &str, family: &str, full: bool) -> String {
    let cfg = match CostModelConfig::from_json(config_json) {
        Ok(c) => c,
        Err(e) => return core_error(e),
    };
    let report = match family {
        "de" => de_flops(&cfg),
        "gr" => gr_flops(&cfg, if full { FlopsMode::FullFormula } else { FlopsMode::DecoderPasses }),
        other => return error_json("web", "WEB_FAMILY", format!("unknown family {other:?}")),
    };
    match report {
        Ok(r) => to_json(&r),
        Err(e) => core_error(e),
    }
}

/// Splits an optional leading `YYYY-MM-DD` off a line.
fn dated(line: &str) -> (Option<NaiveDate>, &str) {
    let line = line.trim();
    match line.split_once(char::is_whitespace) {
        Some((head, rest)) => match NaiveDate::parse_from_str(head, "%Y-%m-%d") {
            Ok(d) => (Some(d), rest.trim_start()),
            Err(_) => (None, line),
        },
        None => (None, line),
    }
}

/// Indexes every non-empty line of `docs` as one document (an optional
/// leading date becomes a date prefix) and runs constrained beam search for
/// `query`, asked on `query_date` when it parses as `YYYY-MM-DD`.
#[wasm_bindgen]
pub fn search(docs: &str, query: &str, query_date: &str, beam: u32, max_len: u32, k: u32) -> String {
    let lines: Vec<(String, String)> = docs
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let (date, text) = dated(l);
            let indexed = match date {
                Some(d) => render_doc_prefix(d, text),
                None => text.to_string(),
            };
            (format!("doc{}", i + 1), indexed)
        })
        .collect();
    if lines.is_empty() {
        return error_json("web", "WEB_NO_DOCS", "enter at least one document line");
    }
    let query = match NaiveDate::parse_from_str(query_date.trim(), "%Y-%m-%d") {
        Ok(d) => render_query_prefix(d, query.trim()),
        Err(_) => query.trim().to_string(),
    };
    let vocab = Vocabulary::from_texts(lines.iter().map(|(_, t)| t.as_str()).chain([query.as_str()]));
    let streams: Vec<StreamDoc> = lines
        .iter()
        .map(|(id, t)| StreamDoc {
            doc_id: id.clone(),
            symbols: vocab.encode(t),
        })
        .collect();
    let shard = match FMIndexShard::build(&streams, &vocab) {
        Ok(s) => s,
        Err(e) => return core_error(e),
    };
    let index = ShardedIndex::from_shard(shard);
    let scorer = match NgramScorer::train(&streams, &vocab) {
        Ok(s) => s,
        Err(e) => return core_error(e),
    };
    let cfg = GenConfig {
        beam: BeamConfig {
            beam_size: beam.max(1) as usize,
            max_len: max_len.max(1) as usize,
        },
        locate_limit: 1000,
    };
    let (hyps, ranked) = match retrieve(&query, &vocab, &index, &scorer, &cfg, k.max(1) as usize) {
        Ok(r) => r,
        Err(e) => return core_error(e),
    };
    let text_of = |id: &str| lines.iter().find(|(d, _)| d == id).map(|(_, t)| t.as_str());
    json!({
        "query": query,
        "hypotheses": hyps.iter().map(|h| json!({
            "text": vocab.detokenize(&h.tokens),
            "kind": h.identifier_kind,
            "lm_score": h.lm_score,
            "fm_count": h.fm_count,
        })).collect::<Vec<_>>(),
        "docs": ranked.iter().map(|d| json!({
            "doc_id": d.doc_id,
            "score": d.score,
            "text": text_of(&d.doc_id),
        })).collect::<Vec<_>>(),
    })
    .to_string()
}

const DEMO_KINDS: [ModuleKind; 6] = [
    ModuleKind::FfnFc1,
    ModuleKind::FfnFc2,
    ModuleKind::AttnQ,
    ModuleKind::AttnK,
    ModuleKind::AttnV,
    ModuleKind::AttnO,
];

/// Two random checkpoints of `layers` blocks with `width` values per
/// module. Every value moves by up to 0.01; feed-forward values move
/// `ffn_drift` times as far. Returns the selection report at `percentile`.
#[wasm_bindgen]
pub fn dp_demo(layers: u32, width: u32, ffn_drift: f64, percentile: f64, seed: u32) -> String {
    if layers == 0 || width == 0 {
        return error_json("web", "WEB_EMPTY", "layers and width must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let mut init = Vec::new();
    let mut new = Vec::new();
    for layer in 0..layers {
        for kind in DEMO_KINDS {
            let scale = if kind.is_ffn() { ffn_drift.max(0.0) as f32 } else { 1.0 };
            let a: Vec<f32> = (0..width).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let b: Vec<f32> = a
                .iter()
                .map(|&v| v + scale * rng.random_range(-0.01f32..0.01))
                .collect();
            let group = |values: Vec<f32>| ParamGroup {
                layer: layer as u16,
                kind,
                values: values.into_iter().map(f64::from).collect(),
            };
            init.push(group(a));
            new.push(group(b));
        }
    }
    match diff_and_select(&ParamSnapshot::new(init), &ParamSnapshot::new(new), percentile) {
        Ok(r) => to_json(&r),
        Err(e) => core_error(e),
    }
}
