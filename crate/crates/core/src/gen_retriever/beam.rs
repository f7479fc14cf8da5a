use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{GenError, Scorer};
use crate::corpus::Symbol;
use crate::fm_index::{IdentifierKind, ShardedIndex, ShardedRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 10,
            max_len: 10,
        }
    }
}

/// A generated identifier: an n-gram guaranteed to occur in the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<Symbol>,
    pub identifier_kind: IdentifierKind,
    pub lm_score: f64,
    pub fm_count: u64,
}

impl Hypothesis {
    pub fn normalized_score(&self) -> f64 {
        self.lm_score / self.tokens.len() as f64
    }

    /// Aggregation weight, `exp(lm_score / |h|)`.
    pub fn weight(&self) -> f64 {
        self.normalized_score().exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub score: f64,
    /// (hypothesis index, weight) pairs that contributed to `score`.
    pub contributing: Vec<(usize, f64)>,
}

struct Beam {
    tokens: Vec<Symbol>,
    range: ShardedRange,
    score: f64,
}

/// Higher score first; equal scores fall back to the lexicographically
/// smaller token sequence, so lower symbol ids win ties.
fn rank_order(sa: f64, ta: &[Symbol], sb: f64, tb: &[Symbol]) -> Ordering {
    sb.total_cmp(&sa).then_with(|| ta.cmp(tb))
}

/// Beam search where every step may only append a symbol that keeps the
/// generated prefix a substring of some indexed identifier stream.
pub fn constrained_beam_search(
    query: &[Symbol],
    index: &ShardedIndex,
    scorer: &dyn Scorer,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis>, GenError> {
    if cfg.beam_size == 0 || cfg.max_len == 0 {
        return Err(GenError::InvalidBeam {
            beam_size: cfg.beam_size,
            max_len: cfg.max_len,
        });
    }
    if query.is_empty() {
        return Err(GenError::EmptyQuery);
    }
    if scorer.vocab_fingerprint() != index.vocab_fingerprint() {
        return Err(GenError::FingerprintMismatch {
            index: index.vocab_fingerprint(),
            scorer: scorer.vocab_fingerprint(),
        });
    }
    let ctx = scorer.prepare(query);
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        range: index.full_range(),
        score: 0.0,
    }];
    let mut finished: Vec<Beam> = Vec::new();
    for _ in 0..cfg.max_len {
        let mut cands: Vec<(f64, usize, Symbol)> = Vec::new();
        for (bi, beam) in beams.iter().enumerate() {
            let succ = index.successors(&beam.range)?;
            let syms: Vec<Symbol> = succ
                .symbols
                .iter()
                .map(|&(s, _)| s)
                .filter(|s| !s.is_reserved())
                .collect();
            let scores = if syms.is_empty() {
                Vec::new()
            } else {
                scorer.score_next(&ctx, &beam.tokens, &syms)
            };
            let before = cands.len();
            cands.extend(
                syms.iter()
                    .zip(&scores)
                    .filter(|(_, lp)| lp.is_finite())
                    .map(|(&s, &lp)| (beam.score + lp, bi, s)),
            );
            if cands.len() == before && !beam.tokens.is_empty() {
                finished.push(Beam {
                    tokens: beam.tokens.clone(),
                    range: beam.range.clone(),
                    score: beam.score,
                });
            }
        }
        if cands.is_empty() {
            beams.clear();
            break;
        }
        let seq = |&(_, bi, s): &(f64, usize, Symbol)| {
            let mut t = beams[bi].tokens.clone();
            t.push(s);
            t
        };
        cands.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .reverse()
                .then_with(|| seq(a).cmp(&seq(b)))
        });
        cands.truncate(cfg.beam_size);
        let mut next = Vec::with_capacity(cands.len());
        for c in &cands {
            let (score, bi, s) = *c;
            next.push(Beam {
                tokens: seq(c),
                range: index.extend(&beams[bi].range, s)?,
                score,
            });
        }
        beams = next;
    }
    finished.extend(beams);
    finished.sort_by(|a, b| {
        rank_order(
            a.score / a.tokens.len() as f64,
            &a.tokens,
            b.score / b.tokens.len() as f64,
            &b.tokens,
        )
    });
    finished.truncate(cfg.beam_size);
    let mut out = Vec::with_capacity(finished.len());
    for b in finished {
        let kind = index
            .locate(&b.range, 1)?
            .first()
            .map_or(IdentifierKind::Span, |o| o.kind);
        out.push(Hypothesis {
            fm_count: b.range.count(),
            identifier_kind: kind,
            lm_score: b.score,
            tokens: b.tokens,
        });
    }
    Ok(out)
}

/// Default aggregation: each distinct hypothesis adds its weight once to
/// every document it occurs in (up to `locate_limit` occurrences); documents
/// are ranked by summed weight, ties by doc id.
pub fn aggregate_docs(
    hyps: &[Hypothesis],
    index: &ShardedIndex,
    k: usize,
    locate_limit: usize,
) -> Result<Vec<DocScore>, GenError> {
    if k < 1 {
        return Err(GenError::InvalidK(k));
    }
    let mut seen: BTreeSet<&[Symbol]> = BTreeSet::new();
    let mut acc: HashMap<String, DocScore> = HashMap::new();
    for (i, h) in hyps.iter().enumerate() {
        if h.tokens.is_empty() || !seen.insert(&h.tokens) {
            continue;
        }
        let w = h.weight();
        let range = index.range_of(&h.tokens)?;
        if range.is_empty() {
            continue;
        }
        let docs: BTreeSet<String> = index
            .locate(&range, locate_limit)?
            .into_iter()
            .map(|o| o.doc_id)
            .collect();
        for d in docs {
            let e = acc.entry(d.clone()).or_insert_with(|| DocScore {
                doc_id: d,
                score: 0.0,
                contributing: Vec::new(),
            });
            e.score += w;
            e.contributing.push((i, w));
        }
    }
    let mut ranked: Vec<DocScore> = acc.into_values().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::fm_index::{FMIndexShard, StreamDoc};
    use crate::gen_retriever::{NgramScorer, QueryContext, UniformScorer};

    fn index_of(texts: &[&str]) -> (Vocabulary, ShardedIndex, Vec<StreamDoc>) {
        let vocab = Vocabulary::from_texts(texts.iter().copied());
        let docs: Vec<StreamDoc> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| StreamDoc {
                doc_id: format!("d{i}"),
                symbols: vocab.encode(t),
            })
            .collect();
        let idx = ShardedIndex::from_shard(FMIndexShard::build(&docs, &vocab).unwrap());
        (vocab, idx, docs)
    }

    #[test]
    fn uniform_hypotheses_are_substrings() {
        let (vocab, idx, docs) = index_of(&["the cat sat"]);
        let scorer = UniformScorer::new(&vocab);
        let cfg = BeamConfig {
            beam_size: 2,
            max_len: 3,
        };
        let hyps = constrained_beam_search(&vocab.encode("cat"), &idx, &scorer, &cfg).unwrap();
        assert!(!hyps.is_empty() && hyps.len() <= 2);
        let doc = &docs[0].symbols;
        for h in &hyps {
            assert!(h.tokens.len() <= 3);
            assert!(doc.windows(h.tokens.len()).any(|w| w == h.tokens.as_slice()));
            assert!(h.fm_count >= 1);
        }
    }

    /// Scores by a fixed per-symbol table so the greedy path is hand-checkable.
    struct TableScorer(Vocabulary, HashMap<Symbol, f64>);

    impl Scorer for TableScorer {
        fn fingerprint(&self) -> crate::container::Fingerprint {
            self.0.fingerprint()
        }
        fn vocab_fingerprint(&self) -> crate::container::Fingerprint {
            self.0.fingerprint()
        }
        fn score_next(&self, _: &QueryContext, _: &[Symbol], c: &[Symbol]) -> Vec<f64> {
            c.iter().map(|s| self.1.get(s).copied().unwrap_or(-10.0)).collect()
        }
    }

    #[test]
    fn greedy_trace() {
        let (vocab, idx, _) = index_of(&["red fox runs", "red hen sits", "blue fox sits"]);
        let table: HashMap<Symbol, f64> = [("red", -1.0), ("blue", -0.5), ("fox", -0.2), ("hen", -0.1), ("runs", -2.0), ("sits", -3.0)]
            .into_iter()
            .map(|(w, s)| (vocab.lookup(w).unwrap(), s))
            .collect();
        let scorer = TableScorer(vocab.clone(), table);
        let cfg = BeamConfig {
            beam_size: 1,
            max_len: 3,
        };
        // Step 1: all six words allowed, "hen" scores best. Step 2: only
        // "sits" follows "hen". Step 3: "hen sits" ends its document.
        let hyps = constrained_beam_search(&vocab.encode("x"), &idx, &scorer, &cfg).unwrap();
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].tokens, vocab.encode("hen sits"));
        assert!((hyps[0].lm_score - (-3.1)).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_additive() {
        let (vocab, idx, _) = index_of(&["alpha beta gamma", "alpha delta"]);
        let h = |t: &str, lm: f64| Hypothesis {
            tokens: vocab.encode(t),
            identifier_kind: IdentifierKind::Span,
            lm_score: lm,
            fm_count: 1,
        };
        let hyps = vec![h("alpha", -0.5), h("beta gamma", -1.0), h("alpha", -0.5)];
        let ranked = aggregate_docs(&hyps, &idx, 10, 1000).unwrap();
        let w1 = (-0.5f64).exp();
        let w2 = (-0.5f64).exp();
        assert_eq!(ranked[0].doc_id, "d0");
        assert!((ranked[0].score - (w1 + w2)).abs() < 1e-12);
        assert_eq!(ranked[1].doc_id, "d1");
        assert!((ranked[1].score - w1).abs() < 1e-12);
        assert!(matches!(aggregate_docs(&hyps, &idx, 0, 10), Err(GenError::InvalidK(0))));
    }

    #[test]
    fn errors_and_determinism() {
        let (vocab, idx, docs) = index_of(&["one two three", "two three four"]);
        let scorer = NgramScorer::train(&docs, &vocab).unwrap();
        let cfg = BeamConfig::default();
        assert!(matches!(
            constrained_beam_search(&[], &idx, &scorer, &cfg),
            Err(GenError::EmptyQuery)
        ));
        let other = Vocabulary::from_texts(["zzz"]);
        assert!(matches!(
            constrained_beam_search(&vocab.encode("two"), &idx, &UniformScorer::new(&other), &cfg),
            Err(GenError::FingerprintMismatch { .. })
        ));
        let a = constrained_beam_search(&vocab.encode("two three"), &idx, &scorer, &cfg).unwrap();
        let b = constrained_beam_search(&vocab.encode("two three"), &idx, &scorer, &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[0].normalized_score() >= w[1].normalized_score());
        }
    }
}
