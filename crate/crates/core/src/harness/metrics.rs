use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// 1 iff any gold id is among the first `k` results.
pub fn hits_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> Result<u8, HarnessError> {
    if k < 1 {
        return Err(HarnessError::InvalidK(k));
    }
    if gold.is_empty() {
        return Err(HarnessError::EmptyGold(String::new()));
    }
    Ok(u8::from(ranked.iter().take(k).any(|d| gold.contains(d))))
}

/// Case-folded text with every whitespace run collapsed to one space.
pub fn normalize_for_match(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff any of the first `k` passages contains any answer as a substring,
/// after case folding and whitespace collapsing.
pub fn answer_recall_at_k<S: AsRef<str>>(passages: &[S], answers: &[String], k: usize) -> Result<u8, HarnessError> {
    if k < 1 {
        return Err(HarnessError::InvalidK(k));
    }
    let answers: Vec<String> = answers
        .iter()
        .map(|a| normalize_for_match(a))
        .filter(|a| !a.is_empty())
        .collect();
    if answers.is_empty() {
        return Err(HarnessError::EmptyAnswers);
    }
    Ok(u8::from(passages.iter().take(k).any(|p| {
        let p = normalize_for_match(p.as_ref());
        answers.iter().any(|a| p.contains(a.as_str()))
    })))
}

/// Mean Hits@k and AnswerRecall@k of one evaluation set, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub queries: usize,
    /// Queries that carry gold answers; AnswerRecall averages over these.
    pub answer_queries: usize,
    pub hits: BTreeMap<usize, f64>,
    pub answer_recall: BTreeMap<usize, f64>,
}

impl MetricTable {
    /// Per-query indicator rows to percentages.
    pub fn from_indicators(ks: &[usize], hits: &[Vec<u8>], recall: &[Option<Vec<u8>>]) -> Self {
        let pct = |sum: u64, n: usize| if n == 0 { 0.0 } else { 100.0 * sum as f64 / n as f64 };
        let answered: Vec<&Vec<u8>> = recall.iter().flatten().collect();
        let mut h = BTreeMap::new();
        let mut r = BTreeMap::new();
        for (j, &k) in ks.iter().enumerate() {
            let hs: u64 = hits.iter().map(|row| u64::from(row[j])).sum();
            h.insert(k, pct(hs, hits.len()));
            let rs: u64 = answered.iter().map(|row| u64::from(row[j])).sum();
            r.insert(k, pct(rs, answered.len()));
        }
        MetricTable {
            queries: hits.len(),
            answer_queries: answered.len(),
            hits: h,
            answer_recall: r,
        }
    }

    /// Unweighted mean of two tables, per metric and k.
    pub fn mean(a: &MetricTable, b: &MetricTable) -> MetricTable {
        let avg = |x: &BTreeMap<usize, f64>, y: &BTreeMap<usize, f64>| {
            x.iter()
                .filter_map(|(k, v)| y.get(k).map(|w| (*k, (v + w) / 2.0)))
                .collect()
        };
        MetricTable {
            queries: a.queries + b.queries,
            answer_queries: a.answer_queries + b.answer_queries,
            hits: avg(&a.hits, &b.hits),
            answer_recall: avg(&a.answer_recall, &b.answer_recall),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn hits_boundaries() {
        let ranked = ids(10);
        let gold5: BTreeSet<String> = ["d5".to_string()].into();
        let gold6: BTreeSet<String> = ["d6".to_string()].into();
        assert_eq!(hits_at_k(&ranked, &gold5, 5).unwrap(), 1);
        assert_eq!(hits_at_k(&ranked, &gold6, 5).unwrap(), 0);
        assert!(hits_at_k(&ranked, &BTreeSet::new(), 5).is_err());
        assert!(hits_at_k(&ranked, &gold5, 0).is_err());
    }

    #[test]
    fn answer_normalization() {
        let passages = ["The FTSE 100  closed at 5,763 points", "unrelated"];
        assert_eq!(answer_recall_at_k(&passages, &["5,763".into()], 1).unwrap(), 1);
        assert_eq!(answer_recall_at_k(&passages, &["ftse 100 closed".into()], 1).unwrap(), 1);
        assert_eq!(answer_recall_at_k(&passages, &["unrelated".into()], 1).unwrap(), 0);
        assert!(answer_recall_at_k(&passages, &[], 1).is_err());
    }

    #[test]
    fn mean_is_exact() {
        let ks = [5, 10];
        let a = MetricTable::from_indicators(&ks, &[vec![1, 1], vec![0, 1], vec![0, 0]], &[None, None, None]);
        let b = MetricTable::from_indicators(&ks, &[vec![1, 1]], &[Some(vec![0, 1])]);
        let m = MetricTable::mean(&a, &b);
        assert_eq!(m.hits[&5], (100.0 / 3.0 + 100.0) / 2.0);
        assert_eq!(m.hits[&10], (200.0 / 3.0 + 100.0) / 2.0);
        assert_eq!(a.answer_queries, 0);
        assert_eq!(b.answer_recall[&10], 100.0);
    }
}
