//! Synthetic timestamped corpus for the date-prefix bias experiment.
//!
//! Every "new" topic has several 2019 versions of the same report that
//! differ only in the reported value, plus one 2020 version. Its query is
//! asked in 2020 and only the 2020 version is gold, so the year in the
//! query prefix is the only lexical cue that separates gold from the
//! near-duplicates.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpora, EvalSets};
use crate::corpus::{default_cutover, ymd, Document, Query, Split};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ven", "tor", "zu", "pel", "dor", "qui", "sa", "nex", "bri", "fal", "gor", "hul", "jin",
    "wex", "osk", "tam", "ule", "yar", "cid", "mur",
];
const ATTRIBUTES: [&str; 10] = [
    "capital", "mayor", "coach", "chairman", "budget", "winner", "director", "mascot", "anthem", "leader",
];
const NOUNS: [&str; 8] = ["province", "club", "council", "company", "festival", "league", "agency", "museum"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub topics_initial: usize,
    pub topics_new: usize,
    /// 2019 near-duplicates per new topic.
    pub old_versions: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics_initial: 40,
            topics_new: 40,
            old_versions: 8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpora: Corpora,
    pub evals: EvalSets,
}

struct Gen {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Gen {
    fn word(&mut self) -> String {
        loop {
            let n = self.rng.random_range(2..=3);
            let w: String = (0..n)
                .map(|_| *SYLLABLES.choose(&mut self.rng).unwrap())
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn id(&mut self) -> String {
        loop {
            let id = format!("p{:08x}", self.rng.random::<u32>());
            if self.used.insert(id.clone()) {
                return id;
            }
        }
    }

    fn date(&mut self, year: i32, months: std::ops::RangeInclusive<u32>) -> NaiveDate {
        ymd(year, self.rng.random_range(months), self.rng.random_range(1..=28))
    }
}

fn report(entity: &str, noun: &str, attr: &str, value: &str) -> String {
    format!("{entity} {noun} report: the {attr} of the {entity} {noun} is {value}, officials said.")
}

fn question(entity: &str, noun: &str, attr: &str) -> String {
    format!("What is the {attr} of the {entity} {noun}?")
}

pub fn timestamp_corpus(cfg: &SyntheticConfig) -> SyntheticData {
    let cutover = default_cutover();
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        used: HashSet::new(),
    };
    let mut initial = Vec::new();
    let mut new = Vec::new();
    let mut q_initial = Vec::new();
    let mut q_new = Vec::new();
    let topic = |g: &mut Gen| {
        let entity = g.word();
        let noun = *NOUNS.choose(&mut g.rng).unwrap();
        let attr = *ATTRIBUTES.choose(&mut g.rng).unwrap();
        (entity, noun, attr)
    };
    for i in 0..cfg.topics_initial {
        let (entity, noun, attr) = topic(&mut g);
        let value = g.word();
        let date = g.date(2019, 1..=11);
        let id = g.id();
        initial.push(Document::new(id.clone(), report(&entity, noun, attr, &value), date, cutover));
        q_initial.push(Query {
            qid: format!("qi{i:04}"),
            question: question(&entity, noun, attr),
            asked_date: date + Duration::days(g.rng.random_range(1..=20)),
            gold_doc_ids: [id].into(),
            gold_answers: vec![value],
            split: Split::Initial,
            is_pseudo: false,
        });
    }
    for i in 0..cfg.topics_new {
        let (entity, noun, attr) = topic(&mut g);
        for _ in 0..cfg.old_versions {
            let value = g.word();
            let date = g.date(2019, 1..=12);
            let id = g.id();
            initial.push(Document::new(id, report(&entity, noun, attr, &value), date, cutover));
        }
        let value = g.word();
        let date = g.date(2020, 1..=6);
        let id = g.id();
        new.push(Document::new(id.clone(), report(&entity, noun, attr, &value), date, cutover));
        q_new.push(Query {
            qid: format!("qn{i:04}"),
            question: question(&entity, noun, attr),
            asked_date: date + Duration::days(g.rng.random_range(1..=20)),
            gold_doc_ids: [id].into(),
            gold_answers: vec![value],
            split: Split::New,
            is_pseudo: false,
        });
    }
    SyntheticData {
        corpora: Corpora { initial, new },
        evals: EvalSets {
            q_initial,
            q_new: Some(q_new),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig {
            topics_initial: 5,
            topics_new: 4,
            old_versions: 3,
            seed: 9,
        };
        let a = timestamp_corpus(&cfg);
        let b = timestamp_corpus(&cfg);
        assert_eq!(a.corpora, b.corpora);
        assert_eq!(a.corpora.initial.len(), 5 + 4 * 3);
        assert_eq!(a.corpora.new.len(), 4);
        assert!(a.corpora.new.iter().all(|d| d.split == Split::New));
        assert!(a.corpora.initial.iter().all(|d| d.split == Split::Initial));
        let qn = a.evals.q_new.as_ref().unwrap();
        assert!(qn.iter().all(|q| q.asked_date.format("%Y").to_string() == "2020"));
    }
}
