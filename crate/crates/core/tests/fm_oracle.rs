mod common;

use std::collections::BTreeMap;

use common::{forward_stream, naive_count, random_corpus, random_pattern, Oracle, RandomCorpus};
use dynir_core::corpus::Symbol;
use dynir_core::fm_index::{FMIndexShard, ShardConfig, ShardedIndex, StreamDoc};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn located(index: &ShardedIndex, pattern: &[Symbol]) -> Vec<(String, u32, dynir_core::fm_index::IdentifierKind)> {
    let range = index.range_of(pattern).unwrap();
    let mut v: Vec<_> = index
        .locate(&range, usize::MAX)
        .unwrap()
        .into_iter()
        .map(|o| (o.doc_id, o.offset, o.kind))
        .collect();
    v.sort();
    v
}

fn successors(index: &ShardedIndex, pattern: &[Symbol]) -> (BTreeMap<Symbol, u64>, u64) {
    let s = index.successors(&index.range_of(pattern).unwrap()).unwrap();
    (s.symbols.into_iter().collect(), s.boundary)
}

fn check_against_oracle(c: &RandomCorpus, rng: &mut ChaCha8Rng, patterns: usize, sample_rate: u32) {
    let shard = FMIndexShard::build_with(
        &c.docs,
        &c.vocab,
        ShardConfig {
            shard_id: 0,
            sa_sample_rate: sample_rate,
        },
    )
    .unwrap();
    let index = ShardedIndex::from_shard(shard);
    let oracle = Oracle::new(&c.docs);
    for _ in 0..patterns {
        let p = random_pattern(rng, &oracle.stream, c.vocab.len());
        let (count, succ, loc) = oracle.answer(&p);
        assert_eq!(index.count(&p).unwrap(), count, "count {p:?}");
        assert_eq!(successors(&index, &p), succ, "successors {p:?}");
        assert_eq!(located(&index, &p), loc, "locate {p:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matches_naive_scan(seed in any::<u64>(), rate in 1u32..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_corpus(&mut rng, 3000);
        check_against_oracle(&c, &mut rng, 60, rate);
    }

    #[test]
    fn lf_is_a_single_cycle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_corpus(&mut rng, 2000);
        let shard = FMIndexShard::build(&c.docs, &c.vocab).unwrap();
        let mut rows = shard.lf_cycle();
        rows.sort_unstable();
        prop_assert_eq!(rows, (0..shard.symbol_count() as usize).collect::<Vec<_>>());
        prop_assert_eq!(shard.reconstruct_stream(), forward_stream(&c.docs).0);
    }

    #[test]
    fn shard_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_corpus(&mut rng, 3000);
        prop_assume!(c.docs.len() >= 3);
        let mut docs = c.docs.clone();
        docs.shuffle(&mut rng);
        let parts: Vec<&[StreamDoc]> = docs.chunks(docs.len().div_ceil(3)).collect();
        let build = |order: &[usize]| {
            let mut idx = ShardedIndex::new(c.vocab.fingerprint());
            for (sid, &i) in order.iter().enumerate() {
                let cfg = ShardConfig { shard_id: sid as u32, ..ShardConfig::default() };
                idx = idx.add_shard(FMIndexShard::build_with(parts[i], &c.vocab, cfg).unwrap()).unwrap();
            }
            idx
        };
        let a = build(&[0, 1, 2][..parts.len()]);
        let b = build(&[2, 1, 0][3 - parts.len()..]);
        let streams: Vec<Vec<Symbol>> = parts.iter().map(|p| forward_stream(p).0).collect();
        for _ in 0..40 {
            let p = random_pattern(&mut rng, &streams[0], c.vocab.len());
            let expect: u64 = streams.iter().map(|s| naive_count(s, &p)).sum();
            prop_assert_eq!(a.count(&p).unwrap(), expect);
            prop_assert_eq!(b.count(&p).unwrap(), expect);
            prop_assert_eq!(successors(&a, &p), successors(&b, &p));
            prop_assert_eq!(located(&a, &p), located(&b, &p));
        }
    }
}

#[test]
fn hundred_document_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut c = random_corpus(&mut rng, 20_000);
    while c.docs.len() < 100 {
        c = random_corpus(&mut rng, 20_000);
    }
    let shard = FMIndexShard::build(&c.docs, &c.vocab).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shard.fmi");
    let bytes = shard.serialize(&path).unwrap();
    assert_eq!(bytes, std::fs::metadata(&path).unwrap().len());
    let back = FMIndexShard::deserialize(&path).unwrap();
    assert_eq!(back, shard);

    let mut raw = std::fs::read(&path).unwrap();
    let mid = raw.len() / 2;
    raw[mid] ^= 0xff;
    assert!(FMIndexShard::from_bytes(&raw).is_err());
    assert!(FMIndexShard::from_bytes(&raw[..raw.len() - 3]).is_err());
}

#[test]
fn large_corpus_spot_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_corpus(&mut rng, 100_000);
    check_against_oracle(&c, &mut rng, 50, 32);
}

