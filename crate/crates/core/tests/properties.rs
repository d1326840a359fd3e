use std::collections::HashMap;

use maplet::cache::{self, CacheConfig};
use maplet::codec::{Bitset, Counter, MergeOperator, SetBits};
use maplet::filter::FilterParams;
use maplet::format::{self, Layout};
use maplet::kmer::{count_kmers, BuildOptions, KmerConfig, SequenceRecord};
use maplet::maplet::{Maplet, Mode};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Op {
    Insert(u16, u8),
    Delete(u16),
    Query,
}

fn ops(keys: u16) -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        4 => (0..keys, 0u8..8).prop_map(|(k, v)| Op::Insert(k, v)),
        2 => (0..keys).prop_map(Op::Delete),
        1 => Just(Op::Query),
    ];
    prop::collection::vec(op, 1..400)
}

/// Narrow fingerprints so that distinct keys collide often.
fn narrow(value_bits: u8) -> FilterParams {
    FilterParams::new(6, 3, value_bits).unwrap().with_seed(17)
}

/// Exact map: every live (key, value) instance.
type Oracle = HashMap<u16, Vec<u64>>;

fn fold<O: MergeOperator>(op: &O, vals: &[O::Value]) -> Option<O::Value> {
    vals.iter().cloned().reduce(|a, b| op.combine_clamped(&a, &b))
}

fn check_one_sided<O: MergeOperator>(
    m: &Maplet<O>,
    oracle: &HashMap<u16, Vec<O::Value>>,
    keys: u16,
) -> Result<(), TestCaseError> {
    let op = m.operator();
    for k in 0..keys {
        let truth = oracle.get(&k).and_then(|v| fold(op, v));
        let got = m.query(&(k as u64));
        match (truth, got) {
            (Some(t), Some(g)) => prop_assert!(op.order_leq(&t, &g), "key {k}: {t:?} not below {g:?}"),
            (Some(t), None) => prop_assert!(false, "false negative for key {k} (true {t:?})"),
            (None, _) => {}
        }
    }
    Ok(())
}

fn run_counter(mode: Mode, script: &[Op]) -> Result<(), TestCaseError> {
    let op = Counter::new(12).unwrap();
    let mut m = Maplet::new(narrow(12), op, mode).unwrap();
    let mut oracle: Oracle = HashMap::new();
    for step in script {
        match *step {
            Op::Insert(k, v) => {
                let v = v as u64 + 1;
                m.insert(&(k as u64), &v).unwrap();
                oracle.entry(k).or_default().push(v);
            }
            Op::Delete(k) => {
                let Some(v) = oracle.get_mut(&k).and_then(|vs| vs.pop()) else { continue };
                m.delete(&(k as u64), &v).unwrap();
            }
            Op::Query => {}
        }
    }
    oracle.retain(|_, v| !v.is_empty());
    check_one_sided(&m, &oracle, 300)
}

fn run_bitset(script: &[Op]) -> Result<(), TestCaseError> {
    let op = Bitset::new(8).unwrap();
    let mut m = Maplet::new(narrow(8), op, Mode::Multiset).unwrap();
    let mut oracle: HashMap<u16, Vec<SetBits>> = HashMap::new();
    for step in script {
        match *step {
            Op::Insert(k, v) => {
                let s = op.singleton(v as u32).unwrap();
                m.insert(&(k as u64), &s).unwrap();
                oracle.entry(k).or_default().push(s);
            }
            Op::Delete(k) => {
                let Some(s) = oracle.get_mut(&k).and_then(|vs| vs.pop()) else { continue };
                m.delete(&(k as u64), &s).unwrap();
            }
            Op::Query => {}
        }
    }
    oracle.retain(|_, v| !v.is_empty());
    check_one_sided(&m, &oracle, 300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merged_counter_is_one_sided(script in ops(200)) {
        run_counter(Mode::MergedSlot, &script)?;
    }

    #[test]
    fn multiset_counter_is_one_sided(script in ops(200)) {
        run_counter(Mode::Multiset, &script)?;
    }

    #[test]
    fn multiset_bitset_is_one_sided(script in ops(200)) {
        run_bitset(&script)?;
    }

    #[test]
    fn queries_survive_resize(keys in prop::collection::vec((0u64..5000, 1u64..50), 1..300)) {
        let op = Counter::new(16).unwrap();
        let params = FilterParams::new(6, 12, 16).unwrap();
        let mut m = Maplet::new(params, op, Mode::MergedSlot).unwrap();
        for (k, v) in &keys {
            m.insert(k, v).unwrap();
        }
        let before: Vec<_> = (0..5100u64).map(|k| m.query(&k)).collect();
        let mut grown = m.clone();
        grown.resize_double().unwrap();
        grown.resize_double().unwrap();
        let after: Vec<_> = (0..5100u64).map(|k| grown.query(&k)).collect();
        prop_assert_eq!(before, after);
        prop_assert_eq!(m.enumerate().collect::<Vec<_>>(), grown.enumerate().collect::<Vec<_>>());
    }

    #[test]
    fn merge_is_pointwise_combine(
        a in prop::collection::vec((0u64..2000, 1u64..100), 0..200),
        b in prop::collection::vec((0u64..2000, 1u64..100), 0..200),
    ) {
        let op = Counter::new(16).unwrap();
        let params = FilterParams::new(7, 8, 16).unwrap();
        let build = |items: &[(u64, u64)]| {
            let mut m = Maplet::new(params, op, Mode::MergedSlot).unwrap();
            for (k, v) in items {
                m.insert(k, v).unwrap();
            }
            m
        };
        let (ma, mb) = (build(&a), build(&b));
        let merged = Maplet::merge(&ma, &mb).unwrap();
        for k in 0..2100u64 {
            let expect = match (ma.query(&k), mb.query(&k)) {
                (Some(x), Some(y)) => Some(op.combine_clamped(&x, &y)),
                (x, y) => x.or(y),
            };
            prop_assert_eq!(merged.query(&k), expect, "key {}", k);
        }
    }

    #[test]
    fn serialization_is_a_fixed_point(
        items in prop::collection::vec((any::<u64>(), 0u32..8), 0..500),
        sparse in any::<bool>(),
    ) {
        let op = Bitset::new(8).unwrap();
        let mut m = Maplet::with_capacity(500, 0.01, op, Mode::Multiset).unwrap();
        for (k, id) in &items {
            m.insert(k, &op.singleton(*id).unwrap()).unwrap();
        }
        let layout = if sparse { Layout::Sparse } else { Layout::Dense };
        let bytes = format::to_bytes(&m, layout);
        let back: Maplet<Bitset> = format::from_bytes(&bytes).unwrap();
        prop_assert_eq!(format::to_bytes(&back, layout), bytes);
        prop_assert_eq!(back.enumerate().collect::<Vec<_>>(), m.enumerate().collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cache_deltas_match_rebuild(
        peers in 1u32..10,
        cache_size in 20u64..200,
        churn_frac in 0.0f64..0.5,
        refresh in 1u32..5,
        rounds in 1u32..12,
        seed in any::<u64>(),
    ) {
        let cfg = CacheConfig {
            peers,
            cache_size,
            churn: (cache_size as f64 * churn_frac) as u64,
            refresh,
            rounds,
            lookups: 2000,
            maplet_epsilon: 0.05,
            filter_epsilon: 0.05,
            seed,
            ..CacheConfig::default()
        };
        let out = cache::simulate(&cfg).unwrap();
        prop_assert_eq!(out.violations, 0);
        prop_assert_eq!(out.maplet.false_negatives, 0);
        prop_assert_eq!(out.filter.false_negatives, 0);
        prop_assert_eq!(out.maplet.probes, out.maplet.lookups);
        prop_assert_eq!(out.filter.probes, out.filter.lookups * peers as u64);
    }

    #[test]
    fn approximate_kmer_counts_never_undercount(
        seq in prop::collection::vec(prop::sample::select(b"ACGTN".to_vec()), 50..2000),
        k in 3u8..12,
    ) {
        let cfg = KmerConfig { k, ..KmerConfig::default() };
        let opts = BuildOptions { epsilon: 0.2, expected_items: seq.len() as u64, ..BuildOptions::default() };
        let rec = SequenceRecord { id: "s".into(), seq: seq.clone() };
        let counts = count_kmers([Ok(rec)], &cfg, &opts).unwrap();
        let mut truth: HashMap<u64, u64> = HashMap::new();
        for w in cfg.kmers(&seq) {
            *truth.entry(w).or_default() += 1;
        }
        for (w, c) in truth {
            let got = counts.query_word(w);
            prop_assert!(got.is_some_and(|g| g >= c), "word {w:x}: {got:?} < {c}");
        }
    }
}
