//! End-to-end acceptance checks. Each test prints one PASS or FAIL line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::time::{Duration, Instant};

use maplet::bench::{bench_fpr, bench_strong};
use maplet::cache::{self, CacheConfig};
use maplet::codec::{Bitset, Counter, MergeOperator, Presence, SetBits};
use maplet::filter::{FilterCore, FilterParams, Fingerprint};
use maplet::format::{self, AnyMaplet, Layout};
use maplet::kmer::{build_color_index, count_kmers, BuildOptions, KmerConfig, SequenceRecord};
use maplet::lsm::{self, analytic_costs, Compaction, LsmConfig, LsmDataset, LsmIndexes};
use maplet::maplet::{Maplet, Mode};
use maplet::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn verdict(n: u32, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = run();
    let secs = start.elapsed().as_secs_f64();
    let outcome = outcome.and_then(|d| {
        if start.elapsed() > limit {
            Err(format!("{d}; runtime {secs:.1}s over {}s", limit.as_secs()))
        } else {
            Ok(d)
        }
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let line = format!("{tag} criterion {n:>2} {name}: {detail} [{secs:.1}s]\n");
    // Written to the raw handle so the line is not swallowed by output capture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = outcome {
        panic!("criterion {n} failed: {e}");
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. One-sided error over randomized operation sequences.

const KEYS: u64 = 2000;
const OPS: usize = 10_000;

/// Runs one sequence; returns the number of checks made.
fn one_sided_run<O: MergeOperator>(
    op: O,
    mode: Mode,
    seed: u64,
    value: impl Fn(&mut ChaCha8Rng) -> O::Value,
) -> Result<u64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = FilterParams::new(8, 8, 0).unwrap().with_seed(seed);
    let mut m = Maplet::new(params, op.clone(), mode).unwrap();
    let mut oracle: HashMap<u64, Vec<O::Value>> = HashMap::new();
    let deletable = mode == Mode::Multiset || op.invertible();
    let mut checks = 0u64;
    let check = |m: &Maplet<O>, oracle: &HashMap<u64, Vec<O::Value>>, k: u64| -> Result<(), String> {
        let truth = oracle
            .get(&k)
            .and_then(|vs| vs.iter().cloned().reduce(|a, b| op.combine_clamped(&a, &b)));
        match (truth, m.query(&k)) {
            (Some(t), Some(g)) if !op.order_leq(&t, &g) => Err(format!("seed {seed} key {k}: {t:?} not below {g:?}")),
            (Some(t), None) => Err(format!("seed {seed} key {k}: false negative, true value {t:?}")),
            _ => Ok(()),
        }
    };
    for _ in 0..OPS {
        let k = rng.random_range(0..KEYS);
        match rng.random_range(0..10) {
            0..=4 => {
                let v = value(&mut rng);
                m.insert(&k, &v).map_err(|e| format!("insert: {e}"))?;
                oracle.entry(k).or_default().push(v);
            }
            5..=7 => {
                let Some(v) = oracle.get_mut(&k).and_then(|vs| vs.pop()) else { continue };
                match m.delete(&k, &v) {
                    Ok(()) => {}
                    Err(Error::UnsupportedDelete) if !deletable => oracle.get_mut(&k).unwrap().push(v),
                    Err(e) => return Err(format!("delete: {e}")),
                }
                if oracle[&k].is_empty() {
                    oracle.remove(&k);
                }
            }
            _ => {
                check(&m, &oracle, k)?;
                checks += 1;
            }
        }
    }
    for k in 0..KEYS {
        check(&m, &oracle, k)?;
        checks += 1;
    }
    Ok(checks)
}

#[test]
fn criterion_01_one_sided_error() {
    verdict(1, "one-sided error", Duration::from_secs(60), || {
        let counter = Counter::new(12).unwrap();
        let bitset = Bitset::new(8).unwrap();
        let mut checks = 0;
        for seq in 0..100u64 {
            let mode = if seq % 2 == 0 { Mode::MergedSlot } else { Mode::Multiset };
            checks += if seq % 4 < 2 {
                one_sided_run(counter, mode, seq, |r| r.random_range(1..20))?
            } else {
                one_sided_run(bitset, mode, seq, |r| SetBits(1 << r.random_range(0..8)))?
            };
        }
        Ok(format!("100 sequences x {OPS} ops, {checks} checks, 0 violations"))
    });
}

// 2. Error rate.

#[test]
fn criterion_02_error_rate() {
    verdict(2, "error rate", Duration::from_secs(60), || {
        let eps = 2f64.powi(-10);
        let r = bench_fpr(100_000, eps, 1_000_000, 2).map_err(|e| e.to_string())?;
        ensure(r.ci_high <= 1.5 * eps, || format!("99% upper bound {:.3e} > {:.3e}", r.ci_high, 1.5 * eps))?;
        Ok(format!("fpr {:.3e} (99% CI {:.3e}..{:.3e}) <= {:.3e}", r.rate(), r.ci_low, r.ci_high, 1.5 * eps))
    });
}

// 3. Strong maplet property.

#[test]
fn criterion_03_strong_property() {
    verdict(3, "strong maplet property", Duration::from_secs(300), || {
        let eps = 2f64.powi(-5);
        let r = bench_strong(100_000, eps, 10_000_000, 3).map_err(|e| e.to_string())?;
        let (t2, t3) = (r.tail(2), r.tail(3));
        ensure(r.histogram.iter().sum::<u64>() == r.probes, || "histogram does not sum to probes".into())?;
        ensure(r.histogram.get(2).copied().unwrap_or(0) > 0, || "no l=2 events observed".into())?;
        ensure(t2 <= 2.0 * eps * eps, || format!("Pr[l>=2] {t2:.3e} > {:.3e}", 2.0 * eps * eps))?;
        ensure(t3 <= 4.0 * eps.powi(3), || format!("Pr[l>=3] {t3:.3e} > {:.3e}", 4.0 * eps.powi(3)))?;
        Ok(format!(
            "Pr[l>=2] {t2:.3e} <= {:.3e}, Pr[l>=3] {t3:.3e} <= {:.3e}, histogram {:?}",
            2.0 * eps * eps,
            4.0 * eps.powi(3),
            r.histogram
        ))
    });
}

// 4. Space bound.

/// Declared layout: per slot `r + v` payload bits plus 2 metadata bits, and
/// per 64-slot block a 16-bit offset.
fn layout_bits(q: u8, r: u8, v: u8) -> u64 {
    let slots = 1u64 << q;
    let blocks = slots.div_ceil(64);
    slots * (r as u64 + v as u64) + slots * 2 + blocks * 16
}

fn bits_per_item_at_95(q: u8, r: u8, v: u8) -> Result<(f64, u64), String> {
    let params = FilterParams::new(q, r, v).unwrap();
    let mut core = FilterCore::new(params);
    let n = (0.95 * (1u64 << q) as f64).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mask = (1u64 << (q + r)) - 1;
    for _ in 0..n {
        core.insert_fp(Fingerprint::new(rng.random::<u64>() & mask), 0).map_err(|e| e.to_string())?;
    }
    let bits = core.space_bits();
    ensure(bits == layout_bits(q, r, v), || format!("space_bits {bits} != layout {}", layout_bits(q, r, v)))?;
    Ok((bits as f64 / n as f64, bits))
}

#[test]
fn criterion_04_space_bound() {
    verdict(4, "space bound", Duration::from_secs(60), || {
        let (plain, _) = bits_per_item_at_95(16, 9, 0)?;
        let (valued, _) = bits_per_item_at_95(16, 9, 8)?;
        ensure(plain <= 12.5, || format!("{plain:.3} bits/item > 12.5"))?;
        ensure(valued - plain <= 8.5, || format!("values add {:.3} bits/item > 8.5", valued - plain))?;
        Ok(format!("r=9 v=0: {plain:.3} bits/item; v=8 adds {:.3}; space_bits equals layout exactly", valued - plain))
    });
}

// 5. Resize and merge transparency.

#[test]
fn criterion_05_resize_merge() {
    verdict(5, "resize/merge transparency", Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = FilterParams::new(8, 16, 6).unwrap();
        let mut core = FilterCore::new(params);
        let mut oracle: Vec<(u64, u64)> = Vec::new();
        let mask = (1u64 << 24) - 1;
        let mut resizes = 0;
        loop {
            let target = (0.9 * core.num_slots() as f64) as u64;
            while core.len() < target {
                let (fp, payload) = (rng.random::<u64>() & mask, rng.random_range(0..64));
                core.insert_fp(Fingerprint::new(fp), payload).map_err(|e| e.to_string())?;
                oracle.push((fp, payload));
            }
            let before: Vec<(u64, u64)> = core.enumerate().map(|(f, p)| (f.raw(), p)).collect();
            let mut sorted = oracle.clone();
            sorted.sort_unstable();
            let mut got = before.clone();
            got.sort_unstable();
            ensure(got == sorted, || format!("enumerate differs from oracle at q={}", core.params().quotient_bits()))?;
            if core.params().quotient_bits() == 14 {
                break;
            }
            core = core.resize_double().map_err(|e| e.to_string())?;
            resizes += 1;
            let after: Vec<(u64, u64)> = core.enumerate().map(|(f, p)| (f.raw(), p)).collect();
            ensure(after == before, || format!("enumerate changed by resize to q={}", core.params().quotient_bits()))?;
            core.check_invariants()?;
        }

        let op = Counter::new(16).unwrap();
        let mparams = FilterParams::new(10, 8, 16).unwrap().with_seed(55);
        let mut sums: BTreeMap<u64, u64> = BTreeMap::new();
        let mut inputs = Vec::new();
        for _ in 0..2 {
            let mut m = Maplet::new(mparams, op, Mode::MergedSlot).unwrap();
            for _ in 0..1000 {
                let (k, v) = (rng.random_range(0..5000u64), rng.random_range(1..100u64));
                m.insert(&k, &v).map_err(|e| e.to_string())?;
                *sums.entry(m.fingerprint(&k).raw()).or_default() += v;
            }
            inputs.push(m);
        }
        let merged = Maplet::merge(&inputs[0], &inputs[1]).map_err(|e| e.to_string())?;
        let got: BTreeMap<u64, u64> = merged.enumerate().map(|(f, v)| (f.raw(), v)).collect();
        ensure(got == sums, || "merged contents differ from pointwise sums".into())?;
        for k in 0..5000u64 {
            let expect = match (inputs[0].query(&k), inputs[1].query(&k)) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            };
            ensure(merged.query(&k) == expect, || format!("merged query of key {k}"))?;
        }
        Ok(format!("{resizes} resizes q=8..14 ({} items) preserved enumerate; merge of 2x1000 items matches pointwise sums", oracle.len()))
    });
}

// 6. k-mer exactness.

fn canonical_words(seq: &[u8], k: usize) -> Vec<u64> {
    let code = |b: u8| match b {
        b'A' => 0u64,
        b'C' => 1,
        b'G' => 2,
        _ => 3,
    };
    seq.windows(k)
        .map(|w| {
            let fwd = w.iter().fold(0u64, |acc, &b| acc << 2 | code(b));
            let rev = w.iter().rev().fold(0u64, |acc, &b| acc << 2 | (3 - code(b)));
            fwd.min(rev)
        })
        .collect()
}

#[test]
fn criterion_06_kmer_exactness() {
    verdict(6, "k-mer exactness", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let genome: Vec<u8> = (0..100_000).map(|_| b"ACGT"[rng.random_range(0..4)]).collect();
        let k = 21;
        let cfg = KmerConfig { k: k as u8, canonical: true, exact: true, min_count: 1 };
        let opts = BuildOptions { expected_items: 100_000, threads: 4, ..BuildOptions::default() };

        let mut truth: HashMap<u64, u64> = HashMap::new();
        for w in canonical_words(&genome, k) {
            *truth.entry(w).or_default() += 1;
        }
        let rec = SequenceRecord { id: "g".into(), seq: genome.clone() };
        let counts = count_kmers([Ok(rec)], &cfg, &opts).map_err(|e| e.to_string())?;
        ensure(counts.maplet().len() == truth.len() as u64, || "distinct k-mer count differs".into())?;
        for (w, c) in &truth {
            ensure(counts.query_word(*w) == Some(*c), || format!("count of {w:x}: {:?} != {c}", counts.query_word(*w)))?;
        }

        let windows = [(0usize, 40_000usize), (25_000, 60_000), (50_000, 100_000), (90_000, 100_000)];
        let mut colors: HashMap<u64, u64> = HashMap::new();
        let mut experiments = Vec::new();
        for (id, &(lo, hi)) in windows.iter().enumerate() {
            for w in canonical_words(&genome[lo..hi], k) {
                *colors.entry(w).or_default() |= 1 << id;
            }
            let rec = SequenceRecord { id: format!("e{id}"), seq: genome[lo..hi].to_vec() };
            experiments.push((format!("e{id}"), vec![Ok(rec)]));
        }
        let index = build_color_index(experiments, &cfg, &opts, None).map_err(|e| e.to_string())?;
        ensure(index.maplet().len() == colors.len() as u64, || "distinct colored k-mer count differs".into())?;
        for (w, bits) in &colors {
            ensure(index.query_word(*w) == Some(SetBits(*bits)), || format!("color of {w:x}"))?;
        }
        let mut absent = 0;
        while absent < 10_000 {
            let w = rng.random::<u64>() & ((1 << 42) - 1);
            let w = canonical_words(&maplet::kmer::decode_kmer(w, 21).into_bytes(), k)[0];
            if truth.contains_key(&w) {
                continue;
            }
            absent += 1;
            ensure(counts.query_word(w).is_none() && index.query_word(w).is_none(), || format!("absent {w:x} reported"))?;
        }
        Ok(format!("{} distinct k-mers counted exactly; {} colored k-mers match; 10000 absent k-mers report nothing", truth.len(), colors.len()))
    });
}

// 7. LSM formulas.

#[test]
fn criterion_07_lsm_formulas() {
    verdict(7, "LSM formulas", Duration::from_secs(120), || {
        for g in [2u32, 4, 8, 16] {
            for h in 1u32..=5 {
                let n = (g as f64).powi(h as i32);
                let levels = (n.ln() / (g as f64).ln()).round() as u64;
                let gl = g as u64 * levels;
                let lv = analytic_costs(Compaction::Leveled, g, h);
                let st = analytic_costs(Compaction::SizeTiered, g, h);
                ensure(lv.write_amp == gl && lv.read_mult == levels, || format!("leveled g={g} h={h}: {lv:?}"))?;
                ensure(st.write_amp == levels && st.read_mult == gl, || format!("size-tiered g={g} h={h}: {st:?}"))?;
            }
        }
        let cfg = LsmConfig {
            growth: 8,
            levels: 3,
            compaction: Compaction::SizeTiered,
            present_fraction: 0.0,
            queries: 1_000_000,
            seed: 7,
            ..LsmConfig::default()
        };
        let out = lsm::simulate(&cfg).map_err(|e| e.to_string())?;
        let q = out.queries as f64;
        let base = out.baseline.probes as f64 / q;
        let mapl = out.maplet.probes as f64 / q;
        ensure((base / 24.0 - 1.0).abs() <= 0.05, || format!("baseline probes {base} vs 24"))?;
        ensure((mapl / 3.0 - 1.0).abs() <= 0.05, || format!("maplet probes {mapl} vs 3"))?;
        ensure(out.baseline.misses == 0 && out.maplet.misses == 0, || "false negatives".into())?;
        Ok(format!("closed forms hold for 20 (g,h) pairs; 1e6 queries: {base:.3} filter probes (24), {mapl:.3} maplet probes (3)"))
    });
}

// 8. Equal-memory calibration.

#[test]
fn criterion_08_equal_memory() {
    verdict(8, "equal-memory calibration", Duration::from_secs(60), || {
        let cfg = LsmConfig {
            growth: 8,
            levels: 3,
            filter_epsilon: 2f64.powi(-10),
            maplet_epsilon: Some(2f64.powi(-7)),
            seed: 8,
            ..LsmConfig::default()
        };
        let data = LsmDataset::generate(&cfg).map_err(|e| e.to_string())?;
        let idx = LsmIndexes::build(&cfg, &data).map_err(|e| e.to_string())?;
        let (f, m) = (idx.filter_bits() as f64, idx.maplet_bits() as f64);
        let ratio = m / f;
        ensure((ratio - 1.0).abs() <= 0.10, || format!("maplet/filter bits {ratio:.4}"))?;
        Ok(format!("filters {f} bits, maplets {m} bits, ratio {ratio:.4}"))
    });
}

// 9. Cache-sim delta consistency.

#[test]
fn criterion_09_cache_deltas() {
    verdict(9, "cache-sim delta consistency", Duration::from_secs(120), || {
        let cfg = CacheConfig { rounds: 100, refresh: 1, verify: true, seed: 9, ..CacheConfig::default() };
        let out = cache::simulate(&cfg).map_err(|e| e.to_string())?;
        ensure(out.refreshes == 100, || format!("{} refreshes", out.refreshes))?;
        ensure(out.violations == 0, || format!("{} consistency violations", out.violations))?;
        ensure(out.maplet.probes == out.maplet.lookups && out.maplet.max_probes == 1, || "maplet probes".into())?;
        ensure(out.filter.probes == out.filter.lookups * cfg.peers as u64, || "filter probes".into())?;
        ensure(out.maplet.false_negatives == 0 && out.filter.false_negatives == 0, || "false negatives".into())?;
        Ok(format!(
            "100 rounds, 0 violations; probes per lookup 1 (maplet) vs {} (filters)",
            cfg.peers
        ))
    });
}

// 10. Serialization.

#[test]
fn criterion_10_serialization() {
    verdict(10, "serialization", Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let op = Counter::new(10).unwrap();
        let mut m = Maplet::with_capacity(10_000, 0.001, op, Mode::MergedSlot).unwrap();
        for _ in 0..10_000 {
            m.insert(&rng.random::<u64>(), &rng.random_range(1..100)).map_err(|e| e.to_string())?;
        }
        let mut p = Maplet::with_capacity(1000, 0.01, Presence, Mode::Multiset).unwrap();
        for k in 0..1000u64 {
            p.insert(&k, &()).map_err(|e| e.to_string())?;
        }
        let mut rejected = 0;
        for layout in [Layout::Dense, Layout::Sparse] {
            for bytes in [format::to_bytes(&m, layout), format::to_bytes(&p, layout)] {
                let back = AnyMaplet::read(&bytes[..]).map_err(|e| e.to_string())?;
                let orig = AnyMaplet::read(&bytes[..]).unwrap();
                ensure(back.to_bytes(layout) == bytes, || "re-serialized bytes differ".into())?;
                ensure(back.dump() == orig.dump(), || "dumps differ".into())?;
                for i in 0..200 {
                    let mut bad = bytes.clone();
                    let at = if i < 8 { bad.len() - 1 - i % 4 } else { rng.random_range(0..bad.len()) };
                    bad[at] ^= 1 << rng.random_range(0..8);
                    match AnyMaplet::read(&bad[..]) {
                        Err(Error::Format(_)) => rejected += 1,
                        other => return Err(format!("corrupt byte {at} gave {:?}", other.map(|m| m.len()))),
                    }
                }
            }
        }
        let typed: Maplet<Counter> = format::from_bytes(&format::to_bytes(&m, Layout::Dense)).map_err(|e| e.to_string())?;
        ensure(typed.enumerate().eq(m.enumerate()), || "typed roundtrip differs".into())?;
        let sizes: HashSet<_> = [Layout::Dense, Layout::Sparse].iter().map(|l| format::to_bytes(&m, *l).len()).collect();
        Ok(format!("dense and sparse roundtrips bit-identical ({} sizes); {rejected} corrupted files rejected with a format error", sizes.len()))
    });
}
