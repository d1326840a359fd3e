//! LSM query-routing simulator.
//!
//! Compares two ways of deciding which SSTables to read for a point lookup:
//! one presence filter per SSTable, or one maplet per level mapping each key
//! to the id of the SSTable holding it. Storage is not touched; probes and
//! reads are counted and converted to an abstract cost.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::codec::{IdSet, Presence};
use crate::error::{Error, Result};
use crate::maplet::{Maplet, Mode};
use crate::report::{Cell, SimReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Compaction {
    /// One sorted run per level.
    Leveled,
    /// Up to `g` runs per level.
    SizeTiered,
}

impl FromStr for Compaction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leveled" => Ok(Compaction::Leveled),
            "size-tiered" | "tiered" => Ok(Compaction::SizeTiered),
            other => Err(Error::InvalidParams(format!("unknown compaction policy {other}"))),
        }
    }
}

impl fmt::Display for Compaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compaction::Leveled => "leveled",
            Compaction::SizeTiered => "size-tiered",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    /// Zipf over key rank with the given exponent.
    Zipf(f64),
}

impl FromStr for KeyDistribution {
    type Err = Error;
    /// `uniform` or `zipf:<s>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(KeyDistribution::Uniform);
        }
        if let Some(exp) = s.strip_prefix("zipf:") {
            let e: f64 = exp
                .parse()
                .map_err(|_| Error::InvalidParams(format!("bad zipf exponent {exp}")))?;
            if e <= 0.0 {
                return Err(Error::InvalidParams("zipf exponent must be positive".into()));
            }
            return Ok(KeyDistribution::Zipf(e));
        }
        Err(Error::InvalidParams(format!("unknown distribution {s}")))
    }
}

/// Abstract cost of one summary probe and one storage read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IoCost {
    pub probe: f64,
    pub read: f64,
}

impl Default for IoCost {
    fn default() -> Self {
        IoCost { probe: 0.01, read: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsmConfig {
    /// Growth factor `g`.
    pub growth: u32,
    /// Level count `h`.
    pub levels: u32,
    /// Keys in one level-0 SSTable.
    pub keys_per_sstable: u64,
    pub compaction: Compaction,
    /// Fraction of queries for keys that exist.
    pub present_fraction: f64,
    pub distribution: KeyDistribution,
    pub filter_epsilon: f64,
    /// `None` picks the equal-memory rate.
    pub maplet_epsilon: Option<f64>,
    pub io: IoCost,
    /// Charge one storage read per summary probe.
    pub paged: bool,
    pub queries: u64,
    pub seed: u64,
}

impl Default for LsmConfig {
    fn default() -> Self {
        LsmConfig {
            growth: 8,
            levels: 3,
            keys_per_sstable: 1000,
            compaction: Compaction::SizeTiered,
            present_fraction: 0.5,
            distribution: KeyDistribution::Uniform,
            filter_epsilon: 2f64.powi(-10),
            maplet_epsilon: None,
            io: IoCost::default(),
            paged: false,
            queries: 100_000,
            seed: crate::DEFAULT_SEED,
        }
    }
}

const MAX_TOTAL_KEYS: u64 = 50_000_000;

impl LsmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.growth < 2 || self.growth > 64 {
            return bad(format!("growth factor {} outside 2..=64", self.growth));
        }
        if self.levels == 0 {
            return bad("need at least one level".into());
        }
        if self.keys_per_sstable == 0 {
            return bad("keys per SSTable must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.present_fraction) {
            return bad(format!("present fraction {}", self.present_fraction));
        }
        for eps in std::iter::once(self.filter_epsilon).chain(self.maplet_epsilon) {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("epsilon {eps} outside (0, 1)"));
            }
        }
        match self.total_keys() {
            Some(n) if n <= MAX_TOTAL_KEYS => Ok(()),
            _ => bad(format!("dataset larger than {MAX_TOTAL_KEYS} keys")),
        }
    }

    pub fn sstables_per_level(&self) -> u32 {
        match self.compaction {
            Compaction::Leveled => 1,
            Compaction::SizeTiered => self.growth,
        }
    }

    /// Level `i` holds `K * g^(i+1)` keys under either policy.
    pub fn level_keys(&self, level: u32) -> Option<u64> {
        (self.growth as u64)
            .checked_pow(level + 1)?
            .checked_mul(self.keys_per_sstable)
    }

    pub fn total_keys(&self) -> Option<u64> {
        (0..self.levels).try_fold(0u64, |acc, l| acc.checked_add(self.level_keys(l)?))
    }

    pub fn maplet_epsilon(&self) -> f64 {
        self.maplet_epsilon
            .unwrap_or_else(|| equal_memory(self.filter_epsilon, self.sstables_per_level()).epsilon)
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = LsmConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { line: i as u64 + 1, message: m };
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number {v}")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad integer {v}")));
            match key {
                "growth" => cfg.growth = int(value)? as u32,
                "levels" => cfg.levels = int(value)? as u32,
                "keys_per_sstable" => cfg.keys_per_sstable = int(value)?,
                "compaction" => cfg.compaction = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "present_fraction" => cfg.present_fraction = num(value)?,
                "distribution" => cfg.distribution = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "filter_epsilon" => cfg.filter_epsilon = num(value)?,
                "maplet_epsilon" => cfg.maplet_epsilon = Some(num(value)?),
                "probe_cost" => cfg.io.probe = num(value)?,
                "read_cost" => cfg.io.read = num(value)?,
                "paged" => {
                    cfg.paged = value
                        .parse()
                        .map_err(|_| err(format!("expected true or false, got {value}")))?
                }
                "queries" => cfg.queries = int(value)?,
                "seed" => cfg.seed = int(value)?,
                other => return Err(err(format!("unknown key {other}"))),
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalyticCosts {
    pub write_amp: u64,
    pub read_mult: u64,
}

/// Closed forms with `h` levels: leveled `(g*h, h)`, size-tiered `(h, g*h)`.
pub fn analytic_costs(compaction: Compaction, growth: u32, levels: u32) -> AnalyticCosts {
    let (g, h) = (growth as u64, levels as u64);
    match compaction {
        Compaction::Leveled => AnalyticCosts { write_amp: g * h, read_mult: h },
        Compaction::SizeTiered => AnalyticCosts { write_amp: h, read_mult: g * h },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EqualMemory {
    pub epsilon: f64,
    pub value_bits: u8,
}

/// Maplet error rate and id width that spend the same memory as `g` filters
/// at rate `filter_epsilon`: `eps_m = g * eps_f`, `v = ceil(log2 g)`.
pub fn equal_memory(filter_epsilon: f64, sstables: u32) -> EqualMemory {
    let g = sstables.max(1);
    EqualMemory {
        epsilon: (g as f64 * filter_epsilon).min(0.5),
        value_bits: (g as u64).next_power_of_two().trailing_zeros() as u8,
    }
}

/// Keys laid out over levels and SSTables. SSTable 0 of a level is the newest.
#[derive(Clone, Debug)]
pub struct LsmDataset {
    /// `tables[level][sstable]` is a set of keys.
    pub tables: Vec<Vec<HashSet<u64>>>,
    /// Every present key, in generation order.
    pub keys: Vec<u64>,
}

impl LsmDataset {
    /// Present keys are even, absent probes odd.
    pub fn generate(cfg: &LsmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let per_level = cfg.sstables_per_level() as u64;
        let total = cfg.total_keys().unwrap_or(0) as usize;
        let mut seen = HashSet::with_capacity(total);
        let mut keys = Vec::with_capacity(total);
        let mut tables = Vec::new();
        for level in 0..cfg.levels {
            let per_table = cfg.level_keys(level).unwrap_or(0) / per_level;
            let mut level_tables = Vec::new();
            for _ in 0..per_level {
                let mut table = HashSet::with_capacity(per_table as usize);
                while (table.len() as u64) < per_table {
                    let k = rng.random::<u64>() & !1;
                    if seen.insert(k) {
                        table.insert(k);
                        keys.push(k);
                    }
                }
                level_tables.push(table);
            }
            tables.push(level_tables);
        }
        Ok(LsmDataset { tables, keys })
    }

    pub fn single_table(keys: Vec<u64>) -> Self {
        LsmDataset {
            tables: vec![vec![keys.iter().copied().collect()]],
            keys,
        }
    }
}

/// The two routing structures for one dataset.
#[derive(Clone, Debug)]
pub struct LsmIndexes {
    pub filters: Vec<Vec<Maplet<Presence>>>,
    pub maplets: Vec<Maplet<IdSet>>,
    pub maplet_epsilon: f64,
}

fn table_seed(seed: u64, level: usize, table: usize) -> u64 {
    crate::hash::mix(seed ^ ((level as u64) << 32 | table as u64), 0x5bd1_e995, 64)
}

impl LsmIndexes {
    pub fn build(cfg: &LsmConfig, data: &LsmDataset) -> Result<Self> {
        let eps_m = cfg.maplet_epsilon();
        let mut filters = Vec::new();
        let mut maplets = Vec::new();
        for (level, tables) in data.tables.iter().enumerate() {
            let mut level_filters = Vec::new();
            for (t, keys) in tables.iter().enumerate() {
                let mut f = Maplet::with_capacity(keys.len() as u64, cfg.filter_epsilon, Presence, Mode::MergedSlot)?;
                f = rebuild_with_seed(f, table_seed(cfg.seed, level, t))?;
                for k in keys {
                    f.insert(k, &())?;
                }
                level_filters.push(f);
            }
            filters.push(level_filters);

            let n: u64 = tables.iter().map(|t| t.len() as u64).sum();
            let op = IdSet::new(tables.len() as u32)?;
            let mut m = Maplet::with_capacity(n, eps_m, op, Mode::Multiset)?;
            m = rebuild_with_seed(m, table_seed(cfg.seed, level, usize::MAX >> 1))?;
            for (t, keys) in tables.iter().enumerate() {
                let id = op.singleton(t as u32)?;
                // Sorted so that the table layout does not depend on set order.
                let mut sorted: Vec<u64> = keys.iter().copied().collect();
                sorted.sort_unstable();
                for k in sorted {
                    m.insert(&k, &id)?;
                }
            }
            maplets.push(m);
        }
        Ok(LsmIndexes { filters, maplets, maplet_epsilon: eps_m })
    }

    pub fn filter_bits(&self) -> u64 {
        self.filters.iter().flatten().map(|f| f.space_bits()).sum()
    }

    pub fn maplet_bits(&self) -> u64 {
        self.maplets.iter().map(|m| m.space_bits()).sum()
    }

    /// Expected false-positive reads per absent query on each path.
    pub fn expected_absent_reads(&self) -> (f64, f64) {
        let f = self
            .filters
            .iter()
            .flatten()
            .map(|f| f.params().epsilon_at(f.len()))
            .sum();
        let m = self.maplets.iter().map(|m| m.params().epsilon_at(m.len())).sum();
        (f, m)
    }
}

fn rebuild_with_seed<O: crate::codec::MergeOperator>(m: Maplet<O>, seed: u64) -> Result<Maplet<O>> {
    let params = m.params().with_seed(seed);
    Maplet::new(params, m.operator().clone(), m.mode())
}

/// Per-path totals over a query run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathStats {
    pub probes: u64,
    /// Reads of paged-out summaries.
    pub summary_reads: u64,
    pub data_reads: u64,
    /// Data reads that did not find the key.
    pub wasted_reads: u64,
    pub max_probes: u64,
    pub found: u64,
    /// Present keys that were not found. Always zero.
    pub misses: u64,
    pub total_bits: u64,
}

impl PathStats {
    pub fn reads(&self) -> u64 {
        self.summary_reads + self.data_reads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsmOutcome {
    pub queries: u64,
    pub baseline: PathStats,
    pub maplet: PathStats,
    pub costs: AnalyticCosts,
    pub keys: u64,
    pub config: LsmConfig,
}

struct Query {
    key: u64,
    home: Option<(usize, usize)>,
}

/// Runs `cfg.queries` lookups through both paths.
pub fn run_queries(cfg: &LsmConfig, data: &LsmDataset, idx: &LsmIndexes) -> Result<LsmOutcome> {
    let mut location: HashMap<u64, (usize, usize)> = HashMap::with_capacity(data.keys.len());
    for (l, tables) in data.tables.iter().enumerate() {
        for (t, keys) in tables.iter().enumerate() {
            for k in keys {
                location.insert(*k, (l, t));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let zipf = match cfg.distribution {
        KeyDistribution::Zipf(s) if !data.keys.is_empty() => Some(
            Zipf::new(data.keys.len() as f64, s).map_err(|e| Error::InvalidParams(e.to_string()))?,
        ),
        _ => None,
    };
    let mut baseline = PathStats { total_bits: idx.filter_bits(), ..Default::default() };
    let mut maplet = PathStats { total_bits: idx.maplet_bits(), ..Default::default() };

    for _ in 0..cfg.queries {
        let present = !data.keys.is_empty() && rng.random_bool(cfg.present_fraction);
        let q = if present {
            let i = match &zipf {
                Some(z) => z.sample(&mut rng) as usize - 1,
                None => rng.random_range(0..data.keys.len()),
            };
            let key = data.keys[i];
            Query { key, home: location.get(&key).copied() }
        } else {
            Query { key: rng.random::<u64>() | 1, home: None }
        };
        route_filters(cfg, idx, &q, &mut baseline);
        route_maplets(cfg, idx, &q, &mut maplet);
    }
    Ok(LsmOutcome {
        queries: cfg.queries,
        baseline,
        maplet,
        costs: analytic_costs(cfg.compaction, cfg.growth, data.tables.len() as u32),
        keys: data.keys.len() as u64,
        config: cfg.clone(),
    })
}

fn route_filters(cfg: &LsmConfig, idx: &LsmIndexes, q: &Query, stats: &mut PathStats) {
    let mut probes = 0;
    let mut found = false;
    'search: for (l, filters) in idx.filters.iter().enumerate() {
        for (t, f) in filters.iter().enumerate() {
            probes += 1;
            if cfg.paged {
                stats.summary_reads += 1;
            }
            if f.contains(&q.key) {
                stats.data_reads += 1;
                if q.home == Some((l, t)) {
                    found = true;
                    break 'search;
                }
                stats.wasted_reads += 1;
            }
        }
    }
    if found {
        stats.found += 1;
    } else if q.home.is_some() {
        stats.misses += 1;
    }
    stats.probes += probes;
    stats.max_probes = stats.max_probes.max(probes);
}

fn route_maplets(cfg: &LsmConfig, idx: &LsmIndexes, q: &Query, stats: &mut PathStats) {
    let mut probes = 0;
    let mut found = false;
    'search: for (l, m) in idx.maplets.iter().enumerate() {
        probes += 1;
        if cfg.paged {
            stats.summary_reads += 1;
        }
        if let Some(ids) = m.query(&q.key) {
            for t in ids.ids() {
                stats.data_reads += 1;
                if q.home == Some((l, t as usize)) {
                    found = true;
                    break 'search;
                }
                stats.wasted_reads += 1;
            }
        }
    }
    if found {
        stats.found += 1;
    } else if q.home.is_some() {
        stats.misses += 1;
    }
    stats.probes += probes;
    stats.max_probes = stats.max_probes.max(probes);
}

impl LsmOutcome {
    pub fn report(&self) -> SimReport {
        let mut r = SimReport::new([
            "path",
            "queries",
            "probes_per_query",
            "max_probes",
            "reads_per_query",
            "wasted_reads_per_query",
            "total_bits",
            "bits_per_key",
            "cost_per_query",
            "write_amp",
            "read_mult",
            "paged",
        ]);
        let q = self.queries.max(1) as f64;
        for (name, s) in [("filters", &self.baseline), ("maplets", &self.maplet)] {
            let cost = s.probes as f64 * self.config.io.probe + s.reads() as f64 * self.config.io.read;
            r.push(vec![
                name.into(),
                self.queries.into(),
                (s.probes as f64 / q).into(),
                s.max_probes.into(),
                (s.reads() as f64 / q).into(),
                (s.wasted_reads as f64 / q).into(),
                s.total_bits.into(),
                Cell::from((self.keys > 0).then(|| s.total_bits as f64 / self.keys as f64)),
                (cost / q).into(),
                self.costs.write_amp.into(),
                self.costs.read_mult.into(),
                self.config.paged.into(),
            ]);
        }
        r
    }
}

/// Generates data, builds both indexes and runs the configured queries.
pub fn simulate(cfg: &LsmConfig) -> Result<LsmOutcome> {
    let data = LsmDataset::generate(cfg)?;
    let idx = LsmIndexes::build(cfg, &data)?;
    run_queries(cfg, &data, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(analytic_costs(Compaction::Leveled, 8, 3), AnalyticCosts { write_amp: 24, read_mult: 3 });
        assert_eq!(analytic_costs(Compaction::SizeTiered, 8, 3), AnalyticCosts { write_amp: 3, read_mult: 24 });
        assert_eq!(analytic_costs(Compaction::Leveled, 2, 1), AnalyticCosts { write_amp: 2, read_mult: 1 });
        assert_eq!(analytic_costs(Compaction::SizeTiered, 2, 1), AnalyticCosts { write_amp: 1, read_mult: 2 });
    }

    #[test]
    fn equal_memory_rates() {
        let e = equal_memory(2f64.powi(-10), 8);
        assert_eq!(e.epsilon, 2f64.powi(-7));
        assert_eq!(e.value_bits, 3);
        let e = equal_memory(2f64.powi(-10), 1);
        assert_eq!(e.epsilon, 2f64.powi(-10));
        assert_eq!(e.value_bits, 0);
    }

    #[test]
    fn single_table_paths_agree() {
        let cfg = LsmConfig { queries: 0, ..Default::default() };
        let data = LsmDataset::single_table((0..1000u64).map(|k| k * 2).collect());
        let idx = LsmIndexes::build(&LsmConfig { compaction: Compaction::Leveled, ..cfg.clone() }, &data).unwrap();
        let cfg = LsmConfig { queries: 2000, present_fraction: 1.0, compaction: Compaction::Leveled, ..cfg };
        let out = run_queries(&cfg, &data, &idx).unwrap();
        for s in [&out.baseline, &out.maplet] {
            assert_eq!(s.probes, 2000);
            assert_eq!(s.data_reads, 2000);
            assert_eq!(s.found, 2000);
        }
    }

    #[test]
    fn no_false_negatives_and_probe_bounds() {
        for compaction in [Compaction::Leveled, Compaction::SizeTiered] {
            let cfg = LsmConfig {
                growth: 4,
                levels: 3,
                keys_per_sstable: 200,
                compaction,
                present_fraction: 0.7,
                distribution: KeyDistribution::Zipf(1.1),
                queries: 20_000,
                ..Default::default()
            };
            let out = simulate(&cfg).unwrap();
            let read_mult = out.costs.read_mult;
            assert_eq!(out.baseline.misses, 0);
            assert_eq!(out.maplet.misses, 0);
            assert!(out.baseline.max_probes <= read_mult);
            assert!(out.maplet.max_probes <= cfg.levels as u64);
            assert!(out.baseline.wasted_reads <= out.baseline.data_reads);
            assert!(out.maplet.wasted_reads <= out.maplet.data_reads);
        }
    }

    #[test]
    fn equal_memory_index_sizes() {
        let cfg = LsmConfig { queries: 0, ..Default::default() };
        let data = LsmDataset::generate(&cfg).unwrap();
        let idx = LsmIndexes::build(&cfg, &data).unwrap();
        let (f, m) = (idx.filter_bits() as f64, idx.maplet_bits() as f64);
        assert!((f - m).abs() / f < 0.05, "filters {f} maplets {m}");
    }

    #[test]
    fn absent_workload_probe_counts() {
        let cfg = LsmConfig { present_fraction: 0.0, queries: 200_000, ..Default::default() };
        let data = LsmDataset::generate(&cfg).unwrap();
        let idx = LsmIndexes::build(&cfg, &data).unwrap();
        let out = run_queries(&cfg, &data, &idx).unwrap();
        let q = cfg.queries as f64;
        assert_eq!(out.baseline.probes as f64 / q, 24.0);
        assert_eq!(out.maplet.probes as f64 / q, 3.0);
        let (ef, em) = idx.expected_absent_reads();
        assert!((ef - em).abs() / ef < 0.05);
        let rf = out.baseline.data_reads as f64 / q;
        let rm = out.maplet.data_reads as f64 / q;
        // Loose statistical check: ~200k * 0.017 = 3.4k expected events.
        assert!((rf - ef).abs() / ef < 0.1, "{rf} vs {ef}");
        assert!((rm - em).abs() / em < 0.1, "{rm} vs {em}");
    }

    #[test]
    fn paged_summaries_cost_reads() {
        let cfg = LsmConfig { paged: true, present_fraction: 0.0, queries: 1000, keys_per_sstable: 100, ..Default::default() };
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.baseline.summary_reads, 24_000);
        assert_eq!(out.maplet.summary_reads, 3000);
        let report = out.report();
        assert!(report.float(0, "reads_per_query").unwrap() >= 24.0);
    }

    #[test]
    fn config_file_parsing() {
        let cfg = LsmConfig::from_kv(
            "# comment\ngrowth = 4\nlevels: 2\ncompaction = leveled\ndistribution = zipf:0.9\npaged = true\n",
        )
        .unwrap();
        assert_eq!(cfg.growth, 4);
        assert_eq!(cfg.levels, 2);
        assert_eq!(cfg.compaction, Compaction::Leveled);
        assert_eq!(cfg.distribution, KeyDistribution::Zipf(0.9));
        assert!(cfg.paged);
        match LsmConfig::from_kv("growth = 4\nbogus = 1\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(LsmConfig { growth: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn deterministic_by_seed() {
        let cfg = LsmConfig { queries: 5000, keys_per_sstable: 100, ..Default::default() };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}
