//! Summary-cache routing simulator.
//!
//! A network of caching peers publishes summaries of what each one holds.
//! Two summary schemes are compared: one presence filter per peer, rebuilt
//! and shipped in full on every refresh, and a single global maplet from key
//! to peer set, kept current by shipping per-peer delta maplets of signed
//! add/delete counts.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{Bitset, MergeOperator, Presence, SetBits, SignedCounter};
use crate::error::{Error, Result};
use crate::filter::{FilterParams, Fingerprint, MIN_QUOTIENT_BITS};
use crate::format::{self, Layout};
use crate::maplet::{Key, Maplet, Mode};
use crate::report::{Cell, SimReport};

#[derive(Clone, Debug, PartialEq)]
pub struct CacheConfig {
    /// Peer count `N`, at most 64.
    pub peers: u32,
    /// Keys held by each peer.
    pub cache_size: u64,
    /// Keys are drawn from `0..key_space`. Zero means `4 * peers * cache_size`.
    pub key_space: u64,
    /// Adds and deletes per peer per round (each).
    pub churn: u64,
    /// Rounds between summary refreshes.
    pub refresh: u32,
    pub rounds: u32,
    /// Error rate of each per-peer filter.
    pub filter_epsilon: f64,
    /// Error rate of the global maplet.
    pub maplet_epsilon: f64,
    /// Width of the signed delta counters.
    pub delta_bits: u8,
    pub lookups: u64,
    /// Fraction of lookups for keys some peer holds.
    pub present_fraction: f64,
    /// Compare the incremental global maplet against a rebuild after every refresh.
    pub verify: bool,
    pub seed: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            peers: 16,
            cache_size: 2000,
            key_space: 0,
            churn: 20,
            refresh: 1,
            rounds: 100,
            filter_epsilon: 2f64.powi(-10),
            maplet_epsilon: 2f64.powi(-10),
            delta_bits: 8,
            lookups: 100_000,
            present_fraction: 0.5,
            verify: true,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.peers == 0 || self.peers > 64 {
            return bad(format!("peer count {} outside 1..=64", self.peers));
        }
        if self.cache_size == 0 {
            return bad("cache size must be positive".into());
        }
        if self.refresh == 0 {
            return bad("refresh period must be positive".into());
        }
        if self.churn > self.cache_size {
            return bad(format!("churn {} exceeds cache size {}", self.churn, self.cache_size));
        }
        if self.key_space() < 2 * self.cache_size {
            return bad(format!("key space {} too small", self.key_space()));
        }
        if !(0.0..=1.0).contains(&self.present_fraction) {
            return bad(format!("present fraction {}", self.present_fraction));
        }
        for eps in [self.filter_epsilon, self.maplet_epsilon] {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("epsilon {eps} outside (0, 1)"));
            }
        }
        if !(2..=32).contains(&self.delta_bits) {
            return bad(format!("delta counter width {}", self.delta_bits));
        }
        match (self.peers as u64).checked_mul(self.cache_size) {
            Some(n) if n <= 20_000_000 => Ok(()),
            _ => bad("too many cached keys".into()),
        }
    }

    pub fn key_space(&self) -> u64 {
        if self.key_space == 0 {
            4 * self.peers as u64 * self.cache_size
        } else {
            self.key_space
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = CacheConfig::default();
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
                "peers" => cfg.peers = int(value)? as u32,
                "cache_size" => cfg.cache_size = int(value)?,
                "key_space" => cfg.key_space = int(value)?,
                "churn" => cfg.churn = int(value)?,
                "refresh" => cfg.refresh = int(value)? as u32,
                "rounds" => cfg.rounds = int(value)? as u32,
                "filter_epsilon" => cfg.filter_epsilon = num(value)?,
                "maplet_epsilon" => cfg.maplet_epsilon = num(value)?,
                "delta_bits" => cfg.delta_bits = int(value)? as u8,
                "lookups" => cfg.lookups = int(value)?,
                "present_fraction" => cfg.present_fraction = num(value)?,
                "verify" => {
                    cfg.verify = value
                        .parse()
                        .map_err(|_| err(format!("expected true or false, got {value}")))?
                }
                "seed" => cfg.seed = int(value)?,
                other => return Err(err(format!("unknown key {other}"))),
            }
        }
        Ok(cfg)
    }
}

/// One peer's cache contents with O(1) random eviction.
#[derive(Clone, Debug, Default)]
pub struct PeerCache {
    keys: Vec<u64>,
    pos: HashMap<u64, usize>,
}

impl PeerCache {
    pub fn contains(&self, key: u64) -> bool {
        self.pos.contains_key(&key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in insertion-and-eviction order (deterministic for a given history).
    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn insert(&mut self, key: u64) -> bool {
        if self.contains(key) {
            return false;
        }
        self.pos.insert(key, self.keys.len());
        self.keys.push(key);
        true
    }

    pub fn remove(&mut self, key: u64) -> bool {
        let Some(i) = self.pos.remove(&key) else {
            return false;
        };
        self.keys.swap_remove(i);
        if let Some(&moved) = self.keys.get(i) {
            self.pos.insert(moved, i);
        }
        true
    }
}

/// Ground truth: what every peer actually caches.
#[derive(Clone, Debug)]
pub struct PeerNetwork {
    caches: Vec<PeerCache>,
    key_space: u64,
}

impl PeerNetwork {
    pub fn generate(cfg: &CacheConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let key_space = cfg.key_space();
        let mut caches = vec![PeerCache::default(); cfg.peers as usize];
        for cache in &mut caches {
            while (cache.len() as u64) < cfg.cache_size {
                cache.insert(rng.random_range(0..key_space));
            }
        }
        Ok(PeerNetwork { caches, key_space })
    }

    pub fn peers(&self) -> u32 {
        self.caches.len() as u32
    }

    pub fn cache(&self, peer: u32) -> &PeerCache {
        &self.caches[peer as usize]
    }

    pub fn cache_mut(&mut self, peer: u32) -> &mut PeerCache {
        &mut self.caches[peer as usize]
    }

    pub fn key_space(&self) -> u64 {
        self.key_space
    }

    /// Exact set of peers holding `key`.
    pub fn holders(&self, key: u64) -> SetBits {
        let mut bits = 0u64;
        for (p, c) in self.caches.iter().enumerate() {
            if c.contains(key) {
                bits |= 1 << p;
            }
        }
        SetBits(bits)
    }

    /// Evicts `churn` random keys from every peer and caches `churn` new
    /// ones, recording each change in that peer's delta.
    pub fn churn_round(&mut self, rng: &mut impl Rng, churn: u64, deltas: &mut [DeltaMaplet]) -> Result<()> {
        for (cache, delta) in self.caches.iter_mut().zip(deltas) {
            for _ in 0..churn.min(cache.len() as u64) {
                let victim = cache.keys[rng.random_range(0..cache.len())];
                cache.remove(victim);
                delta.record_delete(&victim)?;
            }
            for _ in 0..churn {
                let key = loop {
                    let k = rng.random_range(0..self.key_space);
                    if !cache.contains(k) {
                        break k;
                    }
                };
                cache.insert(key);
                delta.record_add(&key)?;
            }
        }
        Ok(())
    }
}

/// Changes to one peer's cache since its last refresh: fingerprint to net
/// add/delete count. Entries whose count returns to zero are dropped.
#[derive(Clone, Debug)]
pub struct DeltaMaplet {
    maplet: Maplet<SignedCounter>,
}

impl DeltaMaplet {
    /// Empty delta whose fingerprints match those of `base`.
    pub fn new(base: &FilterParams, counter_bits: u8) -> Result<Self> {
        let p = base.fingerprint_bits();
        let q = MIN_QUOTIENT_BITS.min(p.saturating_sub(1)).max(1);
        let params = base.with_quotient_bits(q)?;
        let maplet = Maplet::new(params, SignedCounter::new(counter_bits)?, Mode::MergedSlot)?;
        Ok(DeltaMaplet { maplet })
    }

    pub fn from_maplet(maplet: Maplet<SignedCounter>) -> Result<Self> {
        if maplet.mode() != Mode::MergedSlot {
            return Err(Error::IncompatibleParams("delta maplets use merged-slot mode".into()));
        }
        Ok(DeltaMaplet { maplet })
    }

    pub fn maplet(&self) -> &Maplet<SignedCounter> {
        &self.maplet
    }

    pub fn params(&self) -> &FilterParams {
        self.maplet.params()
    }

    /// Number of fingerprints with a nonzero net count.
    pub fn len(&self) -> u64 {
        self.maplet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maplet.is_empty()
    }

    pub fn record_add<K: Key + ?Sized>(&mut self, key: &K) -> Result<()> {
        self.bump(self.maplet.fingerprint(key), 1)
    }

    pub fn record_delete<K: Key + ?Sized>(&mut self, key: &K) -> Result<()> {
        let minus = self.maplet.operator().invert(&1)?;
        self.bump(self.maplet.fingerprint(key), minus)
    }

    pub fn bump(&mut self, fp: Fingerprint, delta: i64) -> Result<()> {
        match self.maplet.query_fp(fp) {
            Some(current) if self.maplet.operator().combine(&current, &delta)? == 0 => {
                self.maplet.delete_fp(fp, &current)
            }
            _ => self.maplet.insert_fp(fp, &delta),
        }
    }

    /// Nonzero net counts in fingerprint order.
    pub fn entries(&self) -> impl Iterator<Item = (Fingerprint, i64)> + '_ {
        self.maplet.enumerate()
    }

    /// Sparse serialized form, as shipped on refresh.
    pub fn to_bytes(&self) -> Vec<u8> {
        format::to_bytes(&self.maplet, Layout::Sparse)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_maplet(format::from_bytes(bytes)?)
    }

    pub fn clear(&mut self) -> Result<()> {
        *self = DeltaMaplet::new(self.maplet.params(), self.maplet.operator().value_bits())?;
        Ok(())
    }
}

/// Outcome of applying one delta.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeltaApplied {
    pub inserted: u64,
    pub removed: u64,
    /// Deletes for fingerprints the receiver holds no instance of.
    pub dropped: u64,
}

/// Folds `peer`'s delta into a global peer-set maplet.
///
/// A positive net count adds that many instances tagged with `peer`; a
/// negative count removes that many. Deletes for a fingerprint with no
/// instance from `peer` at all are dropped; a partial match is `Underflow`.
pub fn apply_delta(global: &mut Maplet<Bitset>, peer: u32, delta: &DeltaMaplet) -> Result<DeltaApplied> {
    if global.mode() != Mode::Multiset {
        return Err(Error::IncompatibleParams("global summary must be a multiset maplet".into()));
    }
    delta
        .params()
        .with_value_bits(global.params().value_bits())?
        .compatible_with(global.params())?;
    let tag = global.operator().singleton(peer)?;
    let mut out = DeltaApplied::default();
    for (fp, net) in delta.entries() {
        if net > 0 {
            for _ in 0..net {
                global.insert_fp(fp, &tag)?;
            }
            out.inserted += net as u64;
        } else if net < 0 {
            let want = net.unsigned_abs();
            let mut removed = 0;
            while removed < want {
                match global.delete_fp(fp, &tag) {
                    Ok(()) => removed += 1,
                    Err(Error::NotFound) => break,
                    Err(e) => return Err(e),
                }
            }
            match removed {
                0 => out.dropped += want,
                n if n < want => return Err(Error::Underflow),
                n => out.removed += n,
            }
        }
    }
    Ok(out)
}

/// Candidate peers for one lookup and the summary probes spent finding them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Route {
    pub candidates: SetBits,
    pub probes: u32,
}

/// Both summary schemes as held by a receiving node.
#[derive(Clone, Debug)]
pub struct Summaries {
    pub global: Maplet<Bitset>,
    pub filters: Vec<Maplet<Presence>>,
}

fn peer_seed(seed: u64, peer: u32) -> u64 {
    crate::hash::mix(seed ^ (peer as u64 + 1) << 40, 0x2545_f491, 64)
}

impl Summaries {
    pub fn build(cfg: &CacheConfig, net: &PeerNetwork) -> Result<Self> {
        let global = build_global(cfg, net)?;
        let filters = (0..net.peers())
            .map(|p| build_peer_filter(cfg, net, p))
            .collect::<Result<_>>()?;
        Ok(Summaries { global, filters })
    }

    /// One probe of the global maplet.
    pub fn route_maplet(&self, key: u64) -> Route {
        Route {
            candidates: self.global.query(&key).unwrap_or(SetBits::EMPTY),
            probes: 1,
        }
    }

    /// One probe per peer filter.
    pub fn route_filters(&self, key: u64) -> Route {
        let mut bits = 0u64;
        let mut probes = 0;
        for (p, f) in self.filters.iter().enumerate() {
            probes += 1;
            if f.contains(&key) {
                bits |= 1 << p;
            }
        }
        Route { candidates: SetBits(bits), probes }
    }

    pub fn filter_bits(&self) -> u64 {
        self.filters.iter().map(|f| f.space_bits()).sum()
    }

    pub fn maplet_bits(&self) -> u64 {
        self.global.space_bits()
    }
}

/// Global maplet built from scratch over current cache contents.
pub fn build_global(cfg: &CacheConfig, net: &PeerNetwork) -> Result<Maplet<Bitset>> {
    let op = Bitset::new(cfg.peers as u8)?;
    let n = cfg.peers as u64 * cfg.cache_size;
    let params = FilterParams::for_capacity(n, cfg.maplet_epsilon, op.value_bits())?.with_seed(cfg.seed);
    let mut m = Maplet::new(params, op, Mode::Multiset)?;
    for p in 0..net.peers() {
        let tag = op.singleton(p)?;
        let mut keys = net.cache(p).keys().to_vec();
        keys.sort_unstable();
        for k in keys {
            m.insert(&k, &tag)?;
        }
    }
    Ok(m)
}

pub fn build_peer_filter(cfg: &CacheConfig, net: &PeerNetwork, peer: u32) -> Result<Maplet<Presence>> {
    let params = FilterParams::for_capacity(cfg.cache_size, cfg.filter_epsilon, 0)?.with_seed(peer_seed(cfg.seed, peer));
    let mut f = Maplet::new(params, Presence, Mode::MergedSlot)?;
    for k in net.cache(peer).keys() {
        f.insert(k, &())?;
    }
    Ok(f)
}

/// Bytes a receiver gets per refresh under each scheme.
pub fn filter_summary_bytes(filter: &Maplet<Presence>) -> u64 {
    format::to_bytes(filter, Layout::Dense).len() as u64
}

pub fn delta_summary_bytes(delta: &DeltaMaplet) -> u64 {
    delta.to_bytes().len() as u64
}

fn sorted_entries(m: &Maplet<Bitset>) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = m.enumerate().map(|(fp, s)| (fp.raw(), s.0)).collect();
    v.sort_unstable();
    v
}

/// Counts keys (from `probe_keys`) where `incremental` and `rebuilt` answer
/// differently, plus one if their stored multisets differ at all.
pub fn consistency_violations(incremental: &Maplet<Bitset>, rebuilt: &Maplet<Bitset>, probe_keys: &[u64]) -> u64 {
    let mut bad = probe_keys
        .iter()
        .filter(|k| incremental.query(*k) != rebuilt.query(*k))
        .count() as u64;
    if sorted_entries(incremental) != sorted_entries(rebuilt) {
        bad += 1;
    }
    bad
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CachePathStats {
    pub lookups: u64,
    pub probes: u64,
    pub max_probes: u32,
    /// Candidate peers that do not hold the key.
    pub false_forwards: u64,
    /// Lookups where a true holder was missing from the candidates.
    pub false_negatives: u64,
    pub summary_bits: u64,
    pub bytes_shipped: u64,
}

#[derive(Clone, Debug)]
pub struct CacheOutcome {
    pub config: CacheConfig,
    pub filter: CachePathStats,
    pub maplet: CachePathStats,
    pub refreshes: u64,
    pub violations: u64,
    pub applied: DeltaApplied,
}

impl CacheOutcome {
    pub fn report(&self) -> SimReport {
        let mut r = SimReport::new([
            "path",
            "lookups",
            "probes_per_lookup",
            "max_probes",
            "false_forwards_per_lookup",
            "false_forward_rate_per_candidate",
            "false_negatives",
            "summary_bits",
            "bytes_per_refresh",
            "refreshes",
            "consistency_violations",
            "dropped_deletes",
        ]);
        let n = self.config.peers as f64;
        for (name, s, maplet) in [("filters", &self.filter, false), ("maplet", &self.maplet, true)] {
            let l = s.lookups.max(1) as f64;
            let per_refresh = if self.refreshes == 0 {
                Cell::Null
            } else {
                Cell::Float(s.bytes_shipped as f64 / self.refreshes as f64)
            };
            r.push(vec![
                name.into(),
                s.lookups.into(),
                (s.probes as f64 / l).into(),
                (s.max_probes as u64).into(),
                (s.false_forwards as f64 / l).into(),
                (s.false_forwards as f64 / (l * n)).into(),
                s.false_negatives.into(),
                s.summary_bits.into(),
                per_refresh,
                self.refreshes.into(),
                if maplet { self.violations.into() } else { Cell::Null },
                if maplet { self.applied.dropped.into() } else { Cell::Null },
            ]);
        }
        r
    }
}

fn tally(stats: &mut CachePathStats, route: Route, truth: SetBits) {
    stats.lookups += 1;
    stats.probes += route.probes as u64;
    stats.max_probes = stats.max_probes.max(route.probes);
    stats.false_forwards += (route.candidates.0 & !truth.0).count_ones() as u64;
    if !truth.is_subset(route.candidates) {
        stats.false_negatives += 1;
    }
}

fn sample_key(cfg: &CacheConfig, net: &PeerNetwork, rng: &mut impl Rng) -> u64 {
    if rng.random_bool(cfg.present_fraction) {
        let cache = net.cache(rng.random_range(0..net.peers()));
        cache.keys()[rng.random_range(0..cache.len())]
    } else {
        // Never cached: churn only draws from below the key space.
        net.key_space() + rng.random_range(0..net.key_space())
    }
}

/// Runs churn rounds with periodic refreshes, then measures lookups against
/// the final, freshly refreshed summaries.
pub fn simulate(cfg: &CacheConfig) -> Result<CacheOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = PeerNetwork::generate(cfg, &mut rng)?;
    let mut summaries = Summaries::build(cfg, &net)?;
    let mut deltas = (0..cfg.peers)
        .map(|_| DeltaMaplet::new(summaries.global.params(), cfg.delta_bits))
        .collect::<Result<Vec<_>>>()?;

    let mut filter = CachePathStats::default();
    let mut maplet = CachePathStats::default();
    let mut refreshes = 0u64;
    let mut violations = 0u64;
    let mut applied = DeltaApplied::default();
    let verify_probes = 2000.min(cfg.lookups.max(1));

    for round in 1..=cfg.rounds {
        net.churn_round(&mut rng, cfg.churn, &mut deltas)?;
        if round % cfg.refresh != 0 && round != cfg.rounds {
            continue;
        }
        refreshes += 1;
        for (p, delta) in (0..cfg.peers).zip(deltas.iter_mut()) {
            maplet.bytes_shipped += delta_summary_bytes(delta);
            let a = apply_delta(&mut summaries.global, p, delta)?;
            applied.inserted += a.inserted;
            applied.removed += a.removed;
            applied.dropped += a.dropped;
            delta.clear()?;

            let f = build_peer_filter(cfg, &net, p)?;
            filter.bytes_shipped += filter_summary_bytes(&f);
            summaries.filters[p as usize] = f;
        }
        if cfg.verify {
            let rebuilt = build_global(cfg, &net)?;
            let keys: Vec<u64> = (0..verify_probes).map(|_| sample_key(cfg, &net, &mut rng)).collect();
            violations += consistency_violations(&summaries.global, &rebuilt, &keys);
        }
    }

    for _ in 0..cfg.lookups {
        let key = sample_key(cfg, &net, &mut rng);
        let truth = net.holders(key);
        tally(&mut maplet, summaries.route_maplet(key), truth);
        tally(&mut filter, summaries.route_filters(key), truth);
    }
    filter.summary_bits = summaries.filter_bits();
    maplet.summary_bits = summaries.maplet_bits();

    Ok(CacheOutcome {
        config: cfg.clone(),
        filter,
        maplet,
        refreshes,
        violations,
        applied,
    })
}
