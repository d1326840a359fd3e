//! Approximate key→value maps with one-sided error.
//!
//! A [`Maplet`] stores one fingerprint per key in a [`FilterCore`] and keeps
//! the value in the same slot. Lookups fold every payload stored under the
//! key's fingerprint with the operator's `⊕`, so a collision can only inflate
//! an answer under `⪯`, never shrink it.

use std::fmt;

use rayon::prelude::*;

use crate::codec::MergeOperator;
use crate::error::{Error, Result};
use crate::filter::{FilterCore, FilterParams, Fingerprint, MergeSorted};
use crate::hash::low_mask;

/// Anything that can be hashed to a fingerprint.
pub trait Key {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint;
}

impl Key for [u8] {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_key(self, params)
    }
}

impl<const N: usize> Key for [u8; N] {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_key(self, params)
    }
}

impl Key for Vec<u8> {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_key(self, params)
    }
}

impl Key for str {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_key(self.as_bytes(), params)
    }
}

impl Key for String {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_key(self.as_bytes(), params)
    }
}

impl Key for u64 {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_u64(*self, params)
    }
}

impl Key for u32 {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        Fingerprint::of_u64(*self as u64, params)
    }
}

impl Key for Fingerprint {
    fn fingerprint(&self, _: &FilterParams) -> Fingerprint {
        *self
    }
}

impl<T: Key + ?Sized> Key for &T {
    fn fingerprint(&self, params: &FilterParams) -> Fingerprint {
        (**self).fingerprint(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Mode {
    /// One slot per distinct fingerprint; repeated inserts combine in place.
    MergedSlot = 0,
    /// One slot per inserted instance; queries fold all instances.
    Multiset = 1,
}

impl Mode {
    pub fn from_u8(raw: u8) -> Result<Self> {
        match raw {
            0 => Ok(Mode::MergedSlot),
            1 => Ok(Mode::Multiset),
            other => Err(Error::Format(format!("unknown mode {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::MergedSlot => "merged-slot",
            Mode::Multiset => "multiset",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Default fill fraction at which inserts first double the table.
pub const DEFAULT_RESIZE_THRESHOLD: f64 = 0.95;

/// A query answer together with the number of stored instances that matched.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnosed<V> {
    pub value: Option<V>,
    /// Slots whose fingerprint equals the probe's fingerprint.
    pub matches: usize,
}

/// Space and occupancy summary.
#[derive(Clone, Debug, PartialEq)]
pub struct MapletStats {
    pub items: u64,
    pub load_factor: f64,
    pub total_bits: u64,
    /// `None` for an empty maplet.
    pub bits_per_item: Option<f64>,
    /// False-positive bound at full capacity.
    pub epsilon: f64,
    pub mode: Mode,
}

impl MapletStats {
    pub const TSV_HEADER: &'static str = "items\tload_factor\ttotal_bits\tbits_per_item\tepsilon\tmode";

    pub fn to_tsv_row(&self) -> String {
        let bpi = self
            .bits_per_item
            .map_or_else(|| "null".to_string(), |b| format!("{b:.4}"));
        format!(
            "{}\t{:.6}\t{}\t{}\t{:e}\t{}",
            self.items, self.load_factor, self.total_bits, bpi, self.epsilon, self.mode
        )
    }
}

#[derive(Clone, Debug)]
pub struct Maplet<O: MergeOperator> {
    core: FilterCore,
    op: O,
    mode: Mode,
    resize_threshold: Option<f64>,
}

impl<O: MergeOperator> Maplet<O> {
    /// `params.value_bits()` is overridden by the operator's width.
    pub fn new(params: FilterParams, op: O, mode: Mode) -> Result<Self> {
        let params = params.with_value_bits(op.value_bits())?;
        Ok(Maplet {
            core: FilterCore::new(params),
            op,
            mode,
            resize_threshold: Some(DEFAULT_RESIZE_THRESHOLD),
        })
    }

    /// Sized for `expected_items` at false-positive rate `epsilon`.
    pub fn with_capacity(expected_items: u64, epsilon: f64, op: O, mode: Mode) -> Result<Self> {
        let params = FilterParams::for_capacity(expected_items, epsilon, op.value_bits())?;
        Self::new(params, op, mode)
    }

    pub(crate) fn from_core(core: FilterCore, op: O, mode: Mode) -> Result<Self> {
        if core.params().value_bits() != op.value_bits() {
            return Err(Error::IncompatibleParams(format!(
                "filter stores {} value bits, operator needs {}",
                core.params().value_bits(),
                op.value_bits()
            )));
        }
        Ok(Maplet {
            core,
            op,
            mode,
            resize_threshold: Some(DEFAULT_RESIZE_THRESHOLD),
        })
    }

    /// `None` disables automatic growth; inserts then fail with
    /// `CapacityExceeded` once the load factor is reached.
    pub fn with_resize_threshold(mut self, threshold: Option<f64>) -> Result<Self> {
        if let Some(t) = threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParams(format!("resize threshold {t}")));
            }
        }
        self.resize_threshold = threshold;
        Ok(self)
    }

    pub fn params(&self) -> &FilterParams {
        self.core.params()
    }

    pub fn core(&self) -> &FilterCore {
        &self.core
    }

    pub fn operator(&self) -> &O {
        &self.op
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of occupied slots.
    pub fn len(&self) -> u64 {
        self.core.len()
    }

    pub fn is_empty(&self) -> bool {
        self.core.is_empty()
    }

    pub fn space_bits(&self) -> u64 {
        self.core.space_bits()
    }

    pub fn fingerprint<K: Key + ?Sized>(&self, key: &K) -> Fingerprint {
        key.fingerprint(self.core.params())
    }

    pub fn insert<K: Key + ?Sized>(&mut self, key: &K, value: &O::Value) -> Result<()> {
        let fp = self.fingerprint(key);
        self.insert_fp(fp, value)
    }

    pub fn insert_fp(&mut self, fp: Fingerprint, value: &O::Value) -> Result<()> {
        let payload = self.op.encode(value)?;
        if self.mode == Mode::MergedSlot {
            let op = &self.op;
            let updated = self.core.try_update_in_place(fp, |old| {
                let merged = op.combine(&op.decode(old), value)?;
                op.encode(&merged)
            })?;
            if updated == 1 {
                return Ok(());
            }
        }
        self.grow_for_insert()?;
        self.core.insert_fp(fp, payload)?;
        Ok(())
    }

    fn grow_for_insert(&mut self) -> Result<()> {
        let Some(threshold) = self.resize_threshold else {
            return Ok(());
        };
        let next = self.core.len() + 1;
        let over_threshold = next as f64 > threshold * self.core.num_slots() as f64;
        if over_threshold || next > self.core.capacity() {
            match self.core.resize_double() {
                Ok(core) => self.core = core,
                Err(Error::RemainderExhausted) if next <= self.core.capacity() => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// `None` means the key was certainly never inserted (or fully deleted).
    pub fn query<K: Key + ?Sized>(&self, key: &K) -> Option<O::Value> {
        self.query_fp(self.fingerprint(key))
    }

    pub fn query_fp(&self, fp: Fingerprint) -> Option<O::Value> {
        self.query_fp_diagnosed(fp).value
    }

    pub fn contains<K: Key + ?Sized>(&self, key: &K) -> bool {
        self.core.contains(self.fingerprint(key))
    }

    /// Query that also reports how many stored instances matched.
    pub fn query_diagnosed<K: Key + ?Sized>(&self, key: &K) -> Diagnosed<O::Value> {
        self.query_fp_diagnosed(self.fingerprint(key))
    }

    pub fn query_fp_diagnosed(&self, fp: Fingerprint) -> Diagnosed<O::Value> {
        let mut value: Option<O::Value> = None;
        let mut matches = 0;
        self.core.for_each_match(fp, |_, payload| {
            matches += 1;
            let v = self.op.decode(payload);
            value = Some(match value.take() {
                Some(acc) => self.op.combine_clamped(&acc, &v),
                None => v,
            });
        });
        Diagnosed { value, matches }
    }

    pub fn delete<K: Key + ?Sized>(&mut self, key: &K, value: &O::Value) -> Result<()> {
        let fp = self.fingerprint(key);
        self.delete_fp(fp, value)
    }

    /// Merged-slot mode subtracts `value` through the operator's inverse and
    /// drops the slot once it reaches the identity. Multiset mode removes one
    /// instance whose payload is exactly `value`.
    pub fn delete_fp(&mut self, fp: Fingerprint, value: &O::Value) -> Result<()> {
        match self.mode {
            Mode::MergedSlot => {
                if !self.op.invertible() {
                    return Err(Error::UnsupportedDelete);
                }
                let matches = self.core.find_all(fp);
                let payload = match matches.as_slice() {
                    [] => return Err(Error::NotFound),
                    [(_, payload)] => *payload,
                    many => return Err(Error::MultipleInstances(many.len())),
                };
                let next = self.op.cancel(&self.op.decode(payload), value)?;
                if next == self.op.identity() {
                    self.core.remove_one(fp, |_| true)?;
                } else {
                    let encoded = self.op.encode(&next)?;
                    self.core.update_in_place(fp, |_| encoded)?;
                }
                Ok(())
            }
            Mode::Multiset => {
                let payload = self.op.encode(value)?;
                self.core.remove_one(fp, |p| p == payload).map(|_| ())
            }
        }
    }

    /// Doubles the slot count, trading one remainder bit for a quotient bit.
    pub fn resize_double(&mut self) -> Result<()> {
        self.core = self.core.resize_double()?;
        Ok(())
    }

    /// Every stored slot as `(fingerprint, value)`, in fingerprint order.
    pub fn enumerate(&self) -> impl ExactSizeIterator<Item = (Fingerprint, O::Value)> + '_ {
        self.core
            .enumerate()
            .map(|(fp, payload)| (fp, self.op.decode(payload)))
    }

    /// Pointwise `⊕` of two maplets with the same fingerprint function,
    /// operator and mode.
    pub fn merge(a: &Self, b: &Self) -> Result<Self> {
        if a.mode != b.mode {
            return Err(Error::IncompatibleParams(format!("mode {} vs {}", a.mode, b.mode)));
        }
        if a.op.id() != b.op.id() || a.op.value_bits() != b.op.value_bits() {
            return Err(Error::IncompatibleParams(format!(
                "operator {:?}/{} vs {:?}/{}",
                a.op.id(),
                a.op.value_bits(),
                b.op.id(),
                b.op.value_bits()
            )));
        }
        let core = match a.mode {
            Mode::Multiset => FilterCore::merge_cores(&a.core, &b.core)?,
            Mode::MergedSlot => {
                a.core.params().compatible_with(b.core.params())?;
                let entries = combine_equal(
                    &a.op,
                    MergeSorted::new(a.core.enumerate(), b.core.enumerate()),
                )?;
                let base = if a.params().quotient_bits() >= b.params().quotient_bits() {
                    *a.params()
                } else {
                    *b.params()
                };
                let params = FilterCore::params_for(&base, entries.len() as u64)?;
                FilterCore::from_sorted(params, entries)?
            }
        };
        Ok(Maplet {
            core,
            op: a.op.clone(),
            mode: a.mode,
            resize_threshold: a.resize_threshold,
        })
    }

    pub fn stats(&self) -> MapletStats {
        let items = self.core.len();
        let total_bits = self.core.space_bits();
        let params = self.core.params();
        let epsilon = if params.hasher() == crate::hash::KeyHasher::Exact {
            0.0
        } else {
            params.epsilon_at(params.capacity())
        };
        MapletStats {
            items,
            load_factor: self.core.load_factor(),
            total_bits,
            bits_per_item: (items > 0).then(|| total_bits as f64 / items as f64),
            epsilon,
            mode: self.mode,
        }
    }
}

/// Collapses runs of equal fingerprints in a sorted stream with `⊕`.
fn combine_equal<O: MergeOperator>(
    op: &O,
    sorted: impl Iterator<Item = (Fingerprint, u64)>,
) -> Result<Vec<(Fingerprint, u64)>> {
    let mut out: Vec<(Fingerprint, u64)> = Vec::new();
    for (fp, payload) in sorted {
        match out.last_mut() {
            Some((last, acc)) if *last == fp => {
                let merged = op.combine(&op.decode(*acc), &op.decode(payload))?;
                *acc = op.encode(&merged)?;
            }
            _ => out.push((fp, payload)),
        }
    }
    Ok(out)
}

/// Parallel insert-only construction.
///
/// Fingerprints are partitioned by their top `shard_bits` bits. Each shard is
/// an independent maplet over the remaining fingerprint bits, filled on its
/// own thread; [`ShardedBuilder::finish`] concatenates the shards in order.
/// Because the partition depends only on fingerprints, the result does not
/// depend on thread count or scheduling.
pub struct ShardedBuilder<O: MergeOperator> {
    params: FilterParams,
    op: O,
    mode: Mode,
    shard_bits: u8,
    shards: Vec<Maplet<O>>,
}

impl<O: MergeOperator> ShardedBuilder<O> {
    /// `shard_bits` is clamped so each shard keeps at least the minimum
    /// quotient width.
    pub fn new(params: FilterParams, op: O, mode: Mode, shard_bits: u8) -> Result<Self> {
        let params = params.with_value_bits(op.value_bits())?;
        let q = params.quotient_bits();
        let shard_bits = shard_bits.min(q - crate::filter::MIN_QUOTIENT_BITS);
        let shard_params = FilterParams::new(q - shard_bits, params.remainder_bits(), op.value_bits())?
            .with_seed(params.hash_seed())
            .with_hasher(params.hasher());
        let shard_params = with_same_load_factor(shard_params, &params)?;
        let shards = (0..1usize << shard_bits)
            .map(|_| Maplet::new(shard_params, op.clone(), mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(ShardedBuilder {
            params,
            op,
            mode,
            shard_bits,
            shards,
        })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    fn low_bits(&self) -> u8 {
        self.params.fingerprint_bits() - self.shard_bits
    }

    /// Inserts a batch, one thread per shard. Within a shard, batch order is
    /// preserved.
    pub fn insert_batch(&mut self, batch: &[(Fingerprint, O::Value)]) -> Result<()> {
        let low = self.low_bits();
        let mask = low_mask(low as u32);
        let mut buckets: Vec<Vec<(Fingerprint, &O::Value)>> = vec![Vec::new(); self.shards.len()];
        for (fp, v) in batch {
            let shard = (fp.raw() >> low) as usize;
            buckets[shard].push((Fingerprint::new(fp.raw() & mask), v));
        }
        self.shards
            .par_iter_mut()
            .zip(buckets.par_iter())
            .try_for_each(|(shard, items)| {
                items.iter().try_for_each(|(fp, v)| shard.insert_fp(*fp, v))
            })
    }

    pub fn finish(self) -> Result<Maplet<O>> {
        let low = self.low_bits();
        let total: u64 = self.shards.iter().map(|s| s.len()).sum();
        let params = FilterCore::params_for(&self.params, total)?;
        let entries = self.shards.iter().enumerate().flat_map(|(i, shard)| {
            shard
                .core
                .enumerate()
                .map(move |(fp, payload)| (Fingerprint::new((i as u64) << low | fp.raw()), payload))
        });
        let core = FilterCore::from_sorted(params, entries)?;
        Maplet::from_core(core, self.op, self.mode)
    }
}

fn with_same_load_factor(params: FilterParams, like: &FilterParams) -> Result<FilterParams> {
    params.with_load_factor_fixed(like.load_factor_fixed())
}
