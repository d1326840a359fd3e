use std::cmp::Ordering;

use super::params::FilterParams;
use super::slots::PackedSlots;
use super::Fingerprint;
use crate::error::{Error, Result};

pub const SLOTS_PER_BLOCK: usize = 64;

/// Per-block metadata bits: 64 `occupieds` + 64 `runends` + 16-bit offset.
pub const BLOCK_METADATA_BITS: u64 = 64 + 64 + 16;

/// Metadata cost per slot, in eighths of a bit (2.125 bits). Together with
/// [`BLOCK_OVERHEAD_BITS`] this accounts for exactly [`BLOCK_METADATA_BITS`]
/// per 64-slot block.
pub const METADATA_EIGHTHS_PER_SLOT: u64 = 17;
pub const BLOCK_OVERHEAD_BITS: u64 = 8;

/// Stored offsets at or above this value are recomputed on demand.
const OFFSET_SATURATED: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct BlockMeta {
    pub occupieds: u64,
    pub runends: u64,
    /// Distance from the block's first slot to the first slot not used by
    /// runs of earlier quotients.
    pub offset: u16,
}

/// Rank-and-select quotient filter over a multiset of fingerprints.
///
/// Each stored fingerprint instance owns exactly one slot, which holds its
/// remainder and a `v`-bit payload side by side. Runs of equal quotients are
/// delimited by the `occupieds` and `runends` bit vectors; remainders within a
/// run are kept in nondecreasing order, and equal remainders keep insertion
/// order. The slot array is circular.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterCore {
    params: FilterParams,
    blocks: Vec<BlockMeta>,
    slots: PackedSlots,
    len: u64,
}

#[inline]
fn rank_upto(word: u64, bit: usize) -> u64 {
    // popcount of bits 0..=bit
    let m = if bit >= 63 { u64::MAX } else { (2u64 << bit) - 1 };
    (word & m).count_ones() as u64
}

#[inline]
fn select_from(word: u64, from: usize, n: u64) -> Option<usize> {
    let mut v = if from >= 64 { 0 } else { word >> from << from };
    for _ in 0..n {
        v &= v.wrapping_sub(1);
    }
    (v != 0).then(|| v.trailing_zeros() as usize)
}

impl FilterCore {
    pub fn new(params: FilterParams) -> Self {
        let n = params.num_slots();
        let width = params.remainder_bits() as u32 + params.value_bits() as u32;
        FilterCore {
            params,
            blocks: vec![BlockMeta::default(); n / SLOTS_PER_BLOCK],
            slots: PackedSlots::new(width, n),
            len: 0,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    /// Number of stored fingerprint instances.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_slots(&self) -> usize {
        self.params.num_slots()
    }

    pub fn capacity(&self) -> u64 {
        self.params.capacity()
    }

    pub fn load_factor(&self) -> f64 {
        self.len as f64 / self.num_slots() as f64
    }

    /// Total allocated bits: `2^q * (r + v + 2.125) + 8` bits per block.
    pub fn space_bits(&self) -> u64 {
        let n = self.num_slots() as u64;
        let payload = n * (self.params.remainder_bits() as u64 + self.params.value_bits() as u64);
        let metadata = n * METADATA_EIGHTHS_PER_SLOT / 8;
        payload + metadata + self.blocks.len() as u64 * BLOCK_OVERHEAD_BITS
    }

    // ---- raw accessors --------------------------------------------------

    #[inline]
    fn wrap(&self, i: usize) -> usize {
        i & (self.num_slots() - 1)
    }

    #[inline]
    fn is_occupied(&self, i: usize) -> bool {
        let i = self.wrap(i);
        self.blocks[i / 64].occupieds >> (i % 64) & 1 == 1
    }

    #[inline]
    fn set_occupied(&mut self, i: usize, value: bool) {
        let i = self.wrap(i);
        let b = &mut self.blocks[i / 64];
        if value {
            b.occupieds |= 1 << (i % 64);
        } else {
            b.occupieds &= !(1 << (i % 64));
        }
    }

    #[inline]
    fn is_runend(&self, i: usize) -> bool {
        let i = self.wrap(i);
        self.blocks[i / 64].runends >> (i % 64) & 1 == 1
    }

    #[inline]
    fn set_runend(&mut self, i: usize, value: bool) {
        let i = self.wrap(i);
        let b = &mut self.blocks[i / 64];
        if value {
            b.runends |= 1 << (i % 64);
        } else {
            b.runends &= !(1 << (i % 64));
        }
    }

    #[inline]
    fn slot_word(&self, i: usize) -> u128 {
        self.slots.get(self.wrap(i))
    }

    #[inline]
    fn set_slot_word(&mut self, i: usize, word: u128) {
        let i = self.wrap(i);
        self.slots.set(i, word);
    }

    #[inline]
    fn remainder_at(&self, i: usize) -> u64 {
        let r = self.params.remainder_bits() as u32;
        (self.slot_word(i) & ((1u128 << r) - 1)) as u64
    }

    #[inline]
    fn payload_at(&self, i: usize) -> u64 {
        let r = self.params.remainder_bits() as u32;
        (self.slot_word(i) >> r) as u64
    }

    #[inline]
    fn pack(&self, remainder: u64, payload: u64) -> u128 {
        let r = self.params.remainder_bits() as u32;
        remainder as u128 | (payload as u128) << r
    }

    fn offset(&self, block: usize) -> usize {
        let raw = self.blocks[block].offset;
        if raw < OFFSET_SATURATED {
            raw as usize
        } else {
            self.compute_offset(block)
        }
    }

    /// Offset of `block` derived from the previous block's run ends.
    fn compute_offset(&self, block: usize) -> usize {
        let n = self.num_slots();
        let prev = self.wrap(block * SLOTS_PER_BLOCK + n - 1);
        self.run_end(prev) - prev
    }

    fn store_offset(&mut self, block: usize, offset: usize) {
        self.blocks[block].offset = offset.min(OFFSET_SATURATED as usize) as u16;
    }

    // ---- run navigation -------------------------------------------------
    //
    // Positions returned by these helpers are "unwrapped": they are >= the
    // argument and may exceed the slot count when a cluster wraps around.

    /// End of the run of quotient `x` if occupied; otherwise the larger of `x`
    /// and the last slot used by runs of quotients before `x`.
    fn run_end(&self, x: usize) -> usize {
        debug_assert!(x < self.num_slots());
        let block = x / SLOTS_PER_BLOCK;
        let bit = x % SLOTS_PER_BLOCK;
        let offset = self.offset(block);
        let rank = rank_upto(self.blocks[block].occupieds, bit);
        if rank == 0 {
            return if offset <= bit {
                x
            } else {
                block * SLOTS_PER_BLOCK + offset - 1
            };
        }
        // The rank-th runend at or after the offset closes x's run.
        let mut cursor_block = block + offset / SLOTS_PER_BLOCK;
        let mut from = offset % SLOTS_PER_BLOCK;
        let mut want = rank - 1;
        let nblocks = self.blocks.len();
        loop {
            let runends = self.blocks[cursor_block % nblocks].runends;
            if let Some(pos) = select_from(runends, from, want) {
                return (cursor_block * SLOTS_PER_BLOCK + pos).max(x);
            }
            let masked = if from >= 64 { 0 } else { runends >> from << from };
            want -= masked.count_ones() as u64;
            cursor_block += 1;
            from = 0;
        }
    }

    /// First slot of the run of occupied quotient `x`.
    fn run_start(&self, x: usize) -> usize {
        let n = self.num_slots();
        if x == 0 {
            self.run_end(n - 1) + 1 - n
        } else {
            self.run_end(x - 1) + 1
        }
    }

    fn is_empty_slot(&self, x: usize) -> bool {
        !self.is_occupied(x) && !self.is_runend(x) && self.run_end(x) == x
    }

    /// First empty slot at or after unwrapped position `from`.
    fn find_first_empty(&self, mut from: usize) -> usize {
        loop {
            let x = self.wrap(from);
            if self.is_empty_slot(x) {
                return from;
            }
            from += self.run_end(x) - x + 1;
        }
    }

    /// Last slot of the shifted region that follows `from`: every run in
    /// `(from, result]` sits to the right of its home slot.
    fn last_shifted_slot(&self, mut from: usize) -> usize {
        loop {
            let x = self.wrap(from);
            let end = self.run_end(x);
            if end == x {
                return from;
            }
            from += end - x;
        }
    }

    fn adjust_offsets(&mut self, home: usize, last: usize, increment: bool) {
        // Blocks whose first slot lies in (home, last].
        let nblocks = self.blocks.len();
        let first_block = home / SLOTS_PER_BLOCK + 1;
        let last_block = last / SLOTS_PER_BLOCK;
        for b in first_block..=last_block {
            let b = b % nblocks;
            let raw = self.blocks[b].offset;
            if increment {
                self.blocks[b].offset = raw.saturating_add(1);
            } else if raw < OFFSET_SATURATED {
                debug_assert!(raw > 0);
                self.blocks[b].offset = raw - 1;
            } else {
                let off = self.compute_offset(b);
                self.store_offset(b, off);
            }
        }
    }

    // ---- public operations ----------------------------------------------

    /// Inserts one fingerprint instance with its payload and returns the slot
    /// it landed in. Duplicates are kept.
    pub fn insert_fp(&mut self, fp: Fingerprint, payload: u64) -> Result<usize> {
        if self.len >= self.capacity() {
            return Err(Error::CapacityExceeded);
        }
        let (home, remainder) = fp.split(&self.params);
        debug_assert!(payload_fits(payload, self.params.value_bits()));
        let word = self.pack(remainder, payload);

        enum Placement {
            NewRun,
            Inside,
            NewRunend,
        }
        let (insert_at, search_from, placement) = if !self.is_occupied(home) {
            if self.is_empty_slot(home) {
                (home, home, Placement::NewRun)
            } else {
                let at = self.run_end(home) + 1;
                (at, at, Placement::NewRun)
            }
        } else {
            let start = self.run_start(home);
            let end = self.run_end(home);
            let mut pos = start;
            while pos <= end && self.remainder_at(pos) <= remainder {
                pos += 1;
            }
            let placement = if pos > end {
                Placement::NewRunend
            } else {
                Placement::Inside
            };
            (pos, end + 1, placement)
        };

        let empty = self.find_first_empty(search_from);
        for i in (insert_at..empty).rev() {
            let w = self.slot_word(i);
            let re = self.is_runend(i);
            self.set_slot_word(i + 1, w);
            self.set_runend(i + 1, re);
        }
        self.set_slot_word(insert_at, word);
        match placement {
            Placement::NewRun => {
                self.set_runend(insert_at, true);
                self.set_occupied(home, true);
            }
            Placement::NewRunend => {
                self.set_runend(insert_at - 1, false);
                self.set_runend(insert_at, true);
            }
            Placement::Inside => self.set_runend(insert_at, false),
        }
        self.adjust_offsets(home, empty, true);
        self.len += 1;
        Ok(self.wrap(insert_at))
    }

    /// Visits every instance of `fp` as `(slot, payload)`.
    pub fn for_each_match(&self, fp: Fingerprint, mut f: impl FnMut(usize, u64)) {
        let (home, remainder) = fp.split(&self.params);
        if !self.is_occupied(home) {
            return;
        }
        let mut pos = self.run_start(home);
        loop {
            match self.remainder_at(pos).cmp(&remainder) {
                Ordering::Equal => f(self.wrap(pos), self.payload_at(pos)),
                Ordering::Greater => return,
                Ordering::Less => {}
            }
            if self.is_runend(pos) {
                return;
            }
            pos += 1;
        }
    }

    /// All `(slot, payload)` pairs stored under `fp`, in slot order.
    pub fn find_all(&self, fp: Fingerprint) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        self.for_each_match(fp, |slot, payload| out.push((slot, payload)));
        out
    }

    pub fn count(&self, fp: Fingerprint) -> usize {
        let mut n = 0;
        self.for_each_match(fp, |_, _| n += 1);
        n
    }

    pub fn contains(&self, fp: Fingerprint) -> bool {
        let mut found = false;
        self.for_each_match(fp, |_, _| found = true);
        found
    }

    /// Removes the lowest-slot instance of `fp` whose payload satisfies
    /// `select`, returning that payload.
    pub fn remove_one(&mut self, fp: Fingerprint, mut select: impl FnMut(u64) -> bool) -> Result<u64> {
        let (home, remainder) = fp.split(&self.params);
        if !self.is_occupied(home) {
            return Err(Error::NotFound);
        }
        let start = self.run_start(home);
        let end = self.run_end(home);
        let mut found = None;
        for pos in start..=end {
            let rem = self.remainder_at(pos);
            if rem > remainder {
                break;
            }
            if rem == remainder {
                let payload = self.payload_at(pos);
                if select(payload) {
                    found = Some((pos, payload));
                    break;
                }
            }
        }
        let (pos, payload) = found.ok_or(Error::NotFound)?;

        let last = self.last_shifted_slot(end);
        for i in pos..last {
            let w = self.slot_word(i + 1);
            let re = self.is_runend(i + 1);
            self.set_slot_word(i, w);
            self.set_runend(i, re);
        }
        self.set_slot_word(last, 0);
        self.set_runend(last, false);
        if start == end {
            self.set_occupied(home, false);
        } else if pos == end {
            self.set_runend(end - 1, true);
        }
        self.adjust_offsets(home, last, false);
        self.len -= 1;
        Ok(payload)
    }

    /// Rewrites the payload of the single instance of `fp`.
    ///
    /// Returns 0 if `fp` is absent, 1 if updated, and `MultipleInstances` if
    /// `fp` is stored more than once.
    pub fn update_in_place(&mut self, fp: Fingerprint, transform: impl FnOnce(u64) -> u64) -> Result<usize> {
        self.try_update_in_place(fp, |p| Ok::<_, Error>(transform(p)))
    }

    /// Fallible form of [`Self::update_in_place`]; the filter is untouched if
    /// `transform` fails.
    pub fn try_update_in_place<E>(
        &mut self,
        fp: Fingerprint,
        transform: impl FnOnce(u64) -> std::result::Result<u64, E>,
    ) -> Result<usize>
    where
        Error: From<E>,
    {
        let matches = self.find_all(fp);
        match matches.as_slice() {
            [] => Ok(0),
            [(slot, payload)] => {
                let next = transform(*payload)?;
                debug_assert!(payload_fits(next, self.params.value_bits()));
                let (_, remainder) = fp.split(&self.params);
                let word = self.pack(remainder, next);
                self.set_slot_word(*slot, word);
                Ok(1)
            }
            many => Err(Error::MultipleInstances(many.len())),
        }
    }

    /// Every stored instance as `(fingerprint, payload)`, in fingerprint order.
    pub fn enumerate(&self) -> Entries<'_> {
        Entries::new(self)
    }

    fn next_occupied(&self, from: usize) -> Option<usize> {
        let n = self.num_slots();
        let mut i = from;
        while i < n {
            let block = i / 64;
            let word = self.blocks[block].occupieds >> (i % 64);
            if word != 0 {
                return Some(i + word.trailing_zeros() as usize);
            }
            i = (block + 1) * 64;
        }
        None
    }

    /// Copy with one more quotient bit and one fewer remainder bit.
    pub fn resize_double(&self) -> Result<FilterCore> {
        let params = self.params.doubled()?;
        FilterCore::from_sorted(params, self.enumerate())
    }

    /// Builds a filter from a fingerprint-ordered stream.
    pub fn from_sorted(
        params: FilterParams,
        entries: impl IntoIterator<Item = (Fingerprint, u64)>,
    ) -> Result<FilterCore> {
        let mut core = FilterCore::new(params);
        for (fp, payload) in entries {
            core.insert_fp(fp, payload)?;
        }
        Ok(core)
    }

    /// Smallest shape with the same `p` as `params` (and at least its `q`)
    /// that holds `items` instances within the load factor.
    pub(crate) fn params_for(params: &FilterParams, items: u64) -> Result<FilterParams> {
        let mut p = *params;
        while p.capacity() < items {
            p = p.doubled()?;
        }
        Ok(p)
    }

    /// Multiset union of two filters sharing fingerprint width, seed and
    /// payload width. The result has the larger quotient width, grown further
    /// if needed to stay within the load factor.
    pub fn merge_cores(a: &FilterCore, b: &FilterCore) -> Result<FilterCore> {
        a.params.compatible_with(&b.params)?;
        let base = if a.params.quotient_bits() >= b.params.quotient_bits() {
            a.params
        } else {
            b.params
        };
        let params = Self::params_for(&base, a.len + b.len)?;
        FilterCore::from_sorted(params, MergeSorted::new(a.enumerate(), b.enumerate()))
    }

    // ---- raw state, for serialization -------------------------------------

    pub(crate) fn raw_parts(&self) -> (&[BlockMeta], &[u64]) {
        (&self.blocks, self.slots.words())
    }

    pub(crate) fn from_raw_parts(
        params: FilterParams,
        blocks: Vec<BlockMeta>,
        slot_words: Vec<u64>,
        len: u64,
    ) -> Result<FilterCore> {
        let n = params.num_slots();
        if blocks.len() != n / SLOTS_PER_BLOCK {
            return Err(Error::Format("block count does not match quotient bits".into()));
        }
        let width = params.remainder_bits() as u32 + params.value_bits() as u32;
        let slots = PackedSlots::from_words(width, n, slot_words)
            .ok_or_else(|| Error::Format("slot word count mismatch".into()))?;
        let core = FilterCore {
            params,
            blocks,
            slots,
            len,
        };
        core.check_invariants().map_err(Error::Format)?;
        Ok(core)
    }

    /// Full structural check: run metadata balance, sorted runs, stored
    /// offsets, and instance count.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let occ: u64 = self.blocks.iter().map(|b| b.occupieds.count_ones() as u64).sum();
        let ends: u64 = self.blocks.iter().map(|b| b.runends.count_ones() as u64).sum();
        if occ != ends {
            return Err(format!("{occ} occupied quotients but {ends} run ends"));
        }
        if self.len >= self.num_slots() as u64 {
            return Err("filter has no free slot".into());
        }
        for b in 0..self.blocks.len() {
            let raw = self.blocks[b].offset;
            let computed = self.compute_offset(b);
            let ok = if raw == OFFSET_SATURATED {
                computed >= OFFSET_SATURATED as usize
            } else {
                raw as usize == computed
            };
            if !ok {
                return Err(format!("block {b} offset {raw} != {computed}"));
            }
        }
        let mut count = 0u64;
        let mut prev: Option<Fingerprint> = None;
        let mut used = vec![false; self.num_slots()];
        let mut q = self.next_occupied(0);
        while let Some(home) = q {
            let mut pos = self.run_start(home);
            loop {
                if count >= self.num_slots() as u64 {
                    return Err("runs overlap".into());
                }
                let slot = self.wrap(pos);
                if used[slot] {
                    return Err(format!("slot {slot} used twice"));
                }
                used[slot] = true;
                let fp = Fingerprint::join(home, self.remainder_at(pos), &self.params);
                if prev.is_some_and(|p| p > fp) {
                    return Err(format!("fingerprints out of order at slot {slot}"));
                }
                prev = Some(fp);
                count += 1;
                if self.is_runend(pos) {
                    break;
                }
                pos += 1;
            }
            q = self.next_occupied(home + 1);
        }
        if count != self.len {
            return Err(format!("walked {count} instances, len is {}", self.len));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn raw_offset(&self, block: usize) -> u16 {
        self.blocks[block].offset
    }

    #[cfg(test)]
    pub(crate) fn force_saturated_offset(&mut self, block: usize) {
        self.blocks[block].offset = OFFSET_SATURATED;
    }
}

fn payload_fits(payload: u64, bits: u8) -> bool {
    bits >= 64 || payload >> bits == 0
}

/// Fingerprint-ordered iterator over a [`FilterCore`].
pub struct Entries<'a> {
    core: &'a FilterCore,
    quotient: usize,
    pos: usize,
    remaining: u64,
}

impl<'a> Entries<'a> {
    fn new(core: &'a FilterCore) -> Self {
        let (quotient, pos) = match core.next_occupied(0) {
            Some(q) => (q, core.run_start(q)),
            None => (0, 0),
        };
        Entries {
            core,
            quotient,
            pos,
            remaining: core.len,
        }
    }
}

impl Iterator for Entries<'_> {
    type Item = (Fingerprint, u64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let core = self.core;
        let item = (
            Fingerprint::join(self.quotient, core.remainder_at(self.pos), &core.params),
            core.payload_at(self.pos),
        );
        if core.is_runend(self.pos) {
            if let Some(q) = core.next_occupied(self.quotient + 1) {
                self.quotient = q;
                self.pos = (self.pos + 1).max(q);
            }
        } else {
            self.pos += 1;
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

impl ExactSizeIterator for Entries<'_> {}

/// Merges two fingerprint-ordered streams; ties take the left side first.
pub struct MergeSorted<A: Iterator, B: Iterator> {
    a: std::iter::Peekable<A>,
    b: std::iter::Peekable<B>,
}

impl<A, B> MergeSorted<A, B>
where
    A: Iterator<Item = (Fingerprint, u64)>,
    B: Iterator<Item = (Fingerprint, u64)>,
{
    pub fn new(a: A, b: B) -> Self {
        MergeSorted {
            a: a.peekable(),
            b: b.peekable(),
        }
    }
}

impl<A, B> Iterator for MergeSorted<A, B>
where
    A: Iterator<Item = (Fingerprint, u64)>,
    B: Iterator<Item = (Fingerprint, u64)>,
{
    type Item = (Fingerprint, u64);

    fn next(&mut self) -> Option<Self::Item> {
        match (self.a.peek(), self.b.peek()) {
            (Some(x), Some(y)) if y.0 < x.0 => self.b.next(),
            (Some(_), _) => self.a.next(),
            (None, _) => self.b.next(),
        }
    }
}
