//! Perfect-hashing quotient filter over a multiset of fingerprints.
//!
//! The filter maps every stored fingerprint instance to its own slot, and the
//! slot carries a fixed-width payload next to the remainder. Payloads travel
//! with their remainders whenever runs shift, so the maplet layer can treat a
//! slot index as the location of a value.
//!
//! Layout per 64-slot block: `occupieds` (64 bits), `runends` (64 bits), a
//! 16-bit offset, then 64 packed slot words of `r + v` bits each.

mod core;
mod params;
mod slots;

pub use self::core::{
    Entries, FilterCore, MergeSorted, BLOCK_METADATA_BITS, BLOCK_OVERHEAD_BITS,
    METADATA_EIGHTHS_PER_SLOT, SLOTS_PER_BLOCK,
};
pub(crate) use self::core::BlockMeta;
pub(crate) use self::slots::PackedSlots;
pub use self::params::{
    FilterParams, DEFAULT_LOAD_FACTOR, MAX_REMAINDER_BITS, MAX_VALUE_BITS, MIN_QUOTIENT_BITS,
};

use crate::hash::low_mask;

/// A `p`-bit key hash. The high `q` bits select the home slot and the low `r`
/// bits are stored in the slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint(u64);

impl Fingerprint {
    pub const fn new(raw: u64) -> Self {
        Fingerprint(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    /// Hashes `key` with the family and seed in `params`.
    pub fn of_key(key: &[u8], params: &FilterParams) -> Self {
        Fingerprint(
            params
                .hasher()
                .hash_bytes(key, params.hash_seed(), params.fingerprint_bits()),
        )
    }

    pub fn of_u64(key: u64, params: &FilterParams) -> Self {
        Fingerprint(
            params
                .hasher()
                .hash_u64(key, params.hash_seed(), params.fingerprint_bits()),
        )
    }

    pub fn home_slot(self, params: &FilterParams) -> usize {
        (self.0 >> params.remainder_bits()) as usize
    }

    pub fn remainder(self, params: &FilterParams) -> u64 {
        self.0 & low_mask(params.remainder_bits() as u32)
    }

    #[inline]
    pub(crate) fn split(self, params: &FilterParams) -> (usize, u64) {
        debug_assert!(params.fingerprint_bits() >= 64 || self.0 >> params.fingerprint_bits() == 0);
        (self.home_slot(params), self.remainder(params))
    }

    #[inline]
    pub(crate) fn join(home: usize, remainder: u64, params: &FilterParams) -> Self {
        Fingerprint((home as u64) << params.remainder_bits() | remainder)
    }
}

/// Hashes `key` to a fingerprint under `params`.
pub fn hash_key(key: &[u8], params: &FilterParams) -> Fingerprint {
    Fingerprint::of_key(key, params)
}
