//! Key hashing.
//!
//! Two hash families are supported. [`KeyHasher::Xxh3`] hashes arbitrary byte
//! strings with seeded XXH3-64 and truncates to `p` bits. [`KeyHasher::Exact`]
//! is a seeded bijection on `p`-bit words: distinct keys below `2^p` never
//! collide, and every fingerprint can be mapped back to its key.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

/// Hash family used to derive fingerprints. The discriminant is the id
/// recorded in serialized maplet headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum KeyHasher {
    Xxh3 = 1,
    Exact = 2,
}

impl KeyHasher {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(KeyHasher::Xxh3),
            2 => Ok(KeyHasher::Exact),
            other => Err(Error::Format(format!("unknown hash function id {other}"))),
        }
    }

    /// Fingerprint of an arbitrary byte key.
    ///
    /// For the exact family the key is read as a little-endian integer of at
    /// most eight bytes.
    pub fn hash_bytes(self, key: &[u8], seed: u64, fingerprint_bits: u8) -> u64 {
        match self {
            KeyHasher::Xxh3 => hash_key(key, seed, fingerprint_bits),
            KeyHasher::Exact => {
                let mut word = [0u8; 8];
                let n = key.len().min(8);
                word[..n].copy_from_slice(&key[..n]);
                mix(u64::from_le_bytes(word), seed, fingerprint_bits)
            }
        }
    }

    /// Fingerprint of an integer key.
    pub fn hash_u64(self, key: u64, seed: u64, fingerprint_bits: u8) -> u64 {
        match self {
            KeyHasher::Xxh3 => hash_key(&key.to_le_bytes(), seed, fingerprint_bits),
            KeyHasher::Exact => mix(key, seed, fingerprint_bits),
        }
    }
}

#[inline]
pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Seeded XXH3-64 of `key`, truncated to the low `fingerprint_bits` bits.
pub fn hash_key(key: &[u8], seed: u64, fingerprint_bits: u8) -> u64 {
    xxh3_64_with_seed(key, seed) & low_mask(fingerprint_bits as u32)
}

const MIX_MUL: u64 = 0x9E37_79B9_7F4A_7C15;

fn xorshift_amount(bits: u8) -> u32 {
    (bits as u32 / 2).max(1)
}

/// Seeded bijection on `bits`-bit words (xor, xorshift, odd multiply, xorshift).
pub fn mix(key: u64, seed: u64, bits: u8) -> u64 {
    let mask = low_mask(bits as u32);
    let s = xorshift_amount(bits);
    let mut x = (key ^ seed) & mask;
    x ^= x >> s;
    x = x.wrapping_mul(MIX_MUL) & mask;
    x ^= x >> s;
    x
}

/// Inverse of [`mix`] for the same seed and width.
pub fn unmix(fingerprint: u64, seed: u64, bits: u8) -> u64 {
    let mask = low_mask(bits as u32);
    let s = xorshift_amount(bits);
    let mut x = unxorshift(fingerprint & mask, s, bits);
    x = x.wrapping_mul(mul_inverse(MIX_MUL)) & mask;
    x = unxorshift(x, s, bits);
    (x ^ seed) & mask
}

fn unxorshift(y: u64, s: u32, bits: u8) -> u64 {
    let mut x = y;
    for _ in 0..(bits as u32).div_ceil(s) {
        x = y ^ (x >> s);
    }
    x
}

fn mul_inverse(a: u64) -> u64 {
    // Newton iteration doubles the number of correct low bits each round.
    let mut inv = a;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(inv)));
    }
    inv
}
