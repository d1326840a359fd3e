use crate::error::{Error, Result};
use crate::hash::KeyHasher;

/// Smallest supported quotient width (one 64-slot block).
pub const MIN_QUOTIENT_BITS: u8 = 6;
pub const MAX_REMAINDER_BITS: u8 = 56;
pub const MAX_VALUE_BITS: u8 = 64;

/// Default maximum load factor, as 16-bit fixed point (0.95).
pub const DEFAULT_LOAD_FACTOR: f64 = 0.95;

const LOAD_FACTOR_SCALE: f64 = 65535.0;

/// Shape of a filter: slot count `2^q`, fingerprint split `p = q + r`, and
/// payload width `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterParams {
    quotient_bits: u8,
    remainder_bits: u8,
    value_bits: u8,
    load_factor_fixed: u16,
    hash_seed: u64,
    hasher: KeyHasher,
}

impl FilterParams {
    pub fn new(quotient_bits: u8, remainder_bits: u8, value_bits: u8) -> Result<Self> {
        if quotient_bits < MIN_QUOTIENT_BITS {
            return Err(Error::InvalidParams(format!(
                "quotient bits {quotient_bits} < {MIN_QUOTIENT_BITS}"
            )));
        }
        if !(1..=MAX_REMAINDER_BITS).contains(&remainder_bits) {
            return Err(Error::InvalidParams(format!(
                "remainder bits {remainder_bits} outside 1..={MAX_REMAINDER_BITS}"
            )));
        }
        if value_bits > MAX_VALUE_BITS {
            return Err(Error::InvalidParams(format!(
                "value bits {value_bits} > {MAX_VALUE_BITS}"
            )));
        }
        if quotient_bits as u32 + remainder_bits as u32 > 64 {
            return Err(Error::InvalidParams(
                "fingerprint wider than 64 bits".to_string(),
            ));
        }
        // Slot indices are usize.
        if quotient_bits as u32 >= usize::BITS - 1 {
            return Err(Error::InvalidParams(format!(
                "quotient bits {quotient_bits} too large for this platform"
            )));
        }
        Ok(FilterParams {
            quotient_bits,
            remainder_bits,
            value_bits,
            load_factor_fixed: fixed_load_factor(DEFAULT_LOAD_FACTOR),
            hash_seed: 0,
            hasher: KeyHasher::Xxh3,
        })
    }

    /// Derives the fingerprint width from the target capacity and error rate:
    /// `p = ceil(log2(n_max / eps))` and `q = ceil(log2(n_max / alpha))`.
    ///
    /// If that leaves no remainder bits the fingerprint is widened to `q + 1`,
    /// which only lowers the error rate.
    pub fn for_capacity(expected_max_items: u64, epsilon: f64, value_bits: u8) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon {epsilon} outside (0, 1)"
            )));
        }
        let n = expected_max_items.max(1) as f64;
        let p = (n / epsilon).log2().ceil().max(1.0) as u32;
        let q = quotient_bits_for(expected_max_items, DEFAULT_LOAD_FACTOR);
        let r = p.saturating_sub(q as u32).max(1);
        if r > MAX_REMAINDER_BITS as u32 {
            return Err(Error::InvalidParams(format!(
                "epsilon {epsilon} needs {r} remainder bits"
            )));
        }
        Self::new(q, r as u8, value_bits)
    }

    /// Same fingerprint width `p` as derived by [`Self::for_capacity`], for use
    /// with an exact (bijective) hasher over `p`-bit keys.
    pub fn exact(key_bits: u8, expected_items: u64, value_bits: u8) -> Result<Self> {
        let q = quotient_bits_for(expected_items, DEFAULT_LOAD_FACTOR);
        let q = q.min(key_bits.saturating_sub(1));
        if key_bits <= q {
            return Err(Error::InvalidParams(format!(
                "key width {key_bits} too small for an exact filter"
            )));
        }
        Ok(Self::new(q, key_bits - q, value_bits)?.with_hasher(KeyHasher::Exact))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.hash_seed = seed;
        self
    }

    pub fn with_hasher(mut self, hasher: KeyHasher) -> Self {
        self.hasher = hasher;
        self
    }

    pub fn with_value_bits(mut self, value_bits: u8) -> Result<Self> {
        if value_bits > MAX_VALUE_BITS {
            return Err(Error::InvalidParams(format!("value bits {value_bits}")));
        }
        self.value_bits = value_bits;
        Ok(self)
    }

    /// Sets the maximum load factor. Values are quantized to 16-bit fixed
    /// point so that they survive serialization unchanged.
    pub fn with_max_load_factor(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("load factor {alpha}")));
        }
        self.load_factor_fixed = fixed_load_factor(alpha);
        Ok(self)
    }

    pub(crate) fn with_load_factor_fixed(mut self, fixed: u16) -> Result<Self> {
        if fixed == 0 {
            return Err(Error::InvalidParams("zero load factor".into()));
        }
        self.load_factor_fixed = fixed;
        Ok(self)
    }

    pub fn quotient_bits(&self) -> u8 {
        self.quotient_bits
    }

    pub fn remainder_bits(&self) -> u8 {
        self.remainder_bits
    }

    pub fn value_bits(&self) -> u8 {
        self.value_bits
    }

    pub fn fingerprint_bits(&self) -> u8 {
        self.quotient_bits + self.remainder_bits
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn hasher(&self) -> KeyHasher {
        self.hasher
    }

    pub fn max_load_factor(&self) -> f64 {
        self.load_factor_fixed as f64 / LOAD_FACTOR_SCALE
    }

    pub(crate) fn load_factor_fixed(&self) -> u16 {
        self.load_factor_fixed
    }

    pub fn num_slots(&self) -> usize {
        1usize << self.quotient_bits
    }

    /// Largest number of stored instances before inserts are refused.
    /// At least one slot always stays free.
    pub fn capacity(&self) -> u64 {
        let n = self.num_slots() as u128;
        let cap = n * self.load_factor_fixed as u128 / LOAD_FACTOR_SCALE as u128;
        (cap as u64).min(n as u64 - 1)
    }

    /// Expected false-positive rate for an absent key when `items` distinct
    /// fingerprints are stored: `items / 2^p`.
    pub fn epsilon_at(&self, items: u64) -> f64 {
        items as f64 / 2f64.powi(self.fingerprint_bits() as i32)
    }

    /// Parameters after one doubling: `q + 1`, `r - 1`, same `p`.
    pub fn doubled(&self) -> Result<Self> {
        if self.remainder_bits <= 1 {
            return Err(Error::RemainderExhausted);
        }
        let mut next = *self;
        next.quotient_bits += 1;
        next.remainder_bits -= 1;
        if next.quotient_bits as u32 >= usize::BITS - 1 {
            return Err(Error::RemainderExhausted);
        }
        Ok(next)
    }

    /// Reshapes to `quotient_bits` keeping `p` fixed.
    pub fn with_quotient_bits(&self, quotient_bits: u8) -> Result<Self> {
        let p = self.fingerprint_bits();
        if quotient_bits >= p {
            return Err(Error::RemainderExhausted);
        }
        let mut next = Self::new(quotient_bits, p - quotient_bits, self.value_bits)?;
        next.load_factor_fixed = self.load_factor_fixed;
        next.hash_seed = self.hash_seed;
        next.hasher = self.hasher;
        Ok(next)
    }

    /// True when fingerprints from `self` and `other` are comparable.
    pub fn compatible_with(&self, other: &FilterParams) -> Result<()> {
        if self.fingerprint_bits() != other.fingerprint_bits() {
            return Err(Error::IncompatibleParams(format!(
                "fingerprint bits {} vs {}",
                self.fingerprint_bits(),
                other.fingerprint_bits()
            )));
        }
        if self.hash_seed != other.hash_seed || self.hasher != other.hasher {
            return Err(Error::IncompatibleParams("hash seed or family differs".into()));
        }
        if self.value_bits != other.value_bits {
            return Err(Error::IncompatibleParams(format!(
                "value bits {} vs {}",
                self.value_bits, other.value_bits
            )));
        }
        Ok(())
    }
}

/// Rounded up so that `floor(alpha * slots)` items always fit.
fn fixed_load_factor(alpha: f64) -> u16 {
    (alpha * LOAD_FACTOR_SCALE).ceil().clamp(1.0, LOAD_FACTOR_SCALE) as u16
}

fn quotient_bits_for(items: u64, alpha: f64) -> u8 {
    let slots = (items.max(1) as f64 / alpha).log2().ceil().max(0.0) as u8;
    slots.max(MIN_QUOTIENT_BITS)
}
