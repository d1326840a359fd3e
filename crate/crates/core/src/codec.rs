//! Merge operators and fixed-width value codecs.
//!
//! A [`MergeOperator`] bundles a value type, its `v`-bit encoding, and the
//! combine operation used when several values land on one fingerprint. Every
//! operator must be associative, commutative and order-respecting:
//! `a ⪯ combine(a, b)` and `b ⪯ combine(a, b)`.

use std::fmt::{self, Debug};

use crate::error::{Error, Result};
use crate::hash::low_mask;

/// Operator ids as recorded in serialized headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum OperatorId {
    Presence = 0,
    SaturatingCounter = 1,
    CheckedCounter = 2,
    Bitset = 3,
    SignedCounter = 4,
    IdSet = 5,
}

impl OperatorId {
    pub fn from_u8(id: u8) -> Result<Self> {
        Ok(match id {
            0 => OperatorId::Presence,
            1 => OperatorId::SaturatingCounter,
            2 => OperatorId::CheckedCounter,
            3 => OperatorId::Bitset,
            4 => OperatorId::SignedCounter,
            5 => OperatorId::IdSet,
            other => return Err(Error::Format(format!("unknown operator id {other}"))),
        })
    }
}

pub trait MergeOperator: Clone + Debug + Send + Sync {
    type Value: Clone + Debug + PartialEq + Send + Sync;

    fn id(&self) -> OperatorId;

    /// Payload width `v` in bits.
    fn value_bits(&self) -> u8;

    fn encode(&self, value: &Self::Value) -> Result<u64>;

    fn decode(&self, payload: u64) -> Self::Value;

    fn combine(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;

    /// Like [`Self::combine`] but clamps instead of failing. Used when folding
    /// query results, which have no error path.
    fn combine_clamped(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;

    /// The ordering `⪯` under which maplet answers never under-report.
    fn order_leq(&self, a: &Self::Value, b: &Self::Value) -> bool;

    fn identity(&self) -> Self::Value;

    /// Whether values form a group, enabling merged-slot deletion.
    fn invertible(&self) -> bool {
        false
    }

    fn invert(&self, _value: &Self::Value) -> Result<Self::Value> {
        Err(Error::Unsupported)
    }

    /// `acc ⊕ value⁻¹`: removes a previously merged `value` from `acc`.
    fn cancel(&self, _acc: &Self::Value, _value: &Self::Value) -> Result<Self::Value> {
        Err(Error::Unsupported)
    }

    /// Rebuilds the operator from a serialized header.
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self>;

    /// Text rendering used by dumps.
    fn render(&self, value: &Self::Value) -> String;
}

fn check_header(expected: OperatorId, id: OperatorId) -> Result<()> {
    if expected == id {
        Ok(())
    } else {
        Err(Error::IncompatibleParams(format!(
            "operator {id:?} does not match {expected:?}"
        )))
    }
}

/// Set membership only (`v = 0`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Presence;

impl MergeOperator for Presence {
    type Value = ();

    fn id(&self) -> OperatorId {
        OperatorId::Presence
    }
    fn value_bits(&self) -> u8 {
        0
    }
    fn encode(&self, _: &()) -> Result<u64> {
        Ok(0)
    }
    fn decode(&self, _: u64) {}
    fn combine(&self, _: &(), _: &()) -> Result<()> {
        Ok(())
    }
    fn combine_clamped(&self, _: &(), _: &()) {}
    fn order_leq(&self, _: &(), _: &()) -> bool {
        true
    }
    fn identity(&self) {}
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self> {
        check_header(OperatorId::Presence, id)?;
        if value_bits != 0 {
            return Err(Error::Format("presence operator with nonzero value bits".into()));
        }
        Ok(Presence)
    }
    fn render(&self, _: &()) -> String {
        "1".to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverflowPolicy {
    /// Sums cap at `2^v - 1`; a capped counter stays capped on cancellation.
    Saturate,
    /// Sums beyond `2^v - 1` fail with [`Error::ValueOverflow`].
    Error,
}

/// Unsigned `v`-bit counter: `⊕` is addition, `⪯` is `≤`, identity 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counter {
    bits: u8,
    overflow: OverflowPolicy,
}

impl Counter {
    pub fn new(bits: u8) -> Result<Self> {
        Self::with_policy(bits, OverflowPolicy::Saturate)
    }

    pub fn with_policy(bits: u8, overflow: OverflowPolicy) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return Err(Error::InvalidParams(format!("counter width {bits}")));
        }
        Ok(Counter { bits, overflow })
    }

    pub fn max_value(&self) -> u64 {
        low_mask(self.bits as u32)
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.overflow
    }
}

impl MergeOperator for Counter {
    type Value = u64;

    fn id(&self) -> OperatorId {
        match self.overflow {
            OverflowPolicy::Saturate => OperatorId::SaturatingCounter,
            OverflowPolicy::Error => OperatorId::CheckedCounter,
        }
    }
    fn value_bits(&self) -> u8 {
        self.bits
    }
    fn encode(&self, value: &u64) -> Result<u64> {
        if *value > self.max_value() {
            return Err(Error::Domain(format!("count {value} exceeds {} bits", self.bits)));
        }
        Ok(*value)
    }
    fn decode(&self, payload: u64) -> u64 {
        payload & self.max_value()
    }
    fn combine(&self, a: &u64, b: &u64) -> Result<u64> {
        let max = self.max_value();
        match a.checked_add(*b).filter(|s| *s <= max) {
            Some(sum) => Ok(sum),
            None => match self.overflow {
                OverflowPolicy::Saturate => Ok(max),
                OverflowPolicy::Error => Err(Error::ValueOverflow),
            },
        }
    }
    fn combine_clamped(&self, a: &u64, b: &u64) -> u64 {
        a.saturating_add(*b).min(self.max_value())
    }
    fn order_leq(&self, a: &u64, b: &u64) -> bool {
        a <= b
    }
    fn identity(&self) -> u64 {
        0
    }
    fn invertible(&self) -> bool {
        true
    }
    fn invert(&self, value: &u64) -> Result<u64> {
        if *value == 0 {
            Ok(0)
        } else {
            Err(Error::Underflow)
        }
    }
    fn cancel(&self, acc: &u64, value: &u64) -> Result<u64> {
        if self.overflow == OverflowPolicy::Saturate && *acc == self.max_value() {
            // The true count is unknown once capped; keep the upper bound.
            return Ok(*acc);
        }
        acc.checked_sub(*value).ok_or(Error::Underflow)
    }
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self> {
        match id {
            OperatorId::SaturatingCounter => Counter::with_policy(value_bits, OverflowPolicy::Saturate),
            OperatorId::CheckedCounter => Counter::with_policy(value_bits, OverflowPolicy::Error),
            other => Err(Error::IncompatibleParams(format!("operator {other:?} is not a counter"))),
        }
    }
    fn render(&self, value: &u64) -> String {
        value.to_string()
    }
}

/// A set over `{0, …, w-1}` stored as a `w`-bit mask (bit `i` ↔ element `i`).
///
/// Used for experiment sets, SSTable id sets and peer sets.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetBits(pub u64);

impl SetBits {
    pub const EMPTY: SetBits = SetBits(0);

    pub fn singleton(id: u32, width: u8) -> Result<Self> {
        if id >= width as u32 {
            return Err(Error::Domain(format!("id {id} outside bitset width {width}")));
        }
        Ok(SetBits(1 << id))
    }

    pub fn from_ids(ids: impl IntoIterator<Item = u32>, width: u8) -> Result<Self> {
        ids.into_iter()
            .try_fold(SetBits::EMPTY, |acc, id| Ok(acc.union(SetBits::singleton(id, width)?)))
    }

    pub fn union(self, other: SetBits) -> SetBits {
        SetBits(self.0 | other.0)
    }

    pub fn contains(self, id: u32) -> bool {
        id < 64 && self.0 >> id & 1 == 1
    }

    pub fn is_subset(self, other: SetBits) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn ids(self) -> impl Iterator<Item = u32> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let id = bits.trailing_zeros();
            bits &= bits - 1;
            Some(id)
        })
    }
}

impl fmt::Debug for SetBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.ids()).finish()
    }
}

/// `⊕` is union, `⪯` is subset. No inverse: use multiset mode for deletion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bitset {
    width: u8,
}

impl Bitset {
    pub fn new(width: u8) -> Result<Self> {
        if !(1..=64).contains(&width) {
            return Err(Error::InvalidParams(format!("bitset width {width}")));
        }
        Ok(Bitset { width })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn singleton(&self, id: u32) -> Result<SetBits> {
        SetBits::singleton(id, self.width)
    }
}

impl MergeOperator for Bitset {
    type Value = SetBits;

    fn id(&self) -> OperatorId {
        OperatorId::Bitset
    }
    fn value_bits(&self) -> u8 {
        self.width
    }
    fn encode(&self, value: &SetBits) -> Result<u64> {
        if value.0 & !low_mask(self.width as u32) != 0 {
            return Err(Error::Domain(format!("set {value:?} exceeds width {}", self.width)));
        }
        Ok(value.0)
    }
    fn decode(&self, payload: u64) -> SetBits {
        SetBits(payload & low_mask(self.width as u32))
    }
    fn combine(&self, a: &SetBits, b: &SetBits) -> Result<SetBits> {
        Ok(a.union(*b))
    }
    fn combine_clamped(&self, a: &SetBits, b: &SetBits) -> SetBits {
        a.union(*b)
    }
    fn order_leq(&self, a: &SetBits, b: &SetBits) -> bool {
        a.is_subset(*b)
    }
    fn identity(&self) -> SetBits {
        SetBits::EMPTY
    }
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self> {
        check_header(OperatorId::Bitset, id)?;
        Bitset::new(value_bits)
    }
    fn render(&self, value: &SetBits) -> String {
        let ids: Vec<String> = value.ids().map(|i| i.to_string()).collect();
        ids.join(",")
    }
}

/// Id sets stored one id per slot in `ceil(log2 w)` bits.
///
/// Meant for multiset mode: each instance holds a single id and a query
/// unions the ids of all matching instances. Laws are those of [`Bitset`];
/// only singleton sets can be encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdSet {
    bits: u8,
}

impl IdSet {
    /// Ids range over `0..universe`, `1 <= universe <= 64`.
    pub fn new(universe: u32) -> Result<Self> {
        if !(1..=64).contains(&universe) {
            return Err(Error::InvalidParams(format!("id universe {universe}")));
        }
        Ok(IdSet {
            bits: (universe as u64).next_power_of_two().trailing_zeros() as u8,
        })
    }

    /// Number of representable ids, `2^bits`.
    pub fn universe(&self) -> u32 {
        1 << self.bits
    }

    pub fn singleton(&self, id: u32) -> Result<SetBits> {
        SetBits::singleton(id, self.universe() as u8)
    }
}

impl MergeOperator for IdSet {
    type Value = SetBits;

    fn id(&self) -> OperatorId {
        OperatorId::IdSet
    }
    fn value_bits(&self) -> u8 {
        self.bits
    }
    fn encode(&self, value: &SetBits) -> Result<u64> {
        match value.ids().collect::<Vec<_>>().as_slice() {
            [id] if *id < self.universe() => Ok(*id as u64),
            _ => Err(Error::Domain(format!(
                "{value:?} is not a single id below {}",
                self.universe()
            ))),
        }
    }
    fn decode(&self, payload: u64) -> SetBits {
        SetBits(1 << (payload & low_mask(self.bits as u32)))
    }
    fn combine(&self, a: &SetBits, b: &SetBits) -> Result<SetBits> {
        Ok(a.union(*b))
    }
    fn combine_clamped(&self, a: &SetBits, b: &SetBits) -> SetBits {
        a.union(*b)
    }
    fn order_leq(&self, a: &SetBits, b: &SetBits) -> bool {
        a.is_subset(*b)
    }
    fn identity(&self) -> SetBits {
        SetBits::EMPTY
    }
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self> {
        check_header(OperatorId::IdSet, id)?;
        if value_bits > 6 {
            return Err(Error::Format(format!("id width {value_bits} above 6 bits")));
        }
        Ok(IdSet { bits: value_bits })
    }
    fn render(&self, value: &SetBits) -> String {
        let ids: Vec<String> = value.ids().map(|i| i.to_string()).collect();
        ids.join(",")
    }
}

/// Two's-complement `v`-bit counter forming a group under addition.
///
/// Used for add/delete deltas. Every value dominates every other under its
/// ordering, so it carries no one-sided guarantee of its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedCounter {
    bits: u8,
}

impl SignedCounter {
    pub fn new(bits: u8) -> Result<Self> {
        if !(2..=64).contains(&bits) {
            return Err(Error::InvalidParams(format!("signed counter width {bits}")));
        }
        Ok(SignedCounter { bits })
    }

    fn range(&self) -> (i64, i64) {
        let half = 1i128 << (self.bits - 1);
        ((-half) as i64, (half - 1) as i64)
    }

    fn checked(&self, v: i128) -> Result<i64> {
        let (lo, hi) = self.range();
        if v < lo as i128 || v > hi as i128 {
            Err(Error::ValueOverflow)
        } else {
            Ok(v as i64)
        }
    }
}

impl MergeOperator for SignedCounter {
    type Value = i64;

    fn id(&self) -> OperatorId {
        OperatorId::SignedCounter
    }
    fn value_bits(&self) -> u8 {
        self.bits
    }
    fn encode(&self, value: &i64) -> Result<u64> {
        let (lo, hi) = self.range();
        if *value < lo || *value > hi {
            return Err(Error::Domain(format!("{value} outside {}-bit signed range", self.bits)));
        }
        Ok(*value as u64 & low_mask(self.bits as u32))
    }
    fn decode(&self, payload: u64) -> i64 {
        let shift = 64 - self.bits as u32;
        ((payload << shift) as i64) >> shift
    }
    fn combine(&self, a: &i64, b: &i64) -> Result<i64> {
        self.checked(*a as i128 + *b as i128)
    }
    fn combine_clamped(&self, a: &i64, b: &i64) -> i64 {
        let (lo, hi) = self.range();
        (*a as i128 + *b as i128).clamp(lo as i128, hi as i128) as i64
    }
    fn order_leq(&self, _: &i64, _: &i64) -> bool {
        true
    }
    fn identity(&self) -> i64 {
        0
    }
    fn invertible(&self) -> bool {
        true
    }
    fn invert(&self, value: &i64) -> Result<i64> {
        self.checked(-(*value as i128))
    }
    fn cancel(&self, acc: &i64, value: &i64) -> Result<i64> {
        self.checked(*acc as i128 - *value as i128)
    }
    fn from_header(id: OperatorId, value_bits: u8) -> Result<Self> {
        check_header(OperatorId::SignedCounter, id)?;
        SignedCounter::new(value_bits)
    }
    fn render(&self, value: &i64) -> String {
        value.to_string()
    }
}

#[cfg(test)]
pub(crate) mod laws {
    use super::*;

    /// Associativity, commutativity, order-respect and identity on one triple.
    pub fn check_triple<O: MergeOperator>(op: &O, a: &O::Value, b: &O::Value, c: &O::Value) -> std::result::Result<(), String> {
        let ab = op.combine(a, b).map_err(|e| e.to_string())?;
        let ba = op.combine(b, a).map_err(|e| e.to_string())?;
        if ab != ba {
            return Err(format!("not commutative: {a:?} {b:?}"));
        }
        let ab_c = op.combine(&ab, c).map_err(|e| e.to_string())?;
        let bc = op.combine(b, c).map_err(|e| e.to_string())?;
        let a_bc = op.combine(a, &bc).map_err(|e| e.to_string())?;
        if ab_c != a_bc {
            return Err(format!("not associative: {a:?} {b:?} {c:?}"));
        }
        if !op.order_leq(a, &ab) || !op.order_leq(b, &ab) {
            return Err(format!("not order-respecting: {a:?} {b:?}"));
        }
        if op.combine(a, &op.identity()).map_err(|e| e.to_string())? != *a {
            return Err(format!("identity fails on {a:?}"));
        }
        if op.invertible() {
            if let Ok(inv) = op.invert(a) {
                if op.combine(a, &inv).map_err(|e| e.to_string())? != op.identity() {
                    return Err(format!("inverse fails on {a:?}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::laws::check_triple;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counter_zero_is_all_zero_payload() {
        let c = Counter::new(8).unwrap();
        assert_eq!(c.encode(&0).unwrap(), 0);
        assert_eq!(c.decode(0), 0);
    }

    #[test]
    fn bitset_positional_encoding() {
        let b = Bitset::new(8).unwrap();
        let set = SetBits::from_ids([0, 7], 8).unwrap();
        assert_eq!(b.encode(&set).unwrap(), 0b1000_0001);
        assert_eq!(b.decode(0b1000_0001), set);
        assert!(SetBits::singleton(8, 8).is_err());
        assert!(b.encode(&SetBits(1 << 9)).is_err());
    }

    #[test]
    fn exhaustive_roundtrip_small_widths() {
        for v in 1..=16u8 {
            let counter = Counter::new(v).unwrap();
            let bitset = Bitset::new(v).unwrap();
            let signed = (v >= 2).then(|| SignedCounter::new(v).unwrap());
            for payload in 0..(1u64 << v) {
                assert_eq!(counter.encode(&counter.decode(payload)).unwrap(), payload);
                assert_eq!(bitset.encode(&bitset.decode(payload)).unwrap(), payload);
                if let Some(s) = &signed {
                    assert_eq!(s.encode(&s.decode(payload)).unwrap(), payload);
                }
            }
        }
    }

    #[test]
    fn counter_domain_error() {
        let c = Counter::new(4).unwrap();
        assert!(matches!(c.encode(&16), Err(Error::Domain(_))));
    }

    #[test]
    fn counter_combine_and_order() {
        let c = Counter::new(8).unwrap();
        assert_eq!(c.combine(&3, &4).unwrap(), 7);
        assert!(c.order_leq(&3, &7));
        assert!(!c.order_leq(&8, &7));
    }

    #[test]
    fn counter_saturates_at_cap() {
        for v in [1u8, 7, 16, 64] {
            let c = Counter::new(v).unwrap();
            let max = c.max_value();
            assert_eq!(c.combine(&max, &1).unwrap(), max);
            // Saturated counts never come back down.
            assert_eq!(c.cancel(&max, &1).unwrap(), max);
        }
        let strict = Counter::with_policy(8, OverflowPolicy::Error).unwrap();
        assert!(matches!(strict.combine(&255, &1), Err(Error::ValueOverflow)));
        assert_eq!(strict.cancel(&255, &1).unwrap(), 254);
    }

    #[test]
    fn counter_cancel_underflows() {
        let c = Counter::new(8).unwrap();
        assert_eq!(c.cancel(&5, &5).unwrap(), 0);
        assert!(matches!(c.cancel(&2, &3), Err(Error::Underflow)));
        assert!(matches!(c.invert(&3), Err(Error::Underflow)));
    }

    #[test]
    fn bitset_has_no_inverse() {
        let b = Bitset::new(8).unwrap();
        assert!(!b.invertible());
        assert!(matches!(b.invert(&SetBits(1)), Err(Error::Unsupported)));
        assert!(matches!(b.cancel(&SetBits(1), &SetBits(1)), Err(Error::Unsupported)));
    }

    #[test]
    fn bitset_union_is_idempotent() {
        let b = Bitset::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = SetBits(rng.random());
            assert_eq!(b.combine(&a, &a).unwrap(), a);
        }
    }

    #[test]
    fn signed_counter_two_complement() {
        let s = SignedCounter::new(8).unwrap();
        assert_eq!(s.encode(&-1).unwrap(), 0xFF);
        assert_eq!(s.decode(0x80), -128);
        assert_eq!(s.combine(&5, &-5).unwrap(), 0);
        assert!(matches!(s.combine(&127, &1), Err(Error::ValueOverflow)));
        assert!(s.encode(&128).is_err());
    }

    #[test]
    fn randomized_operator_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in [1u8, 5, 12, 32, 64] {
            let c = Counter::new(v).unwrap();
            let b = Bitset::new(v).unwrap();
            for _ in 0..10_000 {
                let mut cv = || rng.random::<u64>() & c.max_value();
                let (x, y, z) = (cv(), cv(), cv());
                check_triple(&c, &x, &y, &z).unwrap();
                let m = low_mask(v as u32);
                let (x, y, z) = (SetBits(rng.random::<u64>() & m), SetBits(rng.random::<u64>() & m), SetBits(rng.random::<u64>() & m));
                check_triple(&b, &x, &y, &z).unwrap();
            }
        }
        let s = SignedCounter::new(32).unwrap();
        for _ in 0..10_000 {
            let mut sv = || rng.random_range(-1_000_000i64..1_000_000);
            let (x, y, z) = (sv(), sv(), sv());
            check_triple(&s, &x, &y, &z).unwrap();
        }
        for _ in 0..10 {
            check_triple(&Presence, &(), &(), &()).unwrap();
        }
    }

    #[test]
    fn id_set_is_compact() {
        let ids = IdSet::new(8).unwrap();
        assert_eq!(ids.value_bits(), 3);
        assert_eq!(IdSet::new(1).unwrap().value_bits(), 0);
        assert_eq!(IdSet::new(9).unwrap().value_bits(), 4);
        for i in 0..8 {
            let v = ids.singleton(i).unwrap();
            assert_eq!(ids.encode(&v).unwrap(), i as u64);
            assert_eq!(ids.decode(i as u64), v);
        }
        assert!(ids.encode(&SetBits(0b11)).is_err());
        assert!(ids.encode(&SetBits::EMPTY).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let mut s = || SetBits(rng.random::<u64>() & 0xFF);
            let (x, y, z) = (s(), s(), s());
            check_triple(&ids, &x, &y, &z).unwrap();
        }
    }

    #[test]
    fn header_roundtrip() {
        let c = Counter::with_policy(9, OverflowPolicy::Error).unwrap();
        assert_eq!(Counter::from_header(c.id(), 9).unwrap(), c);
        assert!(Bitset::from_header(OperatorId::SaturatingCounter, 8).is_err());
        assert!(OperatorId::from_u8(99).is_err());
    }
}
