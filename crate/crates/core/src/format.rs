//! Binary maplet files. Little-endian throughout; see `docs/format.md`.
//!
//! ```text
//! magic "MPLT" | version u16 | hash id u8 | mode u8 | operator id u8 | seed u64
//! | p u8 | q u8 | r u8 | v u8 | item_count u64 | alpha u16 | body | crc32c u32
//! ```
//!
//! Version 1 bodies hold the slot table verbatim. Version 2 bodies hold only
//! the entries, packed as `(p + v)`-bit words in fingerprint order, and are
//! rebuilt into a table on load.

use std::io::{Read, Write};

use crate::codec::{Bitset, Counter, IdSet, MergeOperator, OperatorId, Presence, SignedCounter};
use crate::error::{Error, Result};
use crate::filter::{BlockMeta, FilterCore, FilterParams, Fingerprint, SLOTS_PER_BLOCK};
use crate::filter::PackedSlots;
use crate::hash::{low_mask, KeyHasher};
use crate::maplet::{Maplet, Mode};

pub const MAGIC: [u8; 4] = *b"MPLT";
pub const HEADER_BYTES: usize = 31;
pub const CHECKSUM_BYTES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum Layout {
    /// Block metadata and slot words as stored in memory.
    Dense = 1,
    /// Sorted entry list; size proportional to item count.
    Sparse = 2,
}

impl Layout {
    fn from_version(version: u16) -> Result<Self> {
        match version {
            1 => Ok(Layout::Dense),
            2 => Ok(Layout::Sparse),
            other => Err(Error::Format(format!("unsupported version {other}"))),
        }
    }
}

/// Decoded fixed-size header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub layout: Layout,
    pub hasher: KeyHasher,
    pub mode: Mode,
    pub operator: OperatorId,
    pub params: FilterParams,
    pub item_count: u64,
}

impl Header {
    fn encode(&self, out: &mut Vec<u8>) {
        let p = &self.params;
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.layout as u16).to_le_bytes());
        out.push(self.hasher.id());
        out.push(self.mode as u8);
        out.push(self.operator as u8);
        out.extend_from_slice(&p.hash_seed().to_le_bytes());
        out.push(p.fingerprint_bits());
        out.push(p.quotient_bits());
        out.push(p.remainder_bits());
        out.push(p.value_bits());
        out.extend_from_slice(&self.item_count.to_le_bytes());
        out.extend_from_slice(&p.load_factor_fixed().to_le_bytes());
    }

    fn decode(bytes: &[u8; HEADER_BYTES]) -> Result<Self> {
        if bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let layout = Layout::from_version(u16::from_le_bytes([bytes[4], bytes[5]]))?;
        let hasher = KeyHasher::from_id(bytes[6])?;
        let mode = Mode::from_u8(bytes[7])?;
        let operator = OperatorId::from_u8(bytes[8])?;
        let seed = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let (p, q, r, v) = (bytes[17], bytes[18], bytes[19], bytes[20]);
        let item_count = u64::from_le_bytes(bytes[21..29].try_into().unwrap());
        let alpha = u16::from_le_bytes([bytes[29], bytes[30]]);
        if q.checked_add(r) != Some(p) {
            return Err(Error::Format(format!("p={p} but q={q}, r={r}")));
        }
        if q > 40 {
            return Err(Error::Format(format!("quotient bits {q} too large")));
        }
        let params = FilterParams::new(q, r, v)
            .and_then(|p| p.with_load_factor_fixed(alpha))
            .map_err(|e| Error::Format(e.to_string()))?
            .with_seed(seed)
            .with_hasher(hasher);
        Ok(Header {
            layout,
            hasher,
            mode,
            operator,
            params,
            item_count,
        })
    }

    fn body_bytes(&self) -> Result<u64> {
        let p = &self.params;
        match self.layout {
            Layout::Dense => {
                let n = p.num_slots();
                let width = p.remainder_bits() as u32 + p.value_bits() as u32;
                let blocks = (n / SLOTS_PER_BLOCK) as u64;
                Ok(blocks * 18 + PackedSlots::word_count(width, n) as u64 * 8)
            }
            Layout::Sparse => {
                let width = p.fingerprint_bits() as u64 + p.value_bits() as u64;
                let words = self
                    .item_count
                    .checked_mul(width)
                    .ok_or_else(|| Error::Format("item count overflows".into()))?
                    .div_ceil(64);
                Ok(words * 8)
            }
        }
    }
}

/// Reads just the header of a maplet file.
pub fn read_header(mut source: impl Read) -> Result<Header> {
    let mut bytes = [0u8; HEADER_BYTES];
    read_exact(&mut source, &mut bytes)?;
    Header::decode(&bytes)
}

fn read_exact(source: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TruncatedStream,
        _ => Error::Io(e),
    })
}

fn push_words(out: &mut Vec<u8>, words: &[u64]) {
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

fn take_u64s(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Serializes `maplet` with the given body layout.
pub fn to_bytes<O: MergeOperator>(maplet: &Maplet<O>, layout: Layout) -> Vec<u8> {
    let core = maplet.core();
    let params = *core.params();
    let header = Header {
        layout,
        hasher: params.hasher(),
        mode: maplet.mode(),
        operator: maplet.operator().id(),
        params,
        item_count: core.len(),
    };
    let mut out = Vec::with_capacity(HEADER_BYTES + CHECKSUM_BYTES);
    header.encode(&mut out);
    match layout {
        Layout::Dense => {
            let (blocks, words) = core.raw_parts();
            for b in blocks {
                out.extend_from_slice(&b.occupieds.to_le_bytes());
            }
            for b in blocks {
                out.extend_from_slice(&b.runends.to_le_bytes());
            }
            for b in blocks {
                out.extend_from_slice(&b.offset.to_le_bytes());
            }
            push_words(&mut out, words);
        }
        Layout::Sparse => {
            let p = params.fingerprint_bits() as u32;
            let width = p + params.value_bits() as u32;
            let mut packed = PackedSlots::new(width, core.len() as usize);
            for (i, (fp, payload)) in core.enumerate().enumerate() {
                packed.set(i, fp.raw() as u128 | (payload as u128) << p);
            }
            push_words(&mut out, packed.words());
        }
    }
    let crc = crc32c::crc32c(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn write<O: MergeOperator>(maplet: &Maplet<O>, layout: Layout, mut sink: impl Write) -> Result<u64> {
    let bytes = to_bytes(maplet, layout);
    sink.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

/// Reads a full maplet file and checks its checksum. Returns the header and
/// the rebuilt filter.
fn read_core(mut source: impl Read) -> Result<(Header, FilterCore)> {
    let mut head = [0u8; HEADER_BYTES];
    read_exact(&mut source, &mut head)?;
    let header = Header::decode(&head)?;
    let body_len = header.body_bytes()?;
    let mut body = Vec::new();
    (&mut source)
        .take(body_len)
        .read_to_end(&mut body)
        .map_err(Error::Io)?;
    if body.len() as u64 != body_len {
        return Err(Error::TruncatedStream);
    }
    let mut crc = [0u8; CHECKSUM_BYTES];
    read_exact(&mut source, &mut crc)?;
    let expected = crc32c::crc32c_append(crc32c::crc32c(&head), &body);
    if u32::from_le_bytes(crc) != expected {
        return Err(Error::Format("checksum mismatch".into()));
    }

    let params = header.params;
    let core = match header.layout {
        Layout::Dense => {
            let nblocks = params.num_slots() / SLOTS_PER_BLOCK;
            let (occ, rest) = body.split_at(nblocks * 8);
            let (run, rest) = rest.split_at(nblocks * 8);
            let (offs, words) = rest.split_at(nblocks * 2);
            let occ = take_u64s(occ);
            let run = take_u64s(run);
            let blocks = (0..nblocks)
                .map(|i| BlockMeta {
                    occupieds: occ[i],
                    runends: run[i],
                    offset: u16::from_le_bytes([offs[2 * i], offs[2 * i + 1]]),
                })
                .collect();
            FilterCore::from_raw_parts(params, blocks, take_u64s(words), header.item_count)?
        }
        Layout::Sparse => {
            let p = params.fingerprint_bits() as u32;
            let width = p + params.value_bits() as u32;
            let n = header.item_count as usize;
            let packed = PackedSlots::from_words(width, n, take_u64s(&body))
                .ok_or_else(|| Error::Format("entry section size mismatch".into()))?;
            let mut prev: Option<u64> = None;
            let mut entries = Vec::with_capacity(n);
            for i in 0..n {
                let word = packed.get(i);
                let fp = word as u64 & low_mask(p);
                let payload = (word >> p) as u64;
                if prev.is_some_and(|last| fp < last) {
                    return Err(Error::Format("entries out of order".into()));
                }
                prev = Some(fp);
                entries.push((Fingerprint::new(fp), payload));
            }
            let params = FilterCore::params_for(&params, header.item_count)
                .map_err(|e| Error::Format(e.to_string()))?;
            FilterCore::from_sorted(params, entries).map_err(|e| Error::Format(e.to_string()))?
        }
    };
    Ok((header, core))
}

pub fn read<O: MergeOperator>(source: impl Read) -> Result<Maplet<O>> {
    let (header, core) = read_core(source)?;
    let op = O::from_header(header.operator, header.params.value_bits())?;
    Maplet::from_core(core, op, header.mode)
}

pub fn from_bytes<O: MergeOperator>(bytes: &[u8]) -> Result<Maplet<O>> {
    read(bytes)
}

/// A maplet whose operator is only known at run time.
#[derive(Clone, Debug)]
pub enum AnyMaplet {
    Presence(Maplet<Presence>),
    Counter(Maplet<Counter>),
    Bitset(Maplet<Bitset>),
    Signed(Maplet<SignedCounter>),
    IdSet(Maplet<IdSet>),
}

macro_rules! each_maplet {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyMaplet::Presence($m) => $body,
            AnyMaplet::Counter($m) => $body,
            AnyMaplet::Bitset($m) => $body,
            AnyMaplet::Signed($m) => $body,
            AnyMaplet::IdSet($m) => $body,
        }
    };
}

impl AnyMaplet {
    pub fn read(source: impl Read) -> Result<Self> {
        let (header, core) = read_core(source)?;
        let v = header.params.value_bits();
        Ok(match header.operator {
            OperatorId::Presence => {
                AnyMaplet::Presence(Maplet::from_core(core, Presence::from_header(header.operator, v)?, header.mode)?)
            }
            OperatorId::SaturatingCounter | OperatorId::CheckedCounter => {
                AnyMaplet::Counter(Maplet::from_core(core, Counter::from_header(header.operator, v)?, header.mode)?)
            }
            OperatorId::Bitset => {
                AnyMaplet::Bitset(Maplet::from_core(core, Bitset::from_header(header.operator, v)?, header.mode)?)
            }
            OperatorId::SignedCounter => {
                AnyMaplet::Signed(Maplet::from_core(core, SignedCounter::from_header(header.operator, v)?, header.mode)?)
            }
            OperatorId::IdSet => {
                AnyMaplet::IdSet(Maplet::from_core(core, IdSet::from_header(header.operator, v)?, header.mode)?)
            }
        })
    }

    pub fn params(&self) -> &FilterParams {
        each_maplet!(self, m => m.params())
    }

    pub fn len(&self) -> u64 {
        each_maplet!(self, m => m.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self, layout: Layout) -> Vec<u8> {
        each_maplet!(self, m => to_bytes(m, layout))
    }

    /// `(fingerprint, rendered value)` for every stored slot, in fingerprint
    /// order.
    pub fn dump(&self) -> Vec<(Fingerprint, String)> {
        each_maplet!(self, m => m
            .enumerate()
            .map(|(fp, v)| (fp, m.operator().render(&v)))
            .collect())
    }

    pub fn merge(a: &AnyMaplet, b: &AnyMaplet) -> Result<AnyMaplet> {
        Ok(match (a, b) {
            (AnyMaplet::Presence(x), AnyMaplet::Presence(y)) => AnyMaplet::Presence(Maplet::merge(x, y)?),
            (AnyMaplet::Counter(x), AnyMaplet::Counter(y)) => AnyMaplet::Counter(Maplet::merge(x, y)?),
            (AnyMaplet::Bitset(x), AnyMaplet::Bitset(y)) => AnyMaplet::Bitset(Maplet::merge(x, y)?),
            (AnyMaplet::Signed(x), AnyMaplet::Signed(y)) => AnyMaplet::Signed(Maplet::merge(x, y)?),
            (AnyMaplet::IdSet(x), AnyMaplet::IdSet(y)) => AnyMaplet::IdSet(Maplet::merge(x, y)?),
            _ => return Err(Error::IncompatibleParams("operators differ".into())),
        })
    }

    pub fn mode(&self) -> Mode {
        each_maplet!(self, m => m.mode())
    }

    pub fn operator_id(&self) -> OperatorId {
        each_maplet!(self, m => m.operator().id())
    }
}

impl<O: MergeOperator> Maplet<O> {
    /// Dense serialization; see [`crate::format`].
    pub fn serialize(&self, sink: impl Write) -> Result<u64> {
        write(self, Layout::Dense, sink)
    }

    pub fn deserialize(source: impl Read) -> Result<Self> {
        read(source)
    }
}
