//! 2-bit k-mer words: A=0, C=1, G=2, T=3, first base in the high bits.

use crate::hash::low_mask;

pub const MAX_K: u8 = 31;

#[inline]
pub fn encode_base(b: u8) -> Option<u64> {
    match b {
        b'A' | b'a' => Some(0),
        b'C' | b'c' => Some(1),
        b'G' | b'g' => Some(2),
        b'T' | b't' => Some(3),
        _ => None,
    }
}

/// Parses a k-mer of length at most [`MAX_K`]. `None` on any non-ACGT base.
pub fn encode_kmer(text: &[u8]) -> Option<u64> {
    if text.is_empty() || text.len() > MAX_K as usize {
        return None;
    }
    text.iter()
        .try_fold(0u64, |acc, b| Some(acc << 2 | encode_base(*b)?))
}

pub fn decode_kmer(word: u64, k: u8) -> String {
    (0..k)
        .rev()
        .map(|i| b"ACGT"[(word >> (2 * i as u32) & 3) as usize] as char)
        .collect()
}

pub fn reverse_complement(word: u64, k: u8) -> u64 {
    let mut x = !word;
    let mut out = 0u64;
    for _ in 0..k {
        out = out << 2 | (x & 3);
        x >>= 2;
    }
    out
}

#[inline]
pub fn canonical(word: u64, k: u8) -> u64 {
    word.min(reverse_complement(word, k))
}

/// Rolling iterator over the k-mer words of a sequence. Windows containing a
/// non-ACGT byte are skipped; the window restarts after it.
pub struct Kmers<'a> {
    seq: &'a [u8],
    pos: usize,
    k: u8,
    canonical: bool,
    fw: u64,
    rc: u64,
    filled: u8,
    mask: u64,
    rc_shift: u32,
}

impl<'a> Kmers<'a> {
    pub fn new(seq: &'a [u8], k: u8, canonical: bool) -> Self {
        assert!((1..=MAX_K).contains(&k), "k must be in 1..=31");
        Kmers {
            seq,
            pos: 0,
            k,
            canonical,
            fw: 0,
            rc: 0,
            filled: 0,
            mask: low_mask(2 * k as u32),
            rc_shift: 2 * (k as u32 - 1),
        }
    }
}

impl Iterator for Kmers<'_> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        while self.pos < self.seq.len() {
            let b = self.seq[self.pos];
            self.pos += 1;
            let Some(c) = encode_base(b) else {
                self.filled = 0;
                continue;
            };
            self.fw = (self.fw << 2 | c) & self.mask;
            self.rc = self.rc >> 2 | (3 - c) << self.rc_shift;
            if self.filled < self.k {
                self.filled += 1;
            }
            if self.filled == self.k {
                return Some(if self.canonical { self.fw.min(self.rc) } else { self.fw });
            }
        }
        None
    }
}
