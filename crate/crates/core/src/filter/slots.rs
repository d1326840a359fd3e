/// Fixed-width packed array of slot words (up to 128 bits each), stored
/// contiguously in little-endian bit order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct PackedSlots {
    width: u32,
    len: usize,
    words: Vec<u64>,
}

impl PackedSlots {
    pub fn new(width: u32, len: usize) -> Self {
        debug_assert!(width <= 128);
        PackedSlots {
            width,
            len,
            words: vec![0; Self::word_count(width, len)],
        }
    }

    pub fn word_count(width: u32, len: usize) -> usize {
        (width as usize * len).div_ceil(64)
    }

    pub fn from_words(width: u32, len: usize, words: Vec<u64>) -> Option<Self> {
        (words.len() == Self::word_count(width, len)).then_some(PackedSlots { width, len, words })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, index: usize) -> u128 {
        debug_assert!(index < self.len);
        let w = self.width as usize;
        let mut pos = index * w;
        let mut out = 0u128;
        let mut got = 0;
        while got < w {
            let word = self.words[pos / 64];
            let bit = pos % 64;
            let take = (64 - bit).min(w - got);
            let bits = (word >> bit) & mask64(take);
            out |= (bits as u128) << got;
            got += take;
            pos += take;
        }
        out
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: u128) {
        debug_assert!(index < self.len);
        let w = self.width as usize;
        let mut pos = index * w;
        let mut done = 0;
        while done < w {
            let bit = pos % 64;
            let take = (64 - bit).min(w - done);
            let m = mask64(take) << bit;
            let chunk = ((value >> done) as u64 & mask64(take)) << bit;
            let word = &mut self.words[pos / 64];
            *word = (*word & !m) | chunk;
            done += take;
            pos += take;
        }
    }
}

#[inline]
fn mask64(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}
