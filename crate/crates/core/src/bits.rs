//! Packed bit sequences.
//!
//! Bit `i` of a [`BitSeq`] lives in word `i / 64` at position `i % 64`. Byte
//! and hex conversions pack most-significant-bit first: sequence bit 0 is the
//! top bit of the first byte.

use std::fmt;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitSeq {
    words: Vec<u64>,
    len: usize,
}

impl BitSeq {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut seq = Self::new();
        seq.extend(bits);
        seq
    }

    /// Parses a string of `'0'`/`'1'` characters; anything else is ignored.
    pub fn from_bit_str(s: &str) -> Self {
        Self::from_bools(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    /// Unpacks `len` bits from MSB-first bytes.
    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() * 8 < len {
            return None;
        }
        Some(Self::from_bools(
            (0..len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1),
        ))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (i & 63);
        if bit {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len & 63 == 0 {
            self.words.push(0);
        }
        if bit {
            self.words[self.len >> 6] |= 1 << (self.len & 63);
        }
        self.len += 1;
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = bool> + ExactSizeIterator + '_ {
        (0..self.len).map(move |i| self.words[i >> 6] >> (i & 63) & 1 == 1)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Raw words; bits past `len` are always zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The 64 bits starting at `start`, bit `j` of the result being sequence
    /// bit `start + j`. Positions past the end read as zero.
    #[inline]
    pub fn window64(&self, start: usize) -> u64 {
        let w = start >> 6;
        let s = start & 63;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if s == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            (lo >> s) | (hi << (64 - s))
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.len);
        let len = end - start;
        let mut words: Vec<u64> = (0..len.div_ceil(64))
            .map(|j| self.window64(start + 64 * j))
            .collect();
        if len & 63 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len & 63)) - 1;
            }
        }
        Self { words, len }
    }

    pub fn append(&mut self, other: &BitSeq) {
        for bit in other.iter() {
            self.push(bit);
        }
    }

    /// In-place XOR with a sequence of the same length.
    pub fn xor_assign(&mut self, other: &BitSeq) {
        assert_eq!(
            self.len, other.len,
            "xor of sequences with different lengths"
        );
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn complement(&self) -> Self {
        Self::from_bools(self.iter().map(|b| !b))
    }

    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for (i, bit) in self.iter().enumerate() {
            if bit {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes_msb())
    }

    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }
}

impl Extend<bool> for BitSeq {
    fn extend<I: IntoIterator<Item = bool>>(&mut self, iter: I) {
        for bit in iter {
            self.push(bit);
        }
    }
}

impl FromIterator<bool> for BitSeq {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bools(iter)
    }
}

impl fmt::Debug for BitSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitSeq({})", self.to_bit_string())
        } else {
            write!(
                f,
                "BitSeq(len={}, hex={}..)",
                self.len,
                &self.to_hex()[..32]
            )
        }
    }
}
