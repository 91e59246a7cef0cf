//! Owned bit strings.
//!
//! Bits are kept one per byte. Transcripts in this crate are a few thousand
//! bits at most, so the simpler layout wins over packing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid bit character {0:?}")]
    BadChar(char),
    #[error("malformed hex bit string: {0}")]
    BadHex(String),
}

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        BitString { bits: Vec::with_capacity(n) }
    }

    pub fn zeros(n: usize) -> Self {
        BitString { bits: vec![0; n] }
    }

    pub fn ones(n: usize) -> Self {
        BitString { bits: vec![1; n] }
    }

    /// Builds from a slice of 0/1 values; any nonzero byte counts as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        BitString { bits: bits.iter().map(|&b| (b != 0) as u8).collect() }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        BitString { bits: (0..n).map(|_| rng.gen::<bool>() as u8).collect() }
    }

    /// `width` low bits of `value`, most significant first.
    pub fn from_uint(value: u128, width: usize) -> Self {
        let mut out = Self::with_capacity(width);
        out.push_uint(value, width);
        out
    }

    pub fn push_uint(&mut self, value: u128, width: usize) {
        debug_assert!(width <= 128);
        for i in (0..width).rev() {
            self.bits.push(((value >> i) & 1) as u8);
        }
    }

    /// Reads `width` bits starting at `start` as an unsigned integer, MSB first.
    /// Bits past the end read as zero.
    pub fn read_uint(&self, start: usize, width: usize) -> u128 {
        debug_assert!(width <= 128);
        let mut v = 0u128;
        for i in start..start + width {
            v = (v << 1) | self.get(i).unwrap_or(0) as u128;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.bits.get(i).copied()
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        self.bits[i] = (bit != 0) as u8;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] ^= 1;
    }

    pub fn push(&mut self, bit: u8) {
        self.bits.push((bit != 0) as u8);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn truncate(&mut self, n: usize) {
        self.bits.truncate(n);
    }

    /// Zero-extends to `n` bits. Longer strings are left alone.
    pub fn pad_to(&mut self, n: usize) {
        if self.bits.len() < n {
            self.bits.resize(n, 0);
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        BitString { bits: self.bits[start..end].to_vec() }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.bits.iter().copied()
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        other.bits.starts_with(&self.bits)
    }

    /// True for the empty string and for strings of a single repeated bit.
    pub fn all_equal(&self) -> bool {
        self.bits.windows(2).all(|w| w[0] == w[1])
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, BitsError> {
        if self.len() != other.len() {
            return Err(BitsError::LengthMismatch(self.len(), other.len()));
        }
        Ok(BitString { bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect() })
    }

    pub fn hamming(&self, other: &BitString) -> Result<usize, BitsError> {
        Ok(self.xor(other)?.count_ones())
    }

    /// `"<nbits>:<hex>"`, bits packed MSB first, trailing pad bits zero.
    pub fn to_hex(&self) -> String {
        let mut hex = String::with_capacity(self.len() / 4 + 8);
        for chunk in self.bits.chunks(4) {
            let mut nib = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                nib |= b << (3 - i);
            }
            hex.push(char::from_digit(nib as u32, 16).unwrap());
        }
        format!("{}:{}", self.len(), hex)
    }

    pub fn from_hex(s: &str) -> Result<BitString, BitsError> {
        let s = s.trim();
        let (n, hex) = s.split_once(':').ok_or_else(|| BitsError::BadHex(s.to_string()))?;
        let n: usize = n.parse().map_err(|_| BitsError::BadHex(s.to_string()))?;
        if hex.len() != n.div_ceil(4) {
            return Err(BitsError::BadHex(s.to_string()));
        }
        let mut out = BitString::with_capacity(n);
        for c in hex.chars() {
            let nib = c.to_digit(16).ok_or_else(|| BitsError::BadHex(s.to_string()))?;
            out.push_uint(nib as u128, 4);
        }
        if out.bits[n..].iter().any(|&b| b != 0) {
            return Err(BitsError::BadHex(s.to_string()));
        }
        out.truncate(n);
        Ok(out)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 64 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, {})", self.len(), self.to_hex())
        }
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(BitsError::BadChar(other)),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(|bits| BitString { bits })
    }
}

/// Serialized as a string of '0' and '1' characters.
impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromIterator<u8> for BitString {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        BitString { bits: iter.into_iter().map(|b| (b != 0) as u8).collect() }
    }
}
