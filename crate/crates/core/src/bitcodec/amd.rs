//! Algebraic manipulation detection code.
//!
//! A payload split into `d` blocks m_1..m_d of GF(2^k) is sent as
//! `(m, x, f(x, m))` with `f(x, m) = x^(d+2) + sum m_i x^i` and `x` uniform
//! over GF(2^k) minus {0, 1..1}. With `d` odd, `d + 2` is odd, so any fixed
//! additive offset survives the tag check for at most `d + 1` values of `x`.
//!
//! Excluding the all-zero and all-one tag inputs means a codeword always
//! contains both bit values, so a silent channel never reads as a codeword.

use rand::Rng;

use super::gf::BinaryField;
use super::CodecError;
use crate::bits::BitString;

#[derive(Clone, Debug)]
pub struct AmdCode {
    field: BinaryField,
    blocks: usize,
    payload_bits: usize,
}

impl AmdCode {
    pub fn new(field_bits: u32, payload_bits: usize) -> Result<Self, CodecError> {
        if field_bits < 2 {
            return Err(CodecError::Infeasible("tag field needs at least 2 bits".into()));
        }
        let field = BinaryField::new(field_bits)?;
        let k = field_bits as usize;
        let mut blocks = payload_bits.div_ceil(k).max(1);
        if blocks % 2 == 0 {
            blocks += 1;
        }
        Ok(AmdCode { field, blocks, payload_bits })
    }

    /// Narrowest code for `payload_bits` whose detection bound is at most
    /// `target`.
    pub fn for_target(payload_bits: usize, target: f64) -> Result<Self, CodecError> {
        (2..=super::gf::MAX_DEGREE)
            .filter_map(|k| Self::new(k, payload_bits).ok())
            .filter(|c| c.detection_bound() <= target)
            .min_by_key(|c| c.width())
            .ok_or_else(|| {
                CodecError::Infeasible(format!(
                    "no tag field reaches detection bound {target:e} for {payload_bits}-bit payloads"
                ))
            })
    }

    pub fn field_bits(&self) -> u32 {
        self.field.degree()
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn payload_bits(&self) -> usize {
        self.payload_bits
    }

    /// Codeword length in bits.
    pub fn width(&self) -> usize {
        (self.blocks + 2) * self.field.degree() as usize
    }

    /// Probability that a fixed nonzero offset goes undetected.
    pub fn detection_bound(&self) -> f64 {
        (self.blocks + 1) as f64 / (self.field.order_f64() - 2.0)
    }

    fn k(&self) -> usize {
        self.field.degree() as usize
    }

    pub fn tag(&self, x: u128, payload: &BitString) -> u128 {
        let k = self.k();
        let mut acc = 0u128;
        for i in (0..self.blocks).rev() {
            acc = self.field.mul(acc ^ payload.read_uint(i * k, k), x);
        }
        acc ^ self.field.pow(x, self.blocks as u128 + 2)
    }

    fn valid_tag_input(&self, x: u128) -> bool {
        x != 0 && x != self.field.mask()
    }

    pub fn encode_with(&self, payload: &BitString, x: u128) -> Result<BitString, CodecError> {
        if payload.len() > self.payload_bits {
            return Err(CodecError::PayloadTooLong { max: self.payload_bits, got: payload.len() });
        }
        if !self.valid_tag_input(x) || x > self.field.mask() {
            return Err(CodecError::Infeasible(format!("tag input {x:#x} not allowed")));
        }
        let mut word = payload.clone();
        word.pad_to(self.blocks * self.k());
        let tag = self.tag(x, &word);
        word.push_uint(x, self.k());
        word.push_uint(tag, self.k());
        Ok(word)
    }

    pub fn encode<R: Rng + ?Sized>(
        &self,
        payload: &BitString,
        rng: &mut R,
    ) -> Result<BitString, CodecError> {
        let x = loop {
            let x = rng.gen::<u128>() & self.field.mask();
            if self.valid_tag_input(x) {
                break x;
            }
        };
        self.encode_with(payload, x)
    }

    /// Payload of a valid codeword. Only the first `width()` bits of `word`
    /// are read, so callers may hand in a zero-padded slot.
    pub fn decode(&self, word: &BitString) -> Result<BitString, CodecError> {
        if word.len() < self.width() {
            return Err(CodecError::WidthMismatch { expected: self.width(), got: word.len() });
        }
        let k = self.k();
        let body = self.blocks * k;
        let x = word.read_uint(body, k);
        let tag = word.read_uint(body + k, k);
        if !self.valid_tag_input(x) {
            return Err(CodecError::NotCodeword);
        }
        let payload = word.slice(0, body);
        if payload.as_slice()[self.payload_bits..].iter().any(|&b| b != 0) {
            return Err(CodecError::NotCodeword);
        }
        if self.tag(x, &payload) != tag {
            return Err(CodecError::NotCodeword);
        }
        Ok(payload.slice(0, self.payload_bits))
    }

    pub fn is_codeword(&self, word: &BitString) -> bool {
        self.decode(word).is_ok()
    }
}
