//! Bit-level error correction and the composed robust codec.
//!
//! [`EccCode`] packs a bit string into Reed-Solomon symbols and fills a
//! fixed-width slot: the code length is as many whole symbols as the slot
//! holds, and the last `slot % m` bits are zero padding. Correction is
//! guaranteed for any corruption confined to at most `capacity()` symbols.
//!
//! [`RobustCodec`] wraps an [`AmdCode`] word in an [`EccCode`].

use rand::Rng;

use super::amd::AmdCode;
use super::gf::{SymbolField, MAX_SYMBOL_BITS};
use super::rs::ReedSolomon;
use super::CodecError;
use crate::bits::BitString;

#[derive(Clone, Debug)]
pub struct EccCode {
    rs: ReedSolomon,
    data_bits: usize,
    slot_bits: usize,
}

impl EccCode {
    /// Explicit symbol width and code length.
    pub fn with_shape(
        symbol_bits: u32,
        code_len: usize,
        data_bits: usize,
        slot_bits: usize,
    ) -> Result<Self, CodecError> {
        let field = SymbolField::new(symbol_bits)?;
        let k = data_bits.div_ceil(symbol_bits as usize);
        if code_len * symbol_bits as usize > slot_bits {
            return Err(CodecError::Infeasible(format!(
                "{code_len} symbols of {symbol_bits} bits exceed a {slot_bits}-bit slot"
            )));
        }
        let rs = ReedSolomon::new(field, code_len, k)?;
        Ok(EccCode { rs, data_bits, slot_bits })
    }

    /// Narrowest symbol width whose field can fill `slot_bits` with a code at
    /// least three times the data length.
    pub fn fill_slot(data_bits: usize, slot_bits: usize) -> Result<Self, CodecError> {
        for m in 2..=MAX_SYMBOL_BITS {
            let n = slot_bits / m as usize;
            let k = data_bits.div_ceil(m as usize);
            if n > (1usize << m) - 1 || n < 3 * k || k == 0 {
                continue;
            }
            return Self::with_shape(m, n, data_bits, slot_bits);
        }
        Err(CodecError::Infeasible(format!(
            "cannot fit a rate-1/3 code for {data_bits} bits into {slot_bits} bits"
        )))
    }

    pub fn rs(&self) -> &ReedSolomon {
        &self.rs
    }

    pub fn symbol_bits(&self) -> u32 {
        self.rs.field().bits()
    }

    pub fn data_bits(&self) -> usize {
        self.data_bits
    }

    pub fn slot_bits(&self) -> usize {
        self.slot_bits
    }

    /// Symbols that may be corrupted arbitrarily without a decoding error.
    pub fn capacity(&self) -> usize {
        self.rs.capacity()
    }

    fn to_symbols(&self, bits: &BitString, count: usize) -> Vec<u16> {
        let m = self.symbol_bits() as usize;
        (0..count).map(|i| bits.read_uint(i * m, m) as u16).collect()
    }

    fn to_bits(&self, symbols: &[u16]) -> BitString {
        let m = self.symbol_bits() as usize;
        let mut out = BitString::with_capacity(self.slot_bits);
        for &s in symbols {
            out.push_uint(s as u128, m);
        }
        out
    }

    pub fn encode(&self, data: &BitString) -> Result<BitString, CodecError> {
        if data.len() > self.data_bits {
            return Err(CodecError::PayloadTooLong { max: self.data_bits, got: data.len() });
        }
        let symbols = self.to_symbols(data, self.rs.data_len());
        let mut out = self.to_bits(&self.rs.encode(&symbols)?);
        out.pad_to(self.slot_bits);
        Ok(out)
    }

    /// Nearest codeword within capacity, re-serialized to a full slot.
    pub fn decode_word(&self, word: &BitString) -> Result<BitString, CodecError> {
        let symbols = self.received_symbols(word)?;
        let mut out = self.to_bits(&self.rs.decode(&symbols)?);
        out.pad_to(self.slot_bits);
        Ok(out)
    }

    pub fn decode(&self, word: &BitString) -> Result<BitString, CodecError> {
        let symbols = self.received_symbols(word)?;
        let data = self.rs.decode_data(&symbols)?;
        let mut bits = self.to_bits(&data);
        bits.truncate(self.data_bits);
        Ok(bits)
    }

    fn received_symbols(&self, word: &BitString) -> Result<Vec<u16>, CodecError> {
        if word.len() != self.slot_bits {
            return Err(CodecError::WidthMismatch { expected: self.slot_bits, got: word.len() });
        }
        Ok(self.to_symbols(word, self.rs.code_len()))
    }
}

#[derive(Clone, Debug)]
pub struct RobustCodec {
    amd: AmdCode,
    ecc: EccCode,
}

impl RobustCodec {
    pub fn new(amd: AmdCode, slot_bits: usize) -> Result<Self, CodecError> {
        let ecc = EccCode::fill_slot(amd.width(), slot_bits)?;
        Ok(RobustCodec { amd, ecc })
    }

    pub fn amd(&self) -> &AmdCode {
        &self.amd
    }

    pub fn ecc(&self) -> &EccCode {
        &self.ecc
    }

    pub fn slot_bits(&self) -> usize {
        self.ecc.slot_bits()
    }

    pub fn encode<R: Rng + ?Sized>(
        &self,
        payload: &BitString,
        rng: &mut R,
    ) -> Result<BitString, CodecError> {
        self.ecc.encode(&self.amd.encode(payload, rng)?)
    }

    pub fn decode(&self, word: &BitString) -> Result<BitString, CodecError> {
        self.amd.decode(&self.ecc.decode(word)?)
    }
}

/// Majority bit; ties go to 0.
pub fn majority(bits: &BitString) -> u8 {
    (2 * bits.count_ones() > bits.len()) as u8
}

/// Number of adjacent positions holding different bits.
pub fn count_alternations(bits: &BitString) -> usize {
    bits.as_slice().windows(2).filter(|w| w[0] != w[1]).count()
}
