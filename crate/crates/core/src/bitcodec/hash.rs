//! Seeded polynomial fingerprints of transcripts.
//!
//! A string of `n` bits is read as coefficients over GF(2^k): first its
//! length, then its k-bit chunks (last chunk zero-padded). The digest is that
//! polynomial, shifted up by one degree, evaluated at a random nonzero seed.
//! Two distinct strings of at most `n` bits collide for at most
//! `ceil(n/k) + 1` seeds.

use rand::Rng;

use super::gf::BinaryField;
use super::CodecError;
use crate::bits::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub seed: u128,
    pub digest: u128,
}

impl Fingerprint {
    pub fn to_bits(&self, field_bits: u32) -> BitString {
        let mut out = BitString::from_uint(self.seed, field_bits as usize);
        out.push_uint(self.digest, field_bits as usize);
        out
    }

    pub fn from_bits(bits: &BitString, field_bits: u32) -> Fingerprint {
        let k = field_bits as usize;
        Fingerprint { seed: bits.read_uint(0, k), digest: bits.read_uint(k, k) }
    }
}

#[derive(Clone, Debug)]
pub struct FingerprintHash {
    field: BinaryField,
    max_bits: usize,
}

impl FingerprintHash {
    pub fn new(field_bits: u32, max_bits: usize) -> Result<Self, CodecError> {
        let field = BinaryField::new(field_bits)?;
        if (max_bits as u128) > field.mask() {
            return Err(CodecError::Infeasible(format!(
                "GF(2^{field_bits}) cannot encode transcript lengths up to {max_bits}"
            )));
        }
        Ok(FingerprintHash { field, max_bits })
    }

    /// Smallest field whose collision bound over `max_bits`-bit inputs is at
    /// most `target`.
    pub fn for_target(max_bits: usize, target: f64) -> Result<Self, CodecError> {
        (2..=super::gf::MAX_DEGREE)
            .filter_map(|k| Self::new(k, max_bits).ok())
            .find(|h| h.collision_bound() <= target)
            .ok_or_else(|| {
                CodecError::Infeasible(format!(
                    "no field reaches collision bound {target:e} for {max_bits}-bit transcripts"
                ))
            })
    }

    pub fn field_bits(&self) -> u32 {
        self.field.degree()
    }

    pub fn field(&self) -> &BinaryField {
        &self.field
    }

    pub fn max_bits(&self) -> usize {
        self.max_bits
    }

    /// Width of a serialized fingerprint (seed then digest).
    pub fn payload_bits(&self) -> usize {
        2 * self.field.degree() as usize
    }

    /// Collision probability bound for inputs up to `max_bits` long.
    pub fn collision_bound(&self) -> f64 {
        let k = self.field.degree() as usize;
        let coeffs = self.max_bits.div_ceil(k) + 1;
        coeffs as f64 / (self.field.order_f64() - 1.0)
    }

    pub fn digest(&self, seed: u128, t: &BitString) -> u128 {
        let k = self.field.degree() as usize;
        let chunks = t.len().div_ceil(k);
        let mut acc = 0u128;
        for i in (0..chunks).rev() {
            acc = self.field.mul(acc ^ t.read_uint(i * k, k), seed);
        }
        self.field.mul(acc ^ t.len() as u128, seed)
    }

    pub fn hash<R: Rng + ?Sized>(&self, t: &BitString, rng: &mut R) -> Fingerprint {
        let seed = loop {
            let s = rng.gen::<u128>() & self.field.mask();
            if s != 0 {
                break s;
            }
        };
        Fingerprint { seed, digest: self.digest(seed, t) }
    }

    pub fn matches(&self, fp: &Fingerprint, t: &BitString) -> bool {
        fp.seed != 0 && self.digest(fp.seed, t) == fp.digest
    }
}
