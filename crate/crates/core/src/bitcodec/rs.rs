//! Systematic Reed-Solomon codes over [`SymbolField`].
//!
//! Codeword index `i` holds the coefficient of `x^i`: parity occupies
//! `0..n-k`, data `n-k..n`. The generator has roots alpha^1..alpha^(n-k).
//! Decoding is Berlekamp-Massey, Chien search and Forney, and never returns
//! a codeword more than `(n-k)/2` symbols away from the input.

use std::sync::Arc;

use super::gf::SymbolField;
use super::CodecError;

#[derive(Clone, Debug)]
pub struct ReedSolomon {
    field: Arc<SymbolField>,
    n: usize,
    k: usize,
    /// Monic generator, low degree first.
    generator: Vec<u16>,
}

impl ReedSolomon {
    pub fn new(field: Arc<SymbolField>, n: usize, k: usize) -> Result<Self, CodecError> {
        if k == 0 || k >= n || n > field.order() {
            return Err(CodecError::Infeasible(format!(
                "RS({n},{k}) over GF(2^{}) is not constructible",
                field.bits()
            )));
        }
        let mut generator = vec![1u16];
        for j in 1..=(n - k) {
            let root = field.alpha_pow(j);
            let mut next = vec![0u16; generator.len() + 1];
            for (i, &g) in generator.iter().enumerate() {
                next[i + 1] ^= g;
                next[i] ^= field.mul(g, root);
            }
            generator = next;
        }
        Ok(ReedSolomon { field, n, k, generator })
    }

    pub fn field(&self) -> &SymbolField {
        &self.field
    }

    pub fn code_len(&self) -> usize {
        self.n
    }

    pub fn data_len(&self) -> usize {
        self.k
    }

    pub fn parity_len(&self) -> usize {
        self.n - self.k
    }

    /// Number of symbol errors the decoder is guaranteed to fix.
    pub fn capacity(&self) -> usize {
        (self.n - self.k) / 2
    }

    pub fn encode(&self, data: &[u16]) -> Result<Vec<u16>, CodecError> {
        if data.len() != self.k {
            return Err(CodecError::WidthMismatch { expected: self.k, got: data.len() });
        }
        let r = self.n - self.k;
        let mut parity = vec![0u16; r];
        for &d in data.iter().rev() {
            let feedback = d ^ parity[r - 1];
            for i in (1..r).rev() {
                parity[i] = parity[i - 1] ^ self.field.mul(feedback, self.generator[i]);
            }
            parity[0] = self.field.mul(feedback, self.generator[0]);
        }
        let mut word = parity;
        word.extend_from_slice(data);
        Ok(word)
    }

    fn eval(&self, word: &[u16], x: u16) -> u16 {
        word.iter().rev().fold(0u16, |acc, &c| self.field.mul(acc, x) ^ c)
    }

    fn syndromes(&self, word: &[u16]) -> Vec<u16> {
        (1..=self.n - self.k).map(|j| self.eval(word, self.field.alpha_pow(j))).collect()
    }

    /// Corrected codeword, or `NotCodeword` if no codeword lies within
    /// [`capacity`](Self::capacity) symbols.
    pub fn decode(&self, received: &[u16]) -> Result<Vec<u16>, CodecError> {
        if received.len() != self.n {
            return Err(CodecError::WidthMismatch { expected: self.n, got: received.len() });
        }
        // Fast path: re-encoding the data part reproduces the parity.
        if self.encode(&received[self.n - self.k..])?[..self.n - self.k] == received[..self.n - self.k]
        {
            return Ok(received.to_vec());
        }
        let f = &*self.field;
        let synd = self.syndromes(received);
        let locator = self.berlekamp_massey(&synd);
        let errors = locator.len() - 1;
        if errors == 0 || 2 * errors > self.n - self.k {
            return Err(CodecError::NotCodeword);
        }

        let order = f.order();
        let mut positions = Vec::with_capacity(errors);
        for i in 0..self.n {
            let x_inv = f.alpha_pow(order - i % order);
            if self.eval(&locator, x_inv) == 0 {
                positions.push(i);
            }
        }
        if positions.len() != errors {
            return Err(CodecError::NotCodeword);
        }

        // Omega = S(x) * Lambda(x) mod x^(n-k)
        let r = self.n - self.k;
        let mut omega = vec![0u16; r];
        for (i, &s) in synd.iter().enumerate() {
            for (j, &l) in locator.iter().enumerate() {
                if i + j < r {
                    omega[i + j] ^= f.mul(s, l);
                }
            }
        }
        // Formal derivative in characteristic 2 keeps the odd terms.
        let derivative: Vec<u16> =
            (1..locator.len()).map(|i| if i % 2 == 1 { locator[i] } else { 0 }).collect();

        let mut corrected = received.to_vec();
        for &i in &positions {
            let x_inv = f.alpha_pow(order - i % order);
            let denom = self.eval(&derivative, x_inv);
            if denom == 0 {
                return Err(CodecError::NotCodeword);
            }
            corrected[i] ^= f.div(self.eval(&omega, x_inv), denom);
        }
        if self.syndromes(&corrected).iter().any(|&s| s != 0) {
            return Err(CodecError::NotCodeword);
        }
        Ok(corrected)
    }

    pub fn decode_data(&self, received: &[u16]) -> Result<Vec<u16>, CodecError> {
        Ok(self.decode(received)?[self.n - self.k..].to_vec())
    }

    fn berlekamp_massey(&self, synd: &[u16]) -> Vec<u16> {
        let f = &*self.field;
        let mut c = vec![1u16];
        let mut b = vec![1u16];
        let mut len = 0usize;
        let mut shift = 1usize;
        let mut last = 1u16;
        for n in 0..synd.len() {
            let mut d = synd[n];
            for i in 1..=len.min(c.len() - 1) {
                d ^= f.mul(c[i], synd[n - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = f.div(d, last);
            let prev = c.clone();
            if c.len() < b.len() + shift {
                c.resize(b.len() + shift, 0);
            }
            for (i, &bi) in b.iter().enumerate() {
                c[i + shift] ^= f.mul(coef, bi);
            }
            if 2 * len <= n {
                len = n + 1 - len;
                b = prev;
                last = d;
                shift = 1;
            } else {
                shift += 1;
            }
        }
        c.truncate(len + 1);
        c.resize(len + 1, 0);
        c
    }
}
