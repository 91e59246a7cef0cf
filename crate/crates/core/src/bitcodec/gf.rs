//! Binary extension fields.
//!
//! [`BinaryField`] covers GF(2^k) for 1 <= k <= 127 with elements held in a
//! `u128`; it backs the fingerprint hash and the tamper-detection tag.
//! [`SymbolField`] is a table-driven GF(2^m), 2 <= m <= 16, used for
//! Reed-Solomon symbols.
//!
//! Both pick their modulus deterministically: the numerically smallest
//! irreducible (resp. primitive) polynomial of the requested degree.

use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub const MAX_DEGREE: u32 = 127;
pub const MAX_SYMBOL_BITS: u32 = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("field degree {0} outside 1..={MAX_DEGREE}")]
    Degree(u32),
    #[error("symbol width {0} outside 2..={MAX_SYMBOL_BITS}")]
    SymbolWidth(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryField {
    degree: u32,
    /// Full modulus including the x^degree term.
    modulus: u128,
}

static IRREDUCIBLE: [OnceLock<u128>; MAX_DEGREE as usize + 1] =
    [const { OnceLock::new() }; MAX_DEGREE as usize + 1];

impl BinaryField {
    pub fn new(degree: u32) -> Result<Self, FieldError> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(FieldError::Degree(degree));
        }
        let modulus = *IRREDUCIBLE[degree as usize].get_or_init(|| smallest_irreducible(degree));
        Ok(BinaryField { degree, modulus })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn modulus(&self) -> u128 {
        self.modulus
    }

    /// Number of field elements as an f64 (2^k).
    pub fn order_f64(&self) -> f64 {
        2f64.powi(self.degree as i32)
    }

    /// The all-ones element; also 2^k - 1 as an integer.
    pub fn mask(&self) -> u128 {
        (1u128 << self.degree) - 1
    }

    #[inline]
    fn xtime(&self, a: u128) -> u128 {
        let a = a << 1;
        if (a >> self.degree) & 1 == 1 {
            a ^ self.modulus
        } else {
            a
        }
    }

    #[inline]
    pub fn mul(&self, a: u128, b: u128) -> u128 {
        if a == 0 || b == 0 {
            return 0;
        }
        let top = 127 - b.leading_zeros();
        let mut acc = 0u128;
        for i in (0..=top).rev() {
            acc = self.xtime(acc);
            if (b >> i) & 1 == 1 {
                acc ^= a;
            }
        }
        acc
    }

    pub fn square(&self, a: u128) -> u128 {
        self.mul(a, a)
    }

    pub fn pow(&self, mut base: u128, mut exp: u128) -> u128 {
        let mut acc = 1u128;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.square(base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via a^(2^k - 2). Zero maps to zero.
    pub fn inv(&self, a: u128) -> u128 {
        // 2^k - 2 = 0b111..10
        self.pow(a, self.mask() - 1)
    }
}

fn poly_degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn poly_mod(mut a: u128, b: u128) -> u128 {
    let db = poly_degree(b);
    while a != 0 && poly_degree(a) >= db {
        a ^= b << (poly_degree(a) - db);
    }
    a
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's test: f of degree k is irreducible over GF(2) iff
/// x^(2^k) = x mod f and gcd(x^(2^(k/q)) - x, f) = 1 for each prime q | k.
pub fn is_irreducible(modulus: u128, degree: u32) -> bool {
    if poly_degree(modulus) != degree as i32 || degree == 0 {
        return false;
    }
    if degree == 1 {
        return true;
    }
    let ring = BinaryField { degree, modulus };
    let x = 2u128;
    let mut frob = Vec::with_capacity(degree as usize + 1);
    let mut h = x;
    frob.push(h);
    for _ in 0..degree {
        h = ring.square(h);
        frob.push(h);
    }
    if frob[degree as usize] != x {
        return false;
    }
    prime_factors(degree)
        .into_iter()
        .all(|q| poly_gcd(modulus, frob[(degree / q) as usize] ^ x) == 1)
}

fn smallest_irreducible(degree: u32) -> u128 {
    let top = 1u128 << degree;
    if degree == 1 {
        return top | 1;
    }
    let mut low = 1u128;
    loop {
        if is_irreducible(top | low, degree) {
            return top | low;
        }
        low += 2;
    }
}

/// GF(2^m) with log/antilog tables.
#[derive(Debug)]
pub struct SymbolField {
    bits: u32,
    modulus: u32,
    exp: Vec<u16>,
    log: Vec<u16>,
}

static SYMBOL_FIELDS: [OnceLock<Arc<SymbolField>>; MAX_SYMBOL_BITS as usize + 1] =
    [const { OnceLock::new() }; MAX_SYMBOL_BITS as usize + 1];

impl SymbolField {
    pub fn new(bits: u32) -> Result<Arc<Self>, FieldError> {
        if !(2..=MAX_SYMBOL_BITS).contains(&bits) {
            return Err(FieldError::SymbolWidth(bits));
        }
        Ok(SYMBOL_FIELDS[bits as usize].get_or_init(|| Arc::new(Self::build(bits))).clone())
    }

    fn build(bits: u32) -> Self {
        let mut low = 1u32;
        loop {
            let modulus = (1u32 << bits) | low;
            if let Some((exp, log)) = Self::tables(bits, modulus) {
                return SymbolField { bits, modulus, exp, log };
            }
            low += 2;
            assert!(low < (1 << bits), "no primitive polynomial of degree {bits}");
        }
    }

    /// Tables if x generates the multiplicative group mod `modulus`.
    fn tables(bits: u32, modulus: u32) -> Option<(Vec<u16>, Vec<u16>)> {
        let size = 1usize << bits;
        let order = size - 1;
        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u16; size];
        let mut v = 1u32;
        for i in 0..order {
            if i > 0 && v == 1 {
                return None;
            }
            exp[i] = v as u16;
            log[v as usize] = i as u16;
            v <<= 1;
            if v & (1 << bits) != 0 {
                v ^= modulus;
            }
        }
        if v != 1 {
            return None;
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Some((exp, log))
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    /// Multiplicative group order, 2^m - 1.
    pub fn order(&self) -> usize {
        (1usize << self.bits) - 1
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    #[inline]
    pub fn div(&self, a: u16, b: u16) -> u16 {
        assert!(b != 0, "division by zero in GF(2^{})", self.bits);
        if a == 0 {
            0
        } else {
            let order = self.order();
            self.exp[self.log[a as usize] as usize + order - self.log[b as usize] as usize]
        }
    }

    pub fn inv(&self, a: u16) -> u16 {
        self.div(1, a)
    }

    /// alpha^e for the primitive element alpha = x.
    #[inline]
    pub fn alpha_pow(&self, e: usize) -> u16 {
        self.exp[e % self.order()]
    }

    pub fn log(&self, a: u16) -> Option<usize> {
        (a != 0).then(|| self.log[a as usize] as usize)
    }
}
