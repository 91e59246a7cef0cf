//! Noise-free two-party protocols to be simulated, and their padding.
//!
//! Who speaks at position `i` depends only on `i`. The bit spoken may depend
//! on the speaker's private key and on everything said before. Positions at
//! or beyond the protocol length are padding: Alice speaks a pseudorandom
//! bit derived from a key only she holds, which keeps padded transcripts
//! from being guessable by an adversary that knows the protocol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Every bit is 0; speakers alternate.
    Constant,
    /// Alice speaks at even positions, Bob repeats her last bit.
    Echo,
    /// Pseudorandom speaker schedule; each bit hashes the speaker's key with
    /// the full history.
    Prf,
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(ProtocolKind::Constant),
            "echo" => Ok(ProtocolKind::Echo),
            "prf" => Ok(ProtocolKind::Prf),
            other => Err(format!("unknown protocol {other:?} (constant, echo, prf)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("position {pos} belongs to {owner:?}")]
    NotYourTurn { pos: usize, owner: Role },
    #[error("position {pos} is past the protocol length {len}")]
    PastEnd { pos: usize, len: usize },
    #[error("transcript has {have} bits, {want} requested")]
    Incomplete { have: usize, want: usize },
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn prf(key: u64, a: u64, b: u64) -> u64 {
    mix64(key ^ mix64(a ^ mix64(b.wrapping_add(0x632b_e59b_d9b4_e019))))
}

/// Bits plus a rolling digest of every prefix, so history-dependent
/// protocols cost O(1) per bit and survive truncation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    bits: BitString,
    digests: Vec<u64>,
}

const DIGEST_INIT: u64 = 0x243f_6a88_85a3_08d3;

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Transcript { bits: BitString::new(), digests: vec![DIGEST_INIT] }
    }

    pub fn from_bits(bits: &BitString) -> Self {
        let mut t = Self::new();
        for b in bits.iter() {
            t.push(b);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn push(&mut self, bit: u8) {
        let last = *self.digests.last().unwrap();
        self.bits.push(bit);
        self.digests.push(mix64(last ^ (bit as u64 + 1)));
    }

    pub fn truncate(&mut self, n: usize) {
        self.bits.truncate(n);
        self.digests.truncate(n + 1);
    }

    /// Digest of the whole transcript.
    pub fn digest(&self) -> u64 {
        *self.digests.last().unwrap()
    }

    pub fn prefix(&self, n: usize) -> Result<BitString, ProtocolError> {
        if self.len() < n {
            return Err(ProtocolError::Incomplete { have: self.len(), want: n });
        }
        Ok(self.bits.slice(0, n))
    }

    pub fn is_prefix_of(&self, other: &Transcript) -> bool {
        self.len() <= other.len() && self.digests[self.len()] == other.digests[self.len()]
            && self.bits.is_prefix_of(&other.bits)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub length: usize,
    pub schedule_seed: u64,
    pub alice_key: u64,
    pub bob_key: u64,
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, length: usize, seed: u64) -> Self {
        ProtocolSpec {
            kind,
            length,
            schedule_seed: prf(seed, 1, 0),
            alice_key: prf(seed, 2, 0),
            bob_key: prf(seed, 3, 0),
        }
    }

    /// Same protocol with Alice's private input replaced.
    pub fn with_alice_key(&self, key: u64) -> Self {
        ProtocolSpec { alice_key: key, ..self.clone() }
    }

    pub fn direction(&self, pos: usize) -> Role {
        match self.kind {
            ProtocolKind::Constant | ProtocolKind::Echo => {
                if pos % 2 == 0 {
                    Role::Alice
                } else {
                    Role::Bob
                }
            }
            ProtocolKind::Prf => {
                if pos == 0 || prf(self.schedule_seed, pos as u64, 0) & 1 == 0 {
                    Role::Alice
                } else {
                    Role::Bob
                }
            }
        }
    }

    /// The bit `role` speaks after `history`.
    pub fn next_bit(&self, role: Role, history: &Transcript) -> Result<u8, ProtocolError> {
        let pos = history.len();
        if pos >= self.length {
            return Err(ProtocolError::PastEnd { pos, len: self.length });
        }
        let owner = self.direction(pos);
        if owner != role {
            return Err(ProtocolError::NotYourTurn { pos, owner });
        }
        let key = match role {
            Role::Alice => self.alice_key,
            Role::Bob => self.bob_key,
        };
        Ok(match self.kind {
            ProtocolKind::Constant => 0,
            ProtocolKind::Echo => match role {
                Role::Alice => (prf(key, pos as u64 / 2, 0) & 1) as u8,
                Role::Bob => history.bits().get(pos - 1).unwrap_or(0),
            },
            ProtocolKind::Prf => (prf(key, history.digest(), pos as u64) & 1) as u8,
        })
    }

    /// Noise-free transcript of the full protocol.
    pub fn reference(&self) -> BitString {
        let mut t = Transcript::new();
        while t.len() < self.length {
            let bit = self.next_bit(self.direction(t.len()), &t).expect("owner speaks");
            t.push(bit);
        }
        t.bits().clone()
    }
}

/// What a party does at the next transcript position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Turn {
    Speak(u8),
    Listen,
}

/// A protocol extended past its length with Alice-keyed padding.
#[derive(Clone, Debug)]
pub struct PaddedProtocol {
    spec: ProtocolSpec,
    padding_key: u64,
}

impl PaddedProtocol {
    pub fn new(spec: ProtocolSpec, padding_key: u64) -> Self {
        PaddedProtocol { spec, padding_key }
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn length(&self) -> usize {
        self.spec.length
    }

    pub fn padding_key(&self) -> u64 {
        self.padding_key
    }

    pub fn direction(&self, pos: usize) -> Role {
        if pos < self.spec.length {
            self.spec.direction(pos)
        } else {
            Role::Alice
        }
    }

    pub fn turn(&self, role: Role, history: &Transcript) -> Turn {
        let pos = history.len();
        if self.direction(pos) != role {
            return Turn::Listen;
        }
        if pos < self.spec.length {
            Turn::Speak(self.spec.next_bit(role, history).expect("direction checked"))
        } else {
            Turn::Speak((prf(self.padding_key, pos as u64, 7) & 1) as u8)
        }
    }

    /// Noise-free padded transcript of length `n`.
    pub fn reference(&self, n: usize) -> Transcript {
        let mut t = Transcript::new();
        while t.len() < n {
            let speaker = self.direction(t.len());
            match self.turn(speaker, &t) {
                Turn::Speak(b) => t.push(b),
                Turn::Listen => unreachable!("speaker always speaks"),
            }
        }
        t
    }
}
