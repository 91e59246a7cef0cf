//! Finite fields, fingerprints, tamper detection and error correction.

pub mod amd;
pub mod ecc;
pub mod gf;
pub mod hash;
pub mod rs;

use thiserror::Error;

pub use amd::AmdCode;
pub use ecc::{count_alternations, majority, EccCode, RobustCodec};
pub use gf::{BinaryField, FieldError, SymbolField};
pub use hash::{Fingerprint, FingerprintHash};
pub use rs::ReedSolomon;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("not a codeword")]
    NotCodeword,
    #[error("expected {expected} bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("payload of {got} bits exceeds {max}")]
    PayloadTooLong { max: usize, got: usize },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}
