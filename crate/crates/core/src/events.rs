//! Structured events emitted by the party state machines.
//!
//! Parties never read these; they exist so an omniscient observer can check
//! invariants and attribute failures without reaching into party state.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::protocol::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Sync,
    Fingerprint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub role: Role,
    pub iteration: u32,
    /// First and last channel step of the round, inclusive.
    pub start: u64,
    pub end: u64,
    /// Verified transcript grew, or the party produced its output.
    pub progressed: bool,
    pub verified_len: usize,
    /// Failure counter and round size after the round (bounded phase only).
    pub failures: u32,
    pub round_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// A party began transmitting an encoded message at `start`.
    Sent { role: Role, kind: MessageKind, start: u64, payload: BitString },
    /// A party decoded a valid message from the window beginning at `start`.
    Accepted { role: Role, kind: MessageKind, start: u64, payload: BitString },
    /// Bob fingerprinted a transcript with this length and rolling digest.
    Hashed { len: usize, digest: u64 },
    /// Alice found a received fingerprint consistent with her transcript.
    Matched { len: usize, digest: u64 },
    RoundEnd(RoundSummary),
    /// `silence` is set when Bob left because he judged Alice gone.
    Terminated { role: Role, step: u64, silence: bool },
}
