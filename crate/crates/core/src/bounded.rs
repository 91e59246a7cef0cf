//! The bounded-noise phase: rounds of shrinking power-of-two size.
//!
//! Each round Alice sends an AMD-protected sync message (failure count,
//! round size, verified length), both sides simulate `r - 2F` bits of the
//! protocol, and Bob answers with an AMD-protected fingerprint of his
//! transcript. Alice commits on a matching fingerprint and otherwise rewinds
//! and counts a failure; every time `1 + failures` hits a power of four the
//! round size halves. Bob, on an unreadable sync message, babbles random
//! bits for the rest of his round and does the same bookkeeping. Bob leaves
//! once a sync slot reads as constant, i.e. Alice has gone quiet.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bitcodec::{AmdCode, CodecError, Fingerprint, FingerprintHash};
use crate::bits::BitString;
use crate::channel::{SlotInfo, SlotKind, StepIntent};
use crate::events::{Event, MessageKind, RoundSummary};
use crate::protocol::{PaddedProtocol, Role, Transcript, Turn};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("initial round {initial_round} is shorter than 4F = {}", 4 * slot)]
    RoundTooShort { initial_round: usize, slot: usize },
    #[error("protocol length must be positive")]
    EmptyProtocol,
    #[error("{0}")]
    Iteration(String),
}

/// Bits needed to write every value in `0..=max`.
pub fn bits_for(max: usize) -> usize {
    (usize::BITS - max.leading_zeros()).max(1) as usize
}

fn is_power_of_four(n: u32) -> bool {
    n.is_power_of_two() && n.trailing_zeros() % 2 == 0
}

/// Smallest power of two whose square exceeds `x`.
fn pow2_above_sqrt(x: usize) -> usize {
    let mut r = 1usize;
    while r * r <= x {
        r *= 2;
    }
    r
}

#[derive(Clone, Debug)]
pub struct BoundedParams {
    pub length: usize,
    /// Per-use failure target for hashes and AMD codewords.
    pub target: f64,
    /// F: width of every sync and fingerprint slot.
    pub slot_bits: usize,
    /// R0: first round size, a power of two.
    pub initial_round: usize,
    /// Failures after which a party gives up on this phase.
    pub max_failures: u32,
    /// Padded protocol length, a multiple of R0.
    pub padded_length: usize,
    pub hash: FingerprintHash,
    pub fingerprint_code: AmdCode,
    pub sync_code: AmdCode,
    pub failure_bits: usize,
    pub round_exp_bits: usize,
    pub length_bits: usize,
}

impl BoundedParams {
    /// Derives the narrowest slot width for which the hash and both AMD codes
    /// meet `target`, then the round schedule. `min_slot` forces a wider slot.
    pub fn derive(length: usize, target: f64, min_slot: usize) -> Result<Self, ParamError> {
        if length == 0 {
            return Err(ParamError::EmptyProtocol);
        }
        let mut slot = min_slot.max(4);
        loop {
            let p = Self::with_slot(length, target, slot)?;
            let need = p.fingerprint_code.width().max(p.sync_code.width());
            if need <= slot {
                return p.check();
            }
            slot = need;
        }
    }

    fn with_slot(length: usize, target: f64, slot: usize) -> Result<Self, ParamError> {
        let initial_round = pow2_above_sqrt(length * slot);
        let padded_length = (1 + length.div_ceil(initial_round)) * initial_round;
        let max_bits = padded_length + initial_round;
        let hash = FingerprintHash::for_target(max_bits, target)?;
        let fingerprint_code = AmdCode::for_target(hash.payload_bits(), target)?;
        let ratio = initial_round / (2 * slot).max(1);
        let failure_bits = bits_for((ratio * ratio).max(1));
        let round_exp_bits = bits_for(initial_round.trailing_zeros() as usize);
        let length_bits = bits_for(max_bits);
        let sync_code =
            AmdCode::for_target(failure_bits + round_exp_bits + length_bits, target)?;
        let max_failures = Self::failure_limit(initial_round, slot);
        Ok(BoundedParams {
            length,
            target,
            slot_bits: slot,
            initial_round,
            max_failures,
            padded_length,
            hash,
            fingerprint_code,
            sync_code,
            failure_bits,
            round_exp_bits,
            length_bits,
        })
    }

    /// min(R0^2/4F^2 - 1, largest count whose rounds all stay >= 4F).
    fn failure_limit(initial_round: usize, slot: usize) -> u32 {
        if initial_round < 4 * slot {
            return 0;
        }
        let quad = (initial_round * initial_round) / (4 * slot * slot) - 1;
        let halvings = (initial_round / (4 * slot)).ilog2();
        let keep_min_round = 4usize.pow(halvings + 1) - 1;
        quad.min(keep_min_round) as u32
    }

    fn check(self) -> Result<Self, ParamError> {
        if self.initial_round < 4 * self.slot_bits {
            return Err(ParamError::RoundTooShort {
                initial_round: self.initial_round,
                slot: self.slot_bits,
            });
        }
        Ok(self)
    }

    /// Longest transcript any party can hold: padded length plus one block.
    pub fn max_transcript_bits(&self) -> usize {
        self.padded_length + self.initial_round
    }

    /// Round size after `failures` failed rounds.
    pub fn round_after(&self, failures: u32) -> usize {
        self.initial_round >> (1 + failures).ilog2().div_euclid(2)
    }

    /// Smallest round size that can occur.
    pub fn min_round(&self) -> usize {
        self.round_after(self.max_failures.saturating_sub(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyncMessage {
    pub failures: u32,
    pub round_exp: u32,
    pub verified_len: usize,
}

impl SyncMessage {
    pub fn to_bits(&self, p: &BoundedParams) -> BitString {
        let mut out = BitString::from_uint(self.failures as u128, p.failure_bits);
        out.push_uint(self.round_exp as u128, p.round_exp_bits);
        out.push_uint(self.verified_len as u128, p.length_bits);
        out
    }

    /// Parses and range-checks a decoded payload.
    pub fn parse(bits: &BitString, p: &BoundedParams) -> Option<SyncMessage> {
        let failures = bits.read_uint(0, p.failure_bits) as u32;
        let round_exp = bits.read_uint(p.failure_bits, p.round_exp_bits) as u32;
        let verified_len =
            bits.read_uint(p.failure_bits + p.round_exp_bits, p.length_bits) as usize;
        let round = 1usize.checked_shl(round_exp)?;
        (failures < p.max_failures
            && round <= p.initial_round
            && round > 2 * p.slot_bits
            && verified_len <= p.max_transcript_bits())
            .then_some(SyncMessage { failures, round_exp, verified_len })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    /// Terminated with an output; `None` when the verified transcript was
    /// too short to cut a full-length output from.
    Output(Option<BitString>),
    /// Failure budget for this phase used up.
    Exhausted,
}

/// Intent for one simulated protocol position.
pub(crate) fn simulate_intent(
    proto: &PaddedProtocol,
    role: Role,
    t: &Transcript,
) -> (StepIntent, Option<u8>) {
    match proto.turn(role, t) {
        Turn::Speak(b) => (StepIntent::Send(b), Some(b)),
        Turn::Listen => (StepIntent::Listen, None),
    }
}

enum AlicePhase {
    Sync { word: BitString, pos: usize },
    Simulate { left: usize },
    Receive { buf: BitString },
}

pub struct BoundedAlice {
    params: Arc<BoundedParams>,
    proto: Arc<PaddedProtocol>,
    rng: ChaCha8Rng,
    transcript: Transcript,
    verified: Transcript,
    failures: u32,
    round: usize,
    phase: Option<AlicePhase>,
    pending: Option<u8>,
    round_start: u64,
    window_start: u64,
    status: Status,
    events: Vec<Event>,
}

impl BoundedAlice {
    pub fn new(params: Arc<BoundedParams>, proto: Arc<PaddedProtocol>, seed: u64) -> Self {
        let round = params.initial_round;
        BoundedAlice {
            params,
            proto,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transcript: Transcript::new(),
            verified: Transcript::new(),
            failures: 0,
            round,
            phase: None,
            pending: None,
            round_start: 0,
            window_start: 0,
            status: Status::Running,
            events: Vec::new(),
        }
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    pub fn round_size(&self) -> usize {
        self.round
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn verified(&self) -> &Transcript {
        &self.verified
    }

    /// Between rounds (no round in progress).
    pub fn at_boundary(&self) -> bool {
        self.phase.is_none()
    }

    pub fn into_transcripts(self) -> (Transcript, Transcript, ChaCha8Rng) {
        (self.transcript, self.verified, self.rng)
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, Event> {
        self.events.drain(..)
    }

    fn start_round(&mut self, step: u64) {
        let msg = SyncMessage {
            failures: self.failures,
            round_exp: self.round.trailing_zeros(),
            verified_len: self.verified.len(),
        };
        let payload = msg.to_bits(&self.params);
        let mut word = self
            .params
            .sync_code
            .encode(&payload, &mut self.rng)
            .expect("sync payload fits its code");
        word.pad_to(self.params.slot_bits);
        self.events.push(Event::Sent { role: Role::Alice, kind: MessageKind::Sync, start: step, payload });
        self.round_start = step;
        self.phase = Some(AlicePhase::Sync { word, pos: 0 });
    }

    pub fn slot(&self) -> SlotInfo {
        let f = self.params.slot_bits;
        let (kind, offset, len) = match &self.phase {
            None => (SlotKind::Sync, 0, f),
            Some(AlicePhase::Sync { pos, .. }) => (SlotKind::Sync, *pos, f),
            Some(AlicePhase::Simulate { left }) => {
                let len = self.round - 2 * f;
                (SlotKind::Simulate, len - left, len)
            }
            Some(AlicePhase::Receive { buf }) => (SlotKind::Fingerprint, buf.len(), f),
        };
        SlotInfo { kind, iteration: 0, offset, len }
    }

    pub fn intent(&mut self, step: u64) -> StepIntent {
        if self.phase.is_none() {
            self.start_round(step);
        }
        match self.phase.as_ref().unwrap() {
            AlicePhase::Sync { word, pos } => StepIntent::Send(word.get(*pos).unwrap()),
            AlicePhase::Simulate { .. } => {
                let (intent, pending) = simulate_intent(&self.proto, Role::Alice, &self.transcript);
                self.pending = pending;
                intent
            }
            AlicePhase::Receive { .. } => StepIntent::Listen,
        }
    }

    pub fn deliver(&mut self, step: u64, received: Option<u8>) -> &Status {
        let f = self.params.slot_bits;
        let sim_len = self.round - 2 * f;
        match self.phase.as_mut().expect("intent precedes deliver") {
            AlicePhase::Sync { pos, .. } => {
                *pos += 1;
                if *pos == f {
                    self.phase = Some(AlicePhase::Simulate { left: sim_len });
                }
            }
            AlicePhase::Simulate { left } => {
                let bit = self.pending.take().or(received).unwrap_or(0);
                self.transcript.push(bit);
                *left -= 1;
                if *left == 0 {
                    self.window_start = step + 1;
                    self.phase = Some(AlicePhase::Receive { buf: BitString::with_capacity(f) });
                }
            }
            AlicePhase::Receive { buf } => {
                buf.push(received.unwrap_or(0));
                if buf.len() == f {
                    let buf = std::mem::take(buf);
                    self.end_round(step, &buf);
                }
            }
        }
        &self.status
    }

    fn end_round(&mut self, step: u64, buf: &BitString) {
        self.phase = None;
        let p = &self.params;
        let mut committed = false;
        if let Ok(payload) = p.fingerprint_code.decode(buf) {
            self.events.push(Event::Accepted {
                role: Role::Alice,
                kind: MessageKind::Fingerprint,
                start: self.window_start,
                payload: payload.clone(),
            });
            if self.verified.len() >= p.length {
                self.status = Status::Output(self.verified.prefix(p.length).ok());
                self.push_round_end(step, true);
                self.events.push(Event::Terminated { role: Role::Alice, step, silence: false });
                return;
            }
            let fp = Fingerprint::from_bits(&payload, p.hash.field_bits());
            if p.hash.matches(&fp, self.transcript.bits()) {
                self.events.push(Event::Matched {
                    len: self.transcript.len(),
                    digest: self.transcript.digest(),
                });
                self.verified = self.transcript.clone();
                committed = true;
            }
        }
        if !committed {
            self.transcript = self.verified.clone();
            self.failures += 1;
            if is_power_of_four(1 + self.failures) {
                self.round /= 2;
            }
        }
        self.push_round_end(step, committed);
        if self.failures >= self.params.max_failures {
            self.status = Status::Exhausted;
        }
    }

    fn push_round_end(&mut self, step: u64, progressed: bool) {
        self.events.push(Event::RoundEnd(RoundSummary {
            role: Role::Alice,
            iteration: 0,
            start: self.round_start,
            end: step,
            progressed,
            verified_len: self.verified.len(),
            failures: self.failures,
            round_size: self.round,
        }));
    }
}

enum BobPhase {
    Receive { buf: BitString },
    Simulate { left: usize },
    Send { word: BitString, pos: usize },
    Random { left: usize },
}

pub struct BoundedBob {
    params: Arc<BoundedParams>,
    proto: Arc<PaddedProtocol>,
    rng: ChaCha8Rng,
    transcript: Transcript,
    verified: Transcript,
    failures: u32,
    round: usize,
    phase: Option<BobPhase>,
    pending: Option<u8>,
    round_start: u64,
    committed: bool,
    status: Status,
    events: Vec<Event>,
}

impl BoundedBob {
    pub fn new(params: Arc<BoundedParams>, proto: Arc<PaddedProtocol>, seed: u64) -> Self {
        let round = params.initial_round;
        BoundedBob {
            params,
            proto,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transcript: Transcript::new(),
            verified: Transcript::new(),
            failures: 0,
            round,
            phase: None,
            pending: None,
            round_start: 0,
            committed: false,
            status: Status::Running,
            events: Vec::new(),
        }
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    pub fn round_size(&self) -> usize {
        self.round
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn verified(&self) -> &Transcript {
        &self.verified
    }

    pub fn at_boundary(&self) -> bool {
        self.phase.is_none()
    }

    pub fn into_transcripts(self) -> (Transcript, Transcript, ChaCha8Rng) {
        (self.transcript, self.verified, self.rng)
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, Event> {
        self.events.drain(..)
    }

    pub fn slot(&self) -> SlotInfo {
        let f = self.params.slot_bits;
        let (kind, offset, len) = match &self.phase {
            None => (SlotKind::Sync, 0, f),
            Some(BobPhase::Receive { buf }) => (SlotKind::Sync, buf.len(), f),
            Some(BobPhase::Simulate { left }) => {
                let len = self.round - 2 * f;
                (SlotKind::Simulate, len - left, len)
            }
            Some(BobPhase::Send { pos, .. }) => (SlotKind::Fingerprint, *pos, f),
            Some(BobPhase::Random { left }) => {
                let len = self.round - f;
                (SlotKind::Random, len - left, len)
            }
        };
        SlotInfo { kind, iteration: 0, offset, len }
    }

    pub fn intent(&mut self, step: u64) -> StepIntent {
        if self.phase.is_none() {
            self.round_start = step;
            self.committed = false;
            self.phase = Some(BobPhase::Receive { buf: BitString::with_capacity(self.params.slot_bits) });
        }
        match self.phase.as_ref().unwrap() {
            BobPhase::Receive { .. } => StepIntent::Listen,
            BobPhase::Simulate { .. } => {
                let (intent, pending) = simulate_intent(&self.proto, Role::Bob, &self.transcript);
                self.pending = pending;
                intent
            }
            BobPhase::Send { word, pos } => StepIntent::Send(word.get(*pos).unwrap()),
            BobPhase::Random { .. } => StepIntent::Send(rand::Rng::gen::<bool>(&mut self.rng) as u8),
        }
    }

    pub fn deliver(&mut self, step: u64, received: Option<u8>) -> &Status {
        let f = self.params.slot_bits;
        match self.phase.as_mut().expect("intent precedes deliver") {
            BobPhase::Receive { buf } => {
                buf.push(received.unwrap_or(0));
                if buf.len() == f {
                    let buf = std::mem::take(buf);
                    self.on_sync(step, &buf);
                }
            }
            BobPhase::Simulate { left } => {
                let bit = self.pending.take().or(received).unwrap_or(0);
                self.transcript.push(bit);
                *left -= 1;
                if *left == 0 {
                    self.start_fingerprint(step + 1);
                }
            }
            BobPhase::Send { pos, .. } => {
                *pos += 1;
                if *pos == f {
                    self.end_round(step);
                }
            }
            BobPhase::Random { left } => {
                *left -= 1;
                if *left == 0 {
                    self.failures += 1;
                    if is_power_of_four(1 + self.failures) {
                        self.round /= 2;
                    }
                    self.end_round(step);
                }
            }
        }
        &self.status
    }

    fn on_sync(&mut self, step: u64, buf: &BitString) {
        let p = self.params.clone();
        if buf.all_equal() {
            self.phase = None;
            self.status = Status::Output(self.verified.prefix(p.length).ok());
            self.events.push(Event::Terminated { role: Role::Bob, step, silence: true });
            return;
        }
        let msg = p
            .sync_code
            .decode(buf)
            .ok()
            .and_then(|payload| SyncMessage::parse(&payload, &p).map(|m| (payload, m)));
        match msg {
            Some((payload, msg)) => {
                self.events.push(Event::Accepted {
                    role: Role::Bob,
                    kind: MessageKind::Sync,
                    start: self.round_start,
                    payload,
                });
                self.round = 1usize << msg.round_exp;
                self.failures = msg.failures;
                if msg.verified_len > self.verified.len() {
                    self.verified = self.transcript.clone();
                    self.committed = true;
                } else {
                    self.transcript = self.verified.clone();
                }
                self.phase = Some(BobPhase::Simulate { left: self.round - 2 * p.slot_bits });
            }
            None => {
                self.phase = Some(BobPhase::Random { left: self.round - p.slot_bits });
            }
        }
    }

    fn start_fingerprint(&mut self, start: u64) {
        let p = &self.params;
        let fp = p.hash.hash(self.transcript.bits(), &mut self.rng);
        self.events.push(Event::Hashed { len: self.transcript.len(), digest: self.transcript.digest() });
        let payload = fp.to_bits(p.hash.field_bits());
        let mut word =
            p.fingerprint_code.encode(&payload, &mut self.rng).expect("fingerprint fits its code");
        word.pad_to(p.slot_bits);
        self.events.push(Event::Sent { role: Role::Bob, kind: MessageKind::Fingerprint, start, payload });
        self.phase = Some(BobPhase::Send { word, pos: 0 });
    }

    fn end_round(&mut self, step: u64) {
        self.phase = None;
        self.events.push(Event::RoundEnd(RoundSummary {
            role: Role::Bob,
            iteration: 0,
            start: self.round_start,
            end: step,
            progressed: self.committed,
            verified_len: self.verified.len(),
            failures: self.failures,
            round_size: self.round,
        }));
        if self.failures >= self.params.max_failures {
            self.status = Status::Exhausted;
        }
    }
}
