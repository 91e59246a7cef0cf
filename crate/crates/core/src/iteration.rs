//! One iteration of the unbounded-noise phase.
//!
//! Iteration `j` runs `N_j` rounds of fixed length `(2c+1) F_j`: a
//! `c F_j`-bit error-corrected sync message from Alice, `F_j` steps of
//! simulation in which every protocol bit is repeated `rho_j` times, and a
//! `c F_j`-bit error-corrected fingerprint from Bob. Once Bob's verified
//! transcript is long enough he stops simulating and instead samples
//! Alice's block slot: fewer than `F_j / 3` alternations means silence.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bitcodec::{count_alternations, majority, AmdCode, Fingerprint, FingerprintHash, RobustCodec};
use crate::bits::BitString;
use crate::bounded::{bits_for, simulate_intent, BoundedParams, ParamError, Status};
use crate::channel::{SlotInfo, SlotKind, StepIntent};
use crate::events::{Event, MessageKind, RoundSummary};
use crate::protocol::{PaddedProtocol, Role, Transcript};

/// Ratio of an error-corrected message to the block slot.
pub const REDUNDANCY: usize = 5;

#[derive(Clone, Debug)]
pub struct IterationParams {
    pub index: u32,
    pub length: usize,
    /// F_j: block slot width; messages occupy `REDUNDANCY * F_j` bits.
    pub slot_bits: usize,
    pub repetitions: usize,
    pub rounds: u64,
    pub target: f64,
    pub hash: FingerprintHash,
    pub sync_codec: RobustCodec,
    pub fingerprint_codec: RobustCodec,
    pub length_bits: usize,
}

impl IterationParams {
    /// Parameters of iteration `index >= 1` with fingerprint growth `beta`.
    /// Per-use failure target is `base_target * 4^-index`.
    pub fn derive(
        index: u32,
        bounded: &BoundedParams,
        beta: usize,
        base_target: f64,
    ) -> Result<Self, ParamError> {
        assert!(index >= 1, "iterations are numbered from 1");
        let f = bounded.slot_bits;
        let slot_bits = f + 2 * beta * index as usize;
        let scale = 1usize.checked_shl(index - 1).unwrap_or(usize::MAX);
        let repetitions = scale.saturating_mul(slot_bits.div_ceil(f)).min(slot_bits);
        let rounds = (scale as u64).saturating_mul(
            (8 * bounded.length).div_ceil(f) as u64,
        );
        let target = base_target * 4f64.powi(-(index as i32));
        let max_bits = bounded.max_transcript_bits();
        let hash = FingerprintHash::for_target(max_bits, target)?;
        let fp_amd = AmdCode::for_target(hash.payload_bits(), target)?;
        let length_bits = bits_for(max_bits);
        let sync_amd = AmdCode::for_target(length_bits, target)?;
        let widest = fp_amd.width().max(sync_amd.width());
        if widest > slot_bits {
            return Err(ParamError::Iteration(format!(
                "iteration {index}: AMD word of {widest} bits exceeds F_j = {slot_bits}; raise beta"
            )));
        }
        let message = REDUNDANCY * slot_bits;
        Ok(IterationParams {
            index,
            length: bounded.length,
            slot_bits,
            repetitions,
            rounds,
            target,
            hash,
            sync_codec: RobustCodec::new(sync_amd, message)?,
            fingerprint_codec: RobustCodec::new(fp_amd, message)?,
            length_bits,
        })
    }

    pub fn message_bits(&self) -> usize {
        REDUNDANCY * self.slot_bits
    }

    pub fn round_len(&self) -> usize {
        (2 * REDUNDANCY + 1) * self.slot_bits
    }

    pub fn bits_per_round(&self) -> usize {
        self.slot_bits / self.repetitions
    }

    /// Bob reads the block slot as silence below this many alternations.
    pub fn is_silent(&self, alternations: usize) -> bool {
        3 * alternations < self.slot_bits
    }

    /// Chernoff bound on random bits looking silent: exp(-F_j / 18).
    pub fn false_silence_bound(&self) -> f64 {
        (-(self.slot_bits as f64) / 18.0).exp()
    }

    pub fn chernoff_ok(&self) -> bool {
        self.false_silence_bound() <= self.target
    }
}

/// Repetition-coded simulation of a fixed number of protocol bits, followed
/// by filler steps up to the slot width.
struct BlockSim {
    bits_left: usize,
    rep: usize,
    speaking: Option<u8>,
    votes: BitString,
    filler_left: usize,
    filler_sending: bool,
    offset: usize,
}

impl BlockSim {
    fn new(p: &IterationParams) -> Self {
        let bits = p.bits_per_round();
        BlockSim {
            bits_left: bits,
            rep: 0,
            speaking: None,
            votes: BitString::new(),
            filler_left: p.slot_bits - bits * p.repetitions,
            filler_sending: false,
            offset: 0,
        }
    }

    fn intent(&mut self, proto: &PaddedProtocol, role: Role, t: &Transcript) -> StepIntent {
        if self.bits_left > 0 {
            if self.rep == 0 {
                self.speaking = simulate_intent(proto, role, t).1;
                self.votes = BitString::new();
            }
            match self.speaking {
                Some(b) => StepIntent::Send(b),
                None => StepIntent::Listen,
            }
        } else {
            self.filler_sending = proto.direction(t.len()) == role;
            if self.filler_sending {
                StepIntent::Send(0)
            } else {
                StepIntent::Listen
            }
        }
    }

    /// Returns true once the slot is used up.
    fn deliver(&mut self, received: Option<u8>, t: &mut Transcript, repetitions: usize) -> bool {
        self.offset += 1;
        if self.bits_left > 0 {
            if self.speaking.is_none() {
                self.votes.push(received.unwrap_or(0));
            }
            self.rep += 1;
            if self.rep == repetitions {
                t.push(self.speaking.unwrap_or_else(|| majority(&self.votes)));
                self.rep = 0;
                self.bits_left -= 1;
            }
        } else {
            self.filler_left -= 1;
        }
        self.bits_left == 0 && self.filler_left == 0
    }
}

enum AlicePhase {
    Sync { word: BitString, pos: usize },
    Block(BlockSim),
    Random { left: usize },
    Receive { buf: BitString },
}

pub struct IterationAlice {
    params: Arc<IterationParams>,
    proto: Arc<PaddedProtocol>,
    rng: ChaCha8Rng,
    transcript: Transcript,
    verified: Transcript,
    phase: Option<AlicePhase>,
    rounds_done: u64,
    round_start: u64,
    window_start: u64,
    status: Status,
    events: Vec<Event>,
}

impl IterationAlice {
    /// Continues from the given transcripts; the working transcript is reset
    /// to the verified one.
    pub fn new(
        params: Arc<IterationParams>,
        proto: Arc<PaddedProtocol>,
        verified: Transcript,
        rng: ChaCha8Rng,
    ) -> Self {
        IterationAlice {
            params,
            proto,
            rng,
            transcript: verified.clone(),
            verified,
            phase: None,
            rounds_done: 0,
            round_start: 0,
            window_start: 0,
            status: Status::Running,
            events: Vec::new(),
        }
    }

    pub fn params(&self) -> &IterationParams {
        &self.params
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn rounds_done(&self) -> u64 {
        self.rounds_done
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

    pub fn into_parts(self) -> (Transcript, ChaCha8Rng) {
        (self.verified, self.rng)
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, Event> {
        self.events.drain(..)
    }

    pub fn slot(&self) -> SlotInfo {
        let p = &self.params;
        let (kind, offset, len) = match &self.phase {
            None => (SlotKind::Sync, 0, p.message_bits()),
            Some(AlicePhase::Sync { pos, .. }) => (SlotKind::Sync, *pos, p.message_bits()),
            Some(AlicePhase::Block(b)) => (SlotKind::Simulate, b.offset, p.slot_bits),
            Some(AlicePhase::Random { left }) => (SlotKind::Random, p.slot_bits - left, p.slot_bits),
            Some(AlicePhase::Receive { buf }) => (SlotKind::Fingerprint, buf.len(), p.message_bits()),
        };
        SlotInfo { kind, iteration: p.index, offset, len }
    }

    fn start_round(&mut self, step: u64) {
        let payload = BitString::from_uint(self.verified.len() as u128, self.params.length_bits);
        let word = self
            .params
            .sync_codec
            .encode(&payload, &mut self.rng)
            .expect("sync payload fits its code");
        self.events.push(Event::Sent { role: Role::Alice, kind: MessageKind::Sync, start: step, payload });
        self.round_start = step;
        self.phase = Some(AlicePhase::Sync { word, pos: 0 });
    }

    pub fn intent(&mut self, step: u64) -> StepIntent {
        if self.phase.is_none() {
            self.start_round(step);
        }
        match self.phase.as_mut().unwrap() {
            AlicePhase::Sync { word, pos } => StepIntent::Send(word.get(*pos).unwrap()),
            AlicePhase::Block(sim) => sim.intent(&self.proto, Role::Alice, &self.transcript),
            AlicePhase::Random { .. } => StepIntent::Send(self.rng.gen::<bool>() as u8),
            AlicePhase::Receive { .. } => StepIntent::Listen,
        }
    }

    pub fn deliver(&mut self, step: u64, received: Option<u8>) -> &Status {
        let p = self.params.clone();
        let to_receive = |this: &mut Self| {
            this.window_start = step + 1;
            this.phase = Some(AlicePhase::Receive { buf: BitString::with_capacity(p.message_bits()) });
        };
        match self.phase.as_mut().expect("intent precedes deliver") {
            AlicePhase::Sync { pos, .. } => {
                *pos += 1;
                if *pos == p.message_bits() {
                    self.phase = Some(if self.verified.len() < p.length {
                        AlicePhase::Block(BlockSim::new(&p))
                    } else {
                        AlicePhase::Random { left: p.slot_bits }
                    });
                }
            }
            AlicePhase::Block(sim) => {
                if sim.deliver(received, &mut self.transcript, p.repetitions) {
                    to_receive(self);
                }
            }
            AlicePhase::Random { left } => {
                *left -= 1;
                if *left == 0 {
                    to_receive(self);
                }
            }
            AlicePhase::Receive { buf } => {
                buf.push(received.unwrap_or(0));
                if buf.len() == p.message_bits() {
                    let buf = std::mem::take(buf);
                    self.end_round(step, &buf);
                }
            }
        }
        &self.status
    }

    fn end_round(&mut self, step: u64, buf: &BitString) {
        self.phase = None;
        self.rounds_done += 1;
        let p = self.params.clone();
        let mut committed = false;
        if let Ok(payload) = p.fingerprint_codec.decode(buf) {
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
        }
        self.push_round_end(step, committed);
        if self.rounds_done >= p.rounds {
            self.status = Status::Exhausted;
        }
    }

    fn push_round_end(&mut self, step: u64, progressed: bool) {
        self.events.push(Event::RoundEnd(RoundSummary {
            role: Role::Alice,
            iteration: self.params.index,
            start: self.round_start,
            end: step,
            progressed,
            verified_len: self.verified.len(),
            failures: 0,
            round_size: self.params.round_len(),
        }));
    }
}

enum BobPhase {
    Wait { left: usize },
    SilenceCheck { buf: BitString },
    Receive { buf: BitString },
    Block(BlockSim),
    Send { word: BitString, pos: usize },
    Random { left: usize },
}

pub struct IterationBob {
    params: Arc<IterationParams>,
    proto: Arc<PaddedProtocol>,
    rng: ChaCha8Rng,
    transcript: Transcript,
    verified: Transcript,
    phase: Option<BobPhase>,
    rounds_done: u64,
    round_start: u64,
    committed: bool,
    status: Status,
    events: Vec<Event>,
}

impl IterationBob {
    pub fn new(
        params: Arc<IterationParams>,
        proto: Arc<PaddedProtocol>,
        transcript: Transcript,
        verified: Transcript,
        rng: ChaCha8Rng,
    ) -> Self {
        IterationBob {
            params,
            proto,
            rng,
            transcript,
            verified,
            phase: None,
            rounds_done: 0,
            round_start: 0,
            committed: false,
            status: Status::Running,
            events: Vec::new(),
        }
    }

    pub fn params(&self) -> &IterationParams {
        &self.params
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn rounds_done(&self) -> u64 {
        self.rounds_done
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

    pub fn into_parts(self) -> (Transcript, Transcript, ChaCha8Rng) {
        (self.transcript, self.verified, self.rng)
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, Event> {
        self.events.drain(..)
    }

    pub fn slot(&self) -> SlotInfo {
        let p = &self.params;
        let msg = p.message_bits();
        let (kind, offset, len) = match &self.phase {
            None if self.verified.len() >= p.length => (SlotKind::Wait, 0, msg),
            None => (SlotKind::Sync, 0, msg),
            Some(BobPhase::Wait { left }) => (SlotKind::Wait, msg - left, msg),
            Some(BobPhase::SilenceCheck { buf }) => (SlotKind::SilenceCheck, buf.len(), p.slot_bits),
            Some(BobPhase::Receive { buf }) => (SlotKind::Sync, buf.len(), msg),
            Some(BobPhase::Block(b)) => (SlotKind::Simulate, b.offset, p.slot_bits),
            Some(BobPhase::Send { pos, .. }) => (SlotKind::Fingerprint, *pos, msg),
            Some(BobPhase::Random { left }) => {
                let len = msg + p.slot_bits;
                (SlotKind::Random, len - left, len)
            }
        };
        SlotInfo { kind, iteration: p.index, offset, len }
    }

    pub fn intent(&mut self, step: u64) -> StepIntent {
        if self.phase.is_none() {
            self.round_start = step;
            self.committed = false;
            let msg = self.params.message_bits();
            self.phase = Some(if self.verified.len() >= self.params.length {
                BobPhase::Wait { left: msg }
            } else {
                BobPhase::Receive { buf: BitString::with_capacity(msg) }
            });
        }
        match self.phase.as_mut().unwrap() {
            BobPhase::Wait { .. } | BobPhase::SilenceCheck { .. } | BobPhase::Receive { .. } => {
                StepIntent::Listen
            }
            BobPhase::Block(sim) => sim.intent(&self.proto, Role::Bob, &self.transcript),
            BobPhase::Send { word, pos } => StepIntent::Send(word.get(*pos).unwrap()),
            BobPhase::Random { .. } => StepIntent::Send(self.rng.gen::<bool>() as u8),
        }
    }

    pub fn deliver(&mut self, step: u64, received: Option<u8>) -> &Status {
        let p = self.params.clone();
        match self.phase.as_mut().expect("intent precedes deliver") {
            BobPhase::Wait { left } => {
                *left -= 1;
                if *left == 0 {
                    self.phase = Some(BobPhase::SilenceCheck { buf: BitString::with_capacity(p.slot_bits) });
                }
            }
            BobPhase::SilenceCheck { buf } => {
                buf.push(received.unwrap_or(0));
                if buf.len() == p.slot_bits {
                    if p.is_silent(count_alternations(buf)) {
                        self.phase = None;
                        self.rounds_done += 1;
                        self.status = Status::Output(self.verified.prefix(p.length).ok());
                        self.events.push(Event::Terminated { role: Role::Bob, step, silence: true });
                    } else {
                        let t = self.verified.clone();
                        self.start_fingerprint(step + 1, &t);
                    }
                }
            }
            BobPhase::Receive { buf } => {
                buf.push(received.unwrap_or(0));
                if buf.len() == p.message_bits() {
                    let buf = std::mem::take(buf);
                    self.on_sync(&buf);
                }
            }
            BobPhase::Block(sim) => {
                if sim.deliver(received, &mut self.transcript, p.repetitions) {
                    let t = self.transcript.clone();
                    self.start_fingerprint(step + 1, &t);
                }
            }
            BobPhase::Send { pos, .. } => {
                *pos += 1;
                if *pos == p.message_bits() {
                    self.end_round(step);
                }
            }
            BobPhase::Random { left } => {
                *left -= 1;
                if *left == 0 {
                    self.end_round(step);
                }
            }
        }
        &self.status
    }

    fn on_sync(&mut self, buf: &BitString) {
        let p = self.params.clone();
        match p.sync_codec.decode(buf) {
            Ok(payload) => {
                self.events.push(Event::Accepted {
                    role: Role::Bob,
                    kind: MessageKind::Sync,
                    start: self.round_start,
                    payload: payload.clone(),
                });
                let claimed = payload.read_uint(0, p.length_bits) as usize;
                if claimed > self.verified.len() {
                    self.verified = self.transcript.clone();
                    self.committed = true;
                } else {
                    self.transcript = self.verified.clone();
                }
                self.phase = Some(BobPhase::Block(BlockSim::new(&p)));
            }
            Err(_) => {
                self.phase = Some(BobPhase::Random { left: (REDUNDANCY + 1) * p.slot_bits });
            }
        }
    }

    fn start_fingerprint(&mut self, start: u64, t: &Transcript) {
        let p = &self.params;
        let fp = p.hash.hash(t.bits(), &mut self.rng);
        self.events.push(Event::Hashed { len: t.len(), digest: t.digest() });
        let payload = fp.to_bits(p.hash.field_bits());
        let word = p.fingerprint_codec.encode(&payload, &mut self.rng).expect("fingerprint fits");
        self.events.push(Event::Sent { role: Role::Bob, kind: MessageKind::Fingerprint, start, payload });
        self.phase = Some(BobPhase::Send { word, pos: 0 });
    }

    fn end_round(&mut self, step: u64) {
        self.phase = None;
        self.rounds_done += 1;
        self.events.push(Event::RoundEnd(RoundSummary {
            role: Role::Bob,
            iteration: self.params.index,
            start: self.round_start,
            end: step,
            progressed: self.committed,
            verified_len: self.verified.len(),
            failures: 0,
            round_size: self.params.round_len(),
        }));
        if self.rounds_done >= self.params.rounds {
            self.status = Status::Exhausted;
        }
    }
}
