//! Lockstep binary channel with adversarial flips and spoofable silence.
//!
//! Each step both parties declare an intent. With one sender the listener
//! receives the sent bit, flipped if the adversary pays for it. With two
//! senders nothing is delivered. With no sender the listeners hear the
//! channel's silence bit: the adversary sets it for free on the first step
//! of a silent run and pays one flip for every later change.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepIntent {
    Send(u8),
    Listen,
}

impl StepIntent {
    pub fn sent(self) -> Option<u8> {
        match self {
            StepIntent::Send(b) => Some(b),
            StepIntent::Listen => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activity {
    BothSilent,
    OneSending,
    BothSending,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Pass,
    Flip,
    SetSilentBit(u8),
}

/// Coarse position of a party inside the coding scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    /// Alice sending, or Bob receiving, a synchronization message.
    Sync,
    /// Simulating bits of the underlying protocol.
    Simulate,
    /// Bob sending, or Alice receiving, a fingerprint.
    Fingerprint,
    /// Transmitting random bits.
    Random,
    /// Bob idling through Alice's synchronization slot.
    Wait,
    /// Bob sampling the channel for silence.
    SilenceCheck,
    #[default]
    Idle,
    Done,
}

/// What the scheme's public structure says a party is doing this step.
/// An adversary that knows the algorithm and its own past actions can track
/// this without seeing any bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub kind: SlotKind,
    /// 0 for the bounded phase, j >= 1 for later iterations.
    pub iteration: u32,
    pub offset: usize,
    pub len: usize,
}

/// Bits actually put on the wire, visible only on a public channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observed {
    pub sent: [Option<u8>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdversaryView {
    pub step: u64,
    pub activity: Activity,
    /// True on the first step of a silent run, where setting the bit is free.
    pub silent_run_start: bool,
    pub present: [bool; 2],
    pub slots: [SlotInfo; 2],
    pub observed: Option<Observed>,
}

impl AdversaryView {
    pub fn slot(&self, role: Role) -> SlotInfo {
        self.slots[role.index()]
    }
}

/// What the adversary learns once a step resolves. Delivered bits are
/// withheld unless the channel is public.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Settlement {
    pub charged: bool,
    pub rejected: bool,
    pub delivered: Option<[Option<u8>; 2]>,
}

pub trait Adversary {
    fn decide(&mut self, view: &AdversaryView) -> Action;

    fn settle(&mut self, _view: &AdversaryView, _settlement: &Settlement) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SilenceState {
    in_silence: bool,
    bit: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub steps: u64,
    /// Total charged corruptions: wire flips plus silence changes.
    pub flips: u64,
    pub wire_flips: u64,
    pub silence_charges: u64,
    pub rejected_actions: u64,
    pub flips_by_iteration: BTreeMap<u32, u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub activity: Activity,
    pub delivered: [Option<u8>; 2],
    pub charged: bool,
    pub silence_charge: bool,
    pub rejected: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Channel {
    silence: SilenceState,
    ledger: CostLedger,
}

pub fn activity(intents: [Option<StepIntent>; 2]) -> Activity {
    match intents.iter().filter(|i| matches!(i, Some(StepIntent::Send(_)))).count() {
        0 => Activity::BothSilent,
        1 => Activity::OneSending,
        _ => Activity::BothSending,
    }
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> CostLedger {
        self.ledger
    }

    /// Whether the next all-listening step would start a new silent run.
    pub fn silent_run_start(&self) -> bool {
        !self.silence.in_silence
    }

    /// Resolves one step. Absent parties are `None`.
    pub fn step(
        &mut self,
        intents: [Option<StepIntent>; 2],
        action: Action,
        iteration: u32,
    ) -> StepOutcome {
        let act = activity(intents);
        let mut out = StepOutcome {
            activity: act,
            delivered: [None, None],
            charged: false,
            silence_charge: false,
            rejected: false,
        };
        match act {
            Activity::OneSending => {
                self.silence.in_silence = false;
                let (sender, bit) = intents
                    .iter()
                    .enumerate()
                    .find_map(|(i, it)| it.and_then(|x| x.sent()).map(|b| (i, b)))
                    .unwrap();
                let flip = match action {
                    Action::Pass => false,
                    Action::Flip => true,
                    Action::SetSilentBit(_) => {
                        out.rejected = true;
                        false
                    }
                };
                out.charged = flip;
                let listener = 1 - sender;
                if intents[listener] == Some(StepIntent::Listen) {
                    out.delivered[listener] = Some(bit ^ flip as u8);
                }
            }
            Activity::BothSending => {
                self.silence.in_silence = false;
                out.rejected = action != Action::Pass;
            }
            Activity::BothSilent => {
                if !self.silence.in_silence {
                    self.silence.in_silence = true;
                    self.silence.bit = match action {
                        Action::Pass => 0,
                        Action::Flip => 1,
                        Action::SetSilentBit(b) => b & 1,
                    };
                } else {
                    let target = match action {
                        Action::Pass => self.silence.bit,
                        Action::Flip => self.silence.bit ^ 1,
                        Action::SetSilentBit(b) => b & 1,
                    };
                    if target != self.silence.bit {
                        self.silence.bit = target;
                        out.charged = true;
                        out.silence_charge = true;
                    }
                }
                for (i, it) in intents.iter().enumerate() {
                    if *it == Some(StepIntent::Listen) {
                        out.delivered[i] = Some(self.silence.bit);
                    }
                }
            }
        }
        self.ledger.steps += 1;
        if out.charged {
            self.ledger.flips += 1;
            if out.silence_charge {
                self.ledger.silence_charges += 1;
            } else {
                self.ledger.wire_flips += 1;
            }
            *self.ledger.flips_by_iteration.entry(iteration).or_default() += 1;
        }
        if out.rejected {
            self.ledger.rejected_actions += 1;
        }
        out
    }
}

/// A party's step-level state machine.
pub trait Party {
    /// Intent for this step, or `None` once the party has left.
    fn intent(&mut self, step: u64) -> Option<StepIntent>;
    /// What the party heard this step; `None` if it was sending.
    fn deliver(&mut self, step: u64, received: Option<u8>);
    fn slot(&self) -> SlotInfo;
    fn finished(&self) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub intents: [Option<StepIntent>; 2],
    pub action: Action,
    pub iteration: u32,
    pub outcome: StepOutcome,
}

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub max_steps: u64,
    pub public: bool,
}

#[derive(Clone, Debug)]
pub struct EngineResult {
    pub ledger: CostLedger,
    /// Steps each party was present for, counting its final step.
    pub party_steps: [u64; 2],
    pub timed_out: bool,
}

/// Runs both parties until they have both left or `max_steps` elapse.
/// `observe` sees every resolved step together with both parties, after
/// both have been delivered their bits.
pub fn run_lockstep<A, B, F>(
    alice: &mut A,
    bob: &mut B,
    adversary: &mut dyn Adversary,
    config: EngineConfig,
    mut observe: F,
) -> EngineResult
where
    A: Party,
    B: Party,
    F: FnMut(&StepRecord, &mut A, &mut B),
{
    let mut channel = Channel::new();
    let mut party_steps = [0u64; 2];
    let mut step = 0u64;
    while !(alice.finished() && bob.finished()) {
        if step >= config.max_steps {
            return EngineResult { ledger: channel.into_ledger(), party_steps, timed_out: true };
        }
        let intents = [
            if alice.finished() { None } else { alice.intent(step) },
            if bob.finished() { None } else { bob.intent(step) },
        ];
        let present = [intents[0].is_some(), intents[1].is_some()];
        let slots = [alice.slot(), bob.slot()];
        let iteration = if present[0] { slots[0].iteration } else { slots[1].iteration };
        let view = AdversaryView {
            step,
            activity: activity(intents),
            silent_run_start: channel.silent_run_start(),
            present,
            slots,
            observed: config.public.then(|| Observed {
                sent: [intents[0].and_then(StepIntent::sent), intents[1].and_then(StepIntent::sent)],
            }),
        };
        let action = adversary.decide(&view);
        let outcome = channel.step(intents, action, iteration);
        let settlement = Settlement {
            charged: outcome.charged,
            rejected: outcome.rejected,
            delivered: config.public.then_some(outcome.delivered),
        };
        adversary.settle(&view, &settlement);
        if present[0] {
            alice.deliver(step, outcome.delivered[0]);
            party_steps[0] = step + 1;
        }
        if present[1] {
            bob.deliver(step, outcome.delivered[1]);
            party_steps[1] = step + 1;
        }
        let record = StepRecord { step, intents, action, iteration, outcome };
        observe(&record, alice, bob);
        step += 1;
    }
    EngineResult { ledger: channel.into_ledger(), party_steps, timed_out: false }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("step {step}: recorded outcome {recorded:?} differs from replayed {replayed:?}")]
    Mismatch { step: u64, recorded: StepOutcome, replayed: StepOutcome },
    #[error("trace steps out of order at {0}")]
    Order(u64),
}

/// Re-resolves every recorded step from its intents and action and checks
/// the recorded outcome, returning the recomputed ledger.
pub fn replay<'a, I>(records: I) -> Result<CostLedger, TraceError>
where
    I: IntoIterator<Item = &'a StepRecord>,
{
    let mut channel = Channel::new();
    for (i, rec) in records.into_iter().enumerate() {
        if rec.step != i as u64 {
            return Err(TraceError::Order(rec.step));
        }
        let replayed = channel.step(rec.intents, rec.action, rec.iteration);
        if replayed != rec.outcome {
            return Err(TraceError::Mismatch { step: rec.step, recorded: rec.outcome, replayed });
        }
    }
    Ok(channel.into_ledger())
}
