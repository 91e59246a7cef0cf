//! Adversary strategies.
//!
//! Every strategy except the man-in-the-middle decides from the bit-blind
//! view: step, activity, and where each party is in the scheme's schedule.
//! Budgets count charged corruptions as reported back by the channel.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Action, Activity, Adversary, AdversaryView, Party, Settlement, SlotKind, StepIntent};
use crate::protocol::{PaddedProtocol, ProtocolSpec, Role};
use crate::scheme::SchemeParams;
use crate::scheme::SchemeParty;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("cannot parse adversary {0:?}")]
    Parse(String),
    #[error("exhaustive enumeration is driven by the harness, not built per run")]
    Enumerated,
}

/// Strategy selector, written on the command line as
/// `none | iid:RATE[,B] | burst:S,N | sync:B | fp:B | silence:B |
/// exhaustive:W,K | mitm[:B]`.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversarySpec {
    None,
    /// Flips each transmitted bit independently with probability `rate`.
    Iid { rate: f64, budget: Option<u64> },
    /// Flips every transmitted bit in `[start, start + len)`.
    Burst { start: u64, len: u64 },
    /// Corrupts synchronization messages.
    Sync { budget: u64 },
    /// Corrupts fingerprints.
    Fingerprint { budget: u64 },
    /// Keeps Bob from reading silence after Alice has left.
    Silence { budget: u64 },
    /// Every pattern of at most `max_flips` flips in the first `window` steps.
    Exhaustive { window: u64, max_flips: usize },
    /// Impersonates Alice running a re-keyed protocol.
    Mitm { budget: Option<u64> },
}

fn parse_num<T: FromStr>(s: &str, whole: &str) -> Result<T, AdversaryError> {
    s.trim().parse().map_err(|_| AdversaryError::Parse(whole.to_string()))
}

impl FromStr for AdversarySpec {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let args: Vec<&str> = if args.is_empty() { Vec::new() } else { args.split(',').collect() };
        let bad = || AdversaryError::Parse(s.to_string());
        let spec = match (name, args.as_slice()) {
            ("none", []) => AdversarySpec::None,
            ("iid", [rate]) => AdversarySpec::Iid { rate: parse_num(rate, s)?, budget: None },
            ("iid", [rate, b]) => {
                AdversarySpec::Iid { rate: parse_num(rate, s)?, budget: Some(parse_num(b, s)?) }
            }
            ("burst", [start, len]) => {
                AdversarySpec::Burst { start: parse_num(start, s)?, len: parse_num(len, s)? }
            }
            ("sync", [b]) => AdversarySpec::Sync { budget: parse_num(b, s)? },
            ("fp", [b]) => AdversarySpec::Fingerprint { budget: parse_num(b, s)? },
            ("silence", [b]) => AdversarySpec::Silence { budget: parse_num(b, s)? },
            ("exhaustive", [w, k]) => {
                AdversarySpec::Exhaustive { window: parse_num(w, s)?, max_flips: parse_num(k, s)? }
            }
            ("mitm", []) => AdversarySpec::Mitm { budget: None },
            ("mitm", [b]) => AdversarySpec::Mitm { budget: Some(parse_num(b, s)?) },
            _ => return Err(bad()),
        };
        if let AdversarySpec::Iid { rate, .. } = spec {
            if !(0.0..=1.0).contains(&rate) {
                return Err(bad());
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::None => write!(f, "none"),
            AdversarySpec::Iid { rate, budget: None } => write!(f, "iid:{rate}"),
            AdversarySpec::Iid { rate, budget: Some(b) } => write!(f, "iid:{rate},{b}"),
            AdversarySpec::Burst { start, len } => write!(f, "burst:{start},{len}"),
            AdversarySpec::Sync { budget } => write!(f, "sync:{budget}"),
            AdversarySpec::Fingerprint { budget } => write!(f, "fp:{budget}"),
            AdversarySpec::Silence { budget } => write!(f, "silence:{budget}"),
            AdversarySpec::Exhaustive { window, max_flips } => write!(f, "exhaustive:{window},{max_flips}"),
            AdversarySpec::Mitm { budget: None } => write!(f, "mitm"),
            AdversarySpec::Mitm { budget: Some(b) } => write!(f, "mitm:{b}"),
        }
    }
}

impl Serialize for AdversarySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AdversarySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What an adversary knows before the run: the algorithm, its parameters
/// and the protocol, but none of the parties' randomness.
#[derive(Clone)]
pub struct AdversaryContext {
    pub params: Arc<SchemeParams>,
    pub protocol: ProtocolSpec,
    pub public: bool,
}

impl AdversarySpec {
    pub fn budget(&self) -> Option<u64> {
        match self {
            AdversarySpec::None => Some(0),
            AdversarySpec::Iid { budget, .. } | AdversarySpec::Mitm { budget } => *budget,
            AdversarySpec::Burst { len, .. } => Some(*len),
            AdversarySpec::Sync { budget }
            | AdversarySpec::Fingerprint { budget }
            | AdversarySpec::Silence { budget } => Some(*budget),
            AdversarySpec::Exhaustive { max_flips, .. } => Some(*max_flips as u64),
        }
    }

    pub fn build(&self, ctx: &AdversaryContext, seed: u64) -> Result<Box<dyn Adversary>, AdversaryError> {
        Ok(match self {
            AdversarySpec::None => Box::new(Passive),
            AdversarySpec::Iid { rate, budget } => Box::new(IidFlip::new(*rate, *budget, seed)),
            AdversarySpec::Burst { start, len } => Box::new(Burst { start: *start, len: *len }),
            AdversarySpec::Sync { budget } => {
                Box::new(SlotTargeted::new(Target::Sync, *budget, ctx.params.clone()))
            }
            AdversarySpec::Fingerprint { budget } => {
                Box::new(SlotTargeted::new(Target::Fingerprint, *budget, ctx.params.clone()))
            }
            AdversarySpec::Silence { budget } => {
                Box::new(SilenceSpoofer::new(*budget, ctx.params.clone()))
            }
            AdversarySpec::Exhaustive { .. } => return Err(AdversaryError::Enumerated),
            AdversarySpec::Mitm { budget } => Box::new(Mitm::new(ctx, *budget, seed)),
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Budget {
    limit: Option<u64>,
    spent: u64,
}

impl Budget {
    fn new(limit: Option<u64>) -> Self {
        Budget { limit, spent: 0 }
    }

    fn remaining(&self) -> u64 {
        self.limit.map_or(u64::MAX, |l| l.saturating_sub(self.spent))
    }

    fn settle(&mut self, s: &Settlement) {
        self.spent += s.charged as u64;
    }
}

pub struct Passive;

impl Adversary for Passive {
    fn decide(&mut self, _view: &AdversaryView) -> Action {
        Action::Pass
    }
}

pub struct IidFlip {
    rate: f64,
    budget: Budget,
    rng: ChaCha8Rng,
}

impl IidFlip {
    pub fn new(rate: f64, budget: Option<u64>, seed: u64) -> Self {
        IidFlip { rate, budget: Budget::new(budget), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Adversary for IidFlip {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        // Draw every step so the stream does not depend on activity.
        let hit = self.rng.gen_bool(self.rate);
        if hit && view.activity == Activity::OneSending && self.budget.remaining() > 0 {
            Action::Flip
        } else {
            Action::Pass
        }
    }

    fn settle(&mut self, _view: &AdversaryView, s: &Settlement) {
        self.budget.settle(s);
    }
}

pub struct Burst {
    pub start: u64,
    pub len: u64,
}

impl Adversary for Burst {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        let inside = view.step >= self.start && view.step - self.start < self.len;
        if inside && view.activity == Activity::OneSending {
            Action::Flip
        } else {
            Action::Pass
        }
    }
}

/// Flips at a fixed set of steps whatever the activity.
pub struct FlipAt {
    steps: BTreeSet<u64>,
}

impl FlipAt {
    pub fn new<I: IntoIterator<Item = u64>>(steps: I) -> Self {
        FlipAt { steps: steps.into_iter().collect() }
    }
}

impl Adversary for FlipAt {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        if self.steps.contains(&view.step) {
            Action::Flip
        } else {
            Action::Pass
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Sync,
    Fingerprint,
}

/// Offsets inside a message slot that must all be hit to defeat decoding:
/// one bit of the bounded-phase AMD word, or one bit in each of
/// `capacity + 1` Reed-Solomon symbols in later iterations.
fn message_targets(params: &SchemeParams, target: Target, iteration: u32) -> Vec<usize> {
    if iteration == 0 {
        return vec![0];
    }
    let p = params.iteration(iteration);
    let codec = match target {
        Target::Sync => &p.sync_codec,
        Target::Fingerprint => &p.fingerprint_codec,
    };
    let m = codec.ecc().symbol_bits() as usize;
    (0..=codec.ecc().capacity()).map(|i| i * m).collect()
}

/// Spends its budget one message at a time, each just heavy enough to make
/// the receiver reject it.
pub struct SlotTargeted {
    target: Target,
    budget: Budget,
    params: Arc<SchemeParams>,
    targets: HashMap<u32, Vec<usize>>,
    /// Whether the message currently on the wire is being corrupted.
    active: bool,
    messages_hit: u64,
}

impl SlotTargeted {
    fn new(target: Target, budget: u64, params: Arc<SchemeParams>) -> Self {
        SlotTargeted {
            target,
            budget: Budget::new(Some(budget)),
            params,
            targets: HashMap::new(),
            active: false,
            messages_hit: 0,
        }
    }

    pub fn messages_hit(&self) -> u64 {
        self.messages_hit
    }
}

impl Adversary for SlotTargeted {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        if view.activity != Activity::OneSending || !view.present[0] || !view.present[1] {
            return Action::Pass;
        }
        let (sender, receiver) = match self.target {
            Target::Sync => (Role::Alice, Role::Bob),
            Target::Fingerprint => (Role::Bob, Role::Alice),
        };
        let want = match self.target {
            Target::Sync => SlotKind::Sync,
            Target::Fingerprint => SlotKind::Fingerprint,
        };
        let (tx, rx) = (view.slot(sender), view.slot(receiver));
        if tx.kind != want || rx.kind != want || tx.iteration != rx.iteration {
            return Action::Pass;
        }
        let params = &self.params;
        let target = self.target;
        let offsets = self
            .targets
            .entry(rx.iteration)
            .or_insert_with(|| message_targets(params, target, rx.iteration));
        let Ok(pos) = offsets.binary_search(&rx.offset) else {
            return Action::Pass;
        };
        if pos == 0 {
            self.active = self.budget.remaining() >= offsets.len() as u64;
            self.messages_hit += self.active as u64;
        }
        if self.active {
            Action::Flip
        } else {
            Action::Pass
        }
    }

    fn settle(&mut self, _view: &AdversaryView, s: &Settlement) {
        self.budget.settle(s);
    }
}

/// After Alice leaves, toggles the silent channel inside each of Bob's
/// listening windows so that he keeps going.
pub struct SilenceSpoofer {
    budget: Budget,
    params: Arc<SchemeParams>,
}

impl SilenceSpoofer {
    fn new(budget: u64, params: Arc<SchemeParams>) -> Self {
        SilenceSpoofer { budget: Budget::new(Some(budget)), params }
    }

    /// Toggles needed in one window: one breaks a constant bounded-phase
    /// sync slot, `ceil(F_j / 3)` reach the alternation threshold.
    fn toggles(&self, iteration: u32) -> usize {
        if iteration == 0 {
            1
        } else {
            self.params.iteration(iteration).slot_bits.div_ceil(3)
        }
    }
}

impl Adversary for SilenceSpoofer {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        if view.present[0] || !view.present[1] || view.activity != Activity::BothSilent {
            return Action::Pass;
        }
        let bob = view.slot(Role::Bob);
        let listening = match bob.kind {
            SlotKind::Sync => bob.iteration == 0,
            SlotKind::SilenceCheck => true,
            _ => false,
        };
        if !listening || bob.offset == 0 {
            return Action::Pass;
        }
        let need = self.toggles(bob.iteration);
        // Commit to the whole window up front or not at all.
        if bob.offset <= need && self.budget.remaining() >= (need + 1 - bob.offset) as u64 {
            Action::Flip
        } else {
            Action::Pass
        }
    }

    fn settle(&mut self, _view: &AdversaryView, s: &Settlement) {
        self.budget.settle(s);
    }
}

/// Runs its own Alice on a re-keyed protocol and makes Bob hear her instead
/// of the real one. On a public channel it sees Alice's bits and cancels
/// exactly the differing ones; on a private channel it can only guess.
pub struct Mitm {
    shadow: SchemeParty,
    shadow_intent: Option<StepIntent>,
    budget: Budget,
    rng: ChaCha8Rng,
    alternate: ProtocolSpec,
}

/// The protocol the man-in-the-middle pretends Alice is running: same
/// schedule and Bob key, fresh Alice key.
pub fn alternate_protocol(spec: &ProtocolSpec, seed: u64) -> ProtocolSpec {
    spec.with_alice_key(crate::protocol::prf(seed, 0x616c_7465_726e, 1))
}

impl Mitm {
    pub fn new(ctx: &AdversaryContext, budget: Option<u64>, seed: u64) -> Self {
        let alternate = alternate_protocol(&ctx.protocol, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proto = Arc::new(PaddedProtocol::new(alternate.clone(), rng.gen()));
        let shadow = SchemeParty::new(Role::Alice, ctx.params.clone(), proto, rng.gen());
        Mitm { shadow, shadow_intent: None, budget: Budget::new(budget), rng, alternate }
    }

    pub fn alternate(&self) -> &ProtocolSpec {
        &self.alternate
    }

    /// The bit Bob should hear this step if he listens.
    fn wanted(&self) -> u8 {
        match self.shadow_intent {
            Some(StepIntent::Send(b)) => b,
            _ => 0,
        }
    }
}

impl Adversary for Mitm {
    fn decide(&mut self, view: &AdversaryView) -> Action {
        self.shadow_intent =
            if self.shadow.finished() { None } else { self.shadow.intent(view.step) };
        if !view.present[1] || self.budget.remaining() == 0 {
            return Action::Pass;
        }
        let want = self.wanted();
        match view.observed {
            Some(obs) => {
                if obs.sent[1].is_some() {
                    return Action::Pass;
                }
                match obs.sent[0] {
                    Some(a) if a != want => Action::Flip,
                    Some(_) => Action::Pass,
                    None => Action::SetSilentBit(want),
                }
            }
            None => match view.activity {
                Activity::BothSilent => Action::SetSilentBit(want),
                Activity::OneSending if self.rng.gen::<bool>() => Action::Flip,
                _ => Action::Pass,
            },
        }
    }

    fn settle(&mut self, view: &AdversaryView, s: &Settlement) {
        self.budget.settle(s);
        let Some(intent) = self.shadow_intent.take() else {
            return;
        };
        let rx = match intent {
            StepIntent::Send(_) => None,
            StepIntent::Listen => Some(match view.observed.and_then(|o| o.sent[1]) {
                Some(b) => b,
                None => match s.delivered {
                    // Bob heard the shadow's silence, or nothing.
                    Some(d) => d[1].unwrap_or(0),
                    None => self.rng.gen::<bool>() as u8,
                },
            }),
        };
        self.shadow.deliver(view.step, rx);
    }
}
