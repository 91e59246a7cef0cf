//! The full scheme: a bounded phase up to channel step `12L`, then
//! iterations of growing fingerprints and repetition until both parties
//! leave.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{AmdCode, FingerprintHash};
use crate::bits::BitString;
use crate::bounded::{bits_for, BoundedAlice, BoundedBob, BoundedParams, ParamError, Status};
use crate::channel::{Party, SlotInfo, SlotKind, StepIntent};
use crate::events::Event;
use crate::iteration::{IterationAlice, IterationBob, IterationParams};
use crate::protocol::{PaddedProtocol, Role, Transcript};

/// Iteration 0 owns channel steps `[0, BOUNDED_PHASE_FACTOR * L)`.
pub const BOUNDED_PHASE_FACTOR: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub length: usize,
    /// Per-use failure target of the bounded phase; iteration `j` uses
    /// `target * 4^-j`. Defaults to `1 / L^2`.
    pub target: Option<f64>,
    /// Lower bound on the bounded-phase slot width F.
    pub min_slot: usize,
    /// Fingerprint growth per iteration; defaults to the smallest valid one.
    pub beta: Option<usize>,
    pub max_iterations: u32,
}

impl SchemeConfig {
    pub fn standard(length: usize) -> Self {
        SchemeConfig { length, target: None, min_slot: 0, beta: None, max_iterations: 20 }
    }

    /// Small parameters for exhaustive checks: L = 512, failure target 2^-8.
    pub fn tiny() -> Self {
        SchemeConfig {
            length: 512,
            target: Some(2f64.powi(-8)),
            min_slot: 0,
            beta: None,
            max_iterations: 20,
        }
    }

    pub fn base_target(&self) -> f64 {
        self.target.unwrap_or_else(|| 1.0 / (self.length as f64).powi(2))
    }
}

#[derive(Debug)]
pub struct SchemeParams {
    pub config: SchemeConfig,
    pub bounded: Arc<BoundedParams>,
    pub beta: usize,
    iterations: Vec<OnceLock<Arc<IterationParams>>>,
}

impl SchemeParams {
    pub fn new(config: SchemeConfig) -> Result<Arc<Self>, ParamError> {
        let base = config.base_target();
        let bounded = Arc::new(BoundedParams::derive(config.length, base, config.min_slot)?);
        let minimal = minimal_beta(&bounded, base, config.max_iterations)?;
        let beta = match config.beta {
            Some(b) if b < minimal => {
                return Err(ParamError::Iteration(format!(
                    "beta {b} is below the smallest valid value {minimal}"
                )))
            }
            Some(b) => b,
            None => minimal,
        };
        // Fail fast on the first iteration; later ones are built on demand.
        let first = IterationParams::derive(1, &bounded, beta, base)?;
        let iterations: Vec<OnceLock<Arc<IterationParams>>> =
            (0..config.max_iterations).map(|_| OnceLock::new()).collect();
        if let Some(slot) = iterations.first() {
            let _ = slot.set(Arc::new(first));
        }
        Ok(Arc::new(SchemeParams { config, bounded, beta, iterations }))
    }

    pub fn length(&self) -> usize {
        self.config.length
    }

    pub fn bounded_phase_end(&self) -> u64 {
        BOUNDED_PHASE_FACTOR * self.config.length as u64
    }

    /// Parameters of iteration `j`, 1-based.
    pub fn iteration(&self, j: u32) -> Arc<IterationParams> {
        self.iterations[(j - 1) as usize]
            .get_or_init(|| {
                Arc::new(
                    IterationParams::derive(j, &self.bounded, self.beta, self.config.base_target())
                        .expect("beta validated for every iteration"),
                )
            })
            .clone()
    }
}

/// Smallest beta for which every iteration up to `max_iterations` fits its
/// AMD words into F_j and meets the false-silence bound
/// `exp(-F_j / 18) <= target_j`.
pub fn minimal_beta(
    bounded: &BoundedParams,
    base_target: f64,
    max_iterations: u32,
) -> Result<usize, ParamError> {
    let f = bounded.slot_bits;
    let max_bits = bounded.max_transcript_bits();
    let mut needs = Vec::with_capacity(max_iterations as usize);
    for j in 1..=max_iterations {
        let target = base_target * 4f64.powi(-(j as i32));
        let hash = FingerprintHash::for_target(max_bits, target)?;
        let widest = AmdCode::for_target(hash.payload_bits(), target)?
            .width()
            .max(AmdCode::for_target(bits_for(max_bits), target)?.width());
        needs.push((j as usize, widest, target));
    }
    let fits = |beta: usize| {
        needs.iter().all(|&(j, widest, target)| {
            let slot = f + 2 * beta * j;
            slot >= widest && (-(slot as f64) / 18.0).exp() <= target
        })
    };
    let mut beta = needs
        .iter()
        .map(|&(j, widest, target)| {
            let need = (widest as f64).max(18.0 * (1.0 / target).ln());
            ((need - f as f64) / (2.0 * j as f64)).ceil().max(0.0) as usize
        })
        .max()
        .unwrap_or(0);
    // Float rounding can leave the closed form a hair short.
    while !fits(beta) {
        beta += 1;
    }
    Ok(beta)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartyOutcome {
    Running,
    Output(Option<BitString>),
    GaveUp,
}

enum Machine {
    BoundedAlice(BoundedAlice),
    BoundedBob(BoundedBob),
    /// Iteration 0 abandoned; babbling until the phase ends.
    Padding { transcript: Transcript, verified: Transcript, rng: ChaCha8Rng },
    IterAlice(IterationAlice),
    IterBob(IterationBob),
    Done { transcript: Transcript, verified: Transcript },
    Empty,
}

pub struct SchemeParty {
    role: Role,
    params: Arc<SchemeParams>,
    proto: Arc<PaddedProtocol>,
    machine: Machine,
    outcome: PartyOutcome,
    iteration: u32,
    /// Set if the bounded phase was still mid-round at step 12L.
    cut_at_phase_end: bool,
    events: Vec<Event>,
}

impl SchemeParty {
    pub fn new(role: Role, params: Arc<SchemeParams>, proto: Arc<PaddedProtocol>, seed: u64) -> Self {
        let bounded = params.bounded.clone();
        let machine = match role {
            Role::Alice => Machine::BoundedAlice(BoundedAlice::new(bounded, proto.clone(), seed)),
            Role::Bob => Machine::BoundedBob(BoundedBob::new(bounded, proto.clone(), seed)),
        };
        SchemeParty {
            role,
            params,
            proto,
            machine,
            outcome: PartyOutcome::Running,
            iteration: 0,
            cut_at_phase_end: false,
            events: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn outcome(&self) -> &PartyOutcome {
        &self.outcome
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn cut_at_phase_end(&self) -> bool {
        self.cut_at_phase_end
    }

    pub fn in_padding(&self) -> bool {
        matches!(self.machine, Machine::Padding { .. })
    }

    /// (working, verified) transcripts.
    pub fn transcripts(&self) -> Option<(&Transcript, &Transcript)> {
        match &self.machine {
            Machine::BoundedAlice(m) => Some((m.transcript(), m.verified())),
            Machine::BoundedBob(m) => Some((m.transcript(), m.verified())),
            Machine::Padding { transcript, verified, .. } => Some((transcript, verified)),
            Machine::IterAlice(m) => Some((m.transcript(), m.verified())),
            Machine::IterBob(m) => Some((m.transcript(), m.verified())),
            Machine::Done { transcript, verified } => Some((transcript, verified)),
            Machine::Empty => None,
        }
    }

    /// (failures, round size) while the bounded-phase machine is running.
    pub fn bounded_state(&self) -> Option<(u32, usize)> {
        match &self.machine {
            Machine::BoundedAlice(m) => Some((m.failures(), m.round_size())),
            Machine::BoundedBob(m) => Some((m.failures(), m.round_size())),
            _ => None,
        }
    }

    /// Between rounds of whichever machine is running.
    pub fn at_round_boundary(&self) -> bool {
        match &self.machine {
            Machine::BoundedAlice(m) => m.at_boundary(),
            Machine::BoundedBob(m) => m.at_boundary(),
            Machine::IterAlice(m) => m.at_boundary(),
            Machine::IterBob(m) => m.at_boundary(),
            _ => false,
        }
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, Event> {
        self.events.drain(..)
    }

    fn collect_events(&mut self) {
        let events = &mut self.events;
        match &mut self.machine {
            Machine::BoundedAlice(m) => events.extend(m.drain_events()),
            Machine::BoundedBob(m) => events.extend(m.drain_events()),
            Machine::IterAlice(m) => events.extend(m.drain_events()),
            Machine::IterBob(m) => events.extend(m.drain_events()),
            _ => {}
        }
    }

    fn take_parts(&mut self) -> (Transcript, Transcript, ChaCha8Rng) {
        match std::mem::replace(&mut self.machine, Machine::Empty) {
            Machine::BoundedAlice(m) => m.into_transcripts(),
            Machine::BoundedBob(m) => m.into_transcripts(),
            Machine::Padding { transcript, verified, rng } => (transcript, verified, rng),
            Machine::IterAlice(m) => {
                let (verified, rng) = m.into_parts();
                (verified.clone(), verified, rng)
            }
            Machine::IterBob(m) => m.into_parts(),
            Machine::Done { .. } | Machine::Empty => unreachable!("no running machine"),
        }
    }

    fn enter_iteration(&mut self, j: u32) {
        if j > self.params.config.max_iterations {
            let (transcript, verified, _) = self.take_parts();
            self.machine = Machine::Done { transcript, verified };
            self.outcome = PartyOutcome::GaveUp;
            return;
        }
        let p = self.params.iteration(j);
        let (transcript, verified, rng) = self.take_parts();
        self.iteration = j;
        self.machine = match self.role {
            Role::Alice => Machine::IterAlice(IterationAlice::new(p, self.proto.clone(), verified, rng)),
            Role::Bob => {
                Machine::IterBob(IterationBob::new(p, self.proto.clone(), transcript, verified, rng))
            }
        };
    }

    fn finish(&mut self, output: Option<BitString>) {
        let (transcript, verified, _) = self.take_parts();
        self.machine = Machine::Done { transcript, verified };
        self.outcome = PartyOutcome::Output(output);
    }

    fn handle_status(&mut self, status: Status) {
        match status {
            Status::Running => {}
            Status::Output(out) => self.finish(out),
            Status::Exhausted => match self.machine {
                Machine::BoundedAlice(_) | Machine::BoundedBob(_) => {
                    let (transcript, verified, rng) = self.take_parts();
                    self.machine = Machine::Padding { transcript, verified, rng };
                }
                _ => self.enter_iteration(self.iteration + 1),
            },
        }
    }
}

impl Party for SchemeParty {
    fn intent(&mut self, step: u64) -> Option<StepIntent> {
        if self.outcome != PartyOutcome::Running {
            return None;
        }
        if self.iteration == 0 && step >= self.params.bounded_phase_end() {
            self.cut_at_phase_end = match &self.machine {
                Machine::BoundedAlice(m) => !m.at_boundary(),
                Machine::BoundedBob(m) => !m.at_boundary(),
                _ => false,
            };
            self.enter_iteration(1);
            if self.outcome != PartyOutcome::Running {
                return None;
            }
        }
        Some(match &mut self.machine {
            Machine::BoundedAlice(m) => m.intent(step),
            Machine::BoundedBob(m) => m.intent(step),
            Machine::Padding { rng, .. } => StepIntent::Send(rng.gen::<bool>() as u8),
            Machine::IterAlice(m) => m.intent(step),
            Machine::IterBob(m) => m.intent(step),
            Machine::Done { .. } | Machine::Empty => return None,
        })
    }

    fn deliver(&mut self, step: u64, received: Option<u8>) {
        let status = match &mut self.machine {
            Machine::BoundedAlice(m) => m.deliver(step, received).clone(),
            Machine::BoundedBob(m) => m.deliver(step, received).clone(),
            Machine::IterAlice(m) => m.deliver(step, received).clone(),
            Machine::IterBob(m) => m.deliver(step, received).clone(),
            _ => Status::Running,
        };
        self.collect_events();
        self.handle_status(status);
    }

    fn slot(&self) -> SlotInfo {
        match &self.machine {
            Machine::BoundedAlice(m) => m.slot(),
            Machine::BoundedBob(m) => m.slot(),
            Machine::Padding { .. } => SlotInfo { kind: SlotKind::Random, ..SlotInfo::default() },
            Machine::IterAlice(m) => m.slot(),
            Machine::IterBob(m) => m.slot(),
            Machine::Done { .. } | Machine::Empty => {
                SlotInfo { kind: SlotKind::Done, iteration: self.iteration, ..SlotInfo::default() }
            }
        }
    }

    fn finished(&self) -> bool {
        self.outcome != PartyOutcome::Running
    }
}

/// Seeds for one run, split so each party and the adversary draw from
/// independent streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub alice: u64,
    pub bob: u64,
    pub adversary: u64,
    pub padding: u64,
}

impl RunSeeds {
    pub fn from_master(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RunSeeds { alice: rng.gen(), bob: rng.gen(), adversary: rng.gen(), padding: rng.gen() }
    }
}

/// Parameter table rows for display.
pub fn describe(params: &SchemeParams, iterations: u32) -> Vec<(String, String)> {
    let b = &params.bounded;
    let mut rows = vec![
        ("L".to_string(), b.length.to_string()),
        ("target".into(), format!("{:e}", b.target)),
        ("F".into(), b.slot_bits.to_string()),
        ("R0".into(), b.initial_round.to_string()),
        ("max failures".into(), b.max_failures.to_string()),
        ("min round".into(), b.min_round().to_string()),
        ("padded length".into(), b.padded_length.to_string()),
        (
            "hash field".into(),
            format!("GF(2^{}) mod {:#x}", b.hash.field_bits(), b.hash.field().modulus()),
        ),
        ("hash collision bound".into(), format!("{:e}", b.hash.collision_bound())),
        (
            "fingerprint AMD".into(),
            format!(
                "k={} d={} width={} bound={:e}",
                b.fingerprint_code.field_bits(),
                b.fingerprint_code.blocks(),
                b.fingerprint_code.width(),
                b.fingerprint_code.detection_bound()
            ),
        ),
        (
            "sync AMD".into(),
            format!(
                "k={} d={} width={} bound={:e}",
                b.sync_code.field_bits(),
                b.sync_code.blocks(),
                b.sync_code.width(),
                b.sync_code.detection_bound()
            ),
        ),
        ("beta".into(), params.beta.to_string()),
        ("bounded phase end".into(), params.bounded_phase_end().to_string()),
    ];
    for j in 1..=iterations.min(params.config.max_iterations) {
        let p = params.iteration(j);
        let ecc = p.fingerprint_codec.ecc();
        rows.push((
            format!("iteration {j}"),
            format!(
                "F_j={} rho_j={} N_j={} bits/round={} hash k={} RS({},{}) over GF(2^{}) corrects {} symbols, false-silence bound {:e} vs target {:e}",
                p.slot_bits,
                p.repetitions,
                p.rounds,
                p.bits_per_round(),
                p.hash.field_bits(),
                ecc.rs().code_len(),
                ecc.rs().data_len(),
                ecc.symbol_bits(),
                ecc.capacity(),
                p.false_silence_bound(),
                p.target
            ),
        ));
    }
    rows
}
