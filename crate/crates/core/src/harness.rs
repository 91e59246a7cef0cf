//! Experiment runner.
//!
//! The harness sees everything the parties and the adversary cannot: both
//! transcripts, every event and the exact ledger. It uses that to tag bad
//! events (hash collisions, AMD failures, false silence), to check the
//! scheme's structural invariants step by step, and to classify rounds.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{alternate_protocol, AdversaryContext, AdversaryError, AdversarySpec, FlipAt};
use crate::bits::BitString;
use crate::bounded::ParamError;
use crate::channel::{replay, run_lockstep, Adversary, CostLedger, EngineConfig, Party, StepRecord, TraceError};
use crate::events::{Event, MessageKind, RoundSummary};
use crate::protocol::{PaddedProtocol, ProtocolKind, ProtocolSpec, Role, Transcript, Turn};
use crate::scheme::{PartyOutcome, RunSeeds, SchemeConfig, SchemeParams, SchemeParty};

/// Default step cap, in multiples of L.
pub const DEFAULT_STEP_FACTOR: u64 = 200;
/// Exhaustive enumerations larger than this are refused.
pub const MAX_ENUMERATION: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("enumeration of {0} runs exceeds the cap of {MAX_ENUMERATION}")]
    TooManyRuns(u64),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub scheme: SchemeConfig,
    pub protocol: ProtocolKind,
    pub protocol_seed: u64,
    pub adversary: AdversarySpec,
    pub public: bool,
    pub assert_lemmas: bool,
    /// Defaults to `DEFAULT_STEP_FACTOR * L`.
    pub max_steps: Option<u64>,
}

impl RunSpec {
    pub fn new(scheme: SchemeConfig, adversary: AdversarySpec) -> Self {
        RunSpec {
            scheme,
            protocol: ProtocolKind::Prf,
            protocol_seed: 1,
            adversary,
            public: false,
            assert_lemmas: false,
            max_steps: None,
        }
    }

    pub fn step_cap(&self) -> u64 {
        self.max_steps.unwrap_or(DEFAULT_STEP_FACTOR * self.scheme.length as u64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadEvents {
    pub hash_collision: bool,
    pub amd_failure: bool,
    pub false_silence: bool,
}

impl BadEvents {
    pub fn any(&self) -> bool {
        self.hash_collision || self.amd_failure || self.false_silence
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Both parties produced an output.
    Completed,
    /// A party ran out of iterations.
    GaveUp,
    /// The step cap was reached first.
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Wrong,
    Missing,
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub length: usize,
    pub slot_bits: usize,
    pub beta: usize,
    pub adversary: AdversarySpec,
    pub public: bool,
    /// Total charged corruptions, T.
    pub flips: u64,
    pub wire_flips: u64,
    pub silence_charges: u64,
    pub flips_iteration0: u64,
    pub rejected_actions: u64,
    pub steps_alice: u64,
    pub steps_bob: u64,
    pub success_alice: bool,
    pub success_bob: bool,
    pub output_alice: Verdict,
    pub output_bob: Verdict,
    pub iteration_alice: u32,
    pub iteration_bob: u32,
    pub bad_events: BadEvents,
    pub outcome: Outcome,
    /// L over the longer party's step count.
    pub rate: f64,
    /// Whether Bob's output is the transcript of the impersonated protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_output_alternate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_violations: Option<u64>,
}

impl RunMetrics {
    pub fn steps_max(&self) -> u64 {
        self.steps_alice.max(self.steps_bob)
    }

    pub fn success(&self) -> bool {
        self.success_alice && self.success_bob
    }

    /// A wrong output that none of the bad-event detectors explains.
    pub fn silent_failure(&self) -> bool {
        (self.output_alice == Verdict::Wrong || self.output_bob == Verdict::Wrong)
            && !self.bad_events.any()
    }

    /// Unsuccessful runs must carry a bad event or a non-completion marker.
    pub fn accounted(&self) -> bool {
        self.success() || self.bad_events.any() || self.outcome != Outcome::Completed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundClass {
    Progressive,
    Corrupted,
    Wasted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedRound {
    pub iteration: u32,
    pub start: u64,
    pub end: u64,
    /// Round size while the round ran.
    pub size: usize,
    pub flips: u64,
    pub class: RoundClass,
}

/// Alice's bounded-phase rounds of one size.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub phase: u32,
    pub round_size: usize,
    pub rounds: u64,
    pub progressive: u64,
    pub corrupted: u64,
    pub wasted: u64,
    /// Alice's minus Bob's failure count when the phase ended, if it ended
    /// while both were still in the bounded phase.
    pub delta: Option<i64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: u64,
    pub violations: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub checks: BTreeMap<String, Tally>,
    /// The first few violations, described.
    pub samples: Vec<String>,
}

impl LemmaReport {
    fn check(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        let t = self.checks.entry(name.to_string()).or_default();
        t.checked += 1;
        if !ok {
            t.violations += 1;
            if self.samples.len() < 16 {
                self.samples.push(format!("{name}: {}", detail()));
            }
        }
    }

    pub fn violations(&self) -> u64 {
        self.checks.values().map(|t| t.violations).sum()
    }

    pub fn merge(&mut self, other: &LemmaReport) {
        for (k, t) in &other.checks {
            let e = self.checks.entry(k.clone()).or_default();
            e.checked += t.checked;
            e.violations += t.violations;
        }
        for s in &other.samples {
            if self.samples.len() < 16 {
                self.samples.push(s.clone());
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub metrics: RunMetrics,
    pub ledger: CostLedger,
    pub rounds: Vec<ClassifiedRound>,
    pub phases: Vec<PhaseStats>,
    pub lemmas: Option<LemmaReport>,
    pub trace: Option<Vec<StepRecord>>,
    pub outputs: [Option<BitString>; 2],
}

/// Noise-free padded transcript, extended on demand.
struct Reference {
    proto: Arc<PaddedProtocol>,
    t: Transcript,
}

impl Reference {
    fn new(proto: Arc<PaddedProtocol>, n: usize) -> Self {
        let t = proto.reference(n);
        Reference { proto, t }
    }

    fn ensure(&mut self, n: usize) {
        while self.t.len() < n {
            let speaker = self.proto.direction(self.t.len());
            match self.proto.turn(speaker, &self.t) {
                Turn::Speak(b) => self.t.push(b),
                Turn::Listen => unreachable!("the scheduled speaker speaks"),
            }
        }
    }

    fn has_prefix(&mut self, t: &Transcript) -> bool {
        self.ensure(t.len());
        t.bits().is_prefix_of(self.t.bits())
    }
}

fn strict_prefix(a: &Transcript, b: &Transcript) -> (bool, bool) {
    (a.is_prefix_of(b), a.len() < b.len())
}

/// Watches a run step by step.
struct Monitor {
    params: Arc<SchemeParams>,
    reference: Reference,
    check: bool,
    lemmas: LemmaReport,
    /// Charged corruptions up to and including each step.
    cum_flips: Vec<u64>,
    bad: BadEvents,
    sent: HashMap<(Role, MessageKind, u64), BitString>,
    bob_hashes: HashMap<u64, (usize, u64)>,
    last_hash: Option<(usize, u64)>,
    /// Start of the fingerprint Alice most recently accepted and whether it
    /// was one Bob really sent.
    last_accept: Option<(u64, bool)>,
    alice_rounds: Vec<(RoundSummary, usize)>,
    finished_at: [Option<u64>; 2],
    prev_bounded: [Option<(u32, usize)>; 2],
    prev_iteration: [u32; 2],
    phase_wasted: BTreeMap<u32, u64>,
    deltas: BTreeMap<u32, i64>,
    trace: Option<Vec<StepRecord>>,
}

impl Monitor {
    fn new(params: Arc<SchemeParams>, proto: Arc<PaddedProtocol>, check: bool, trace: bool) -> Self {
        let n = params.bounded.max_transcript_bits();
        let initial = Some((0, params.bounded.initial_round));
        Monitor {
            reference: Reference::new(proto, n),
            params,
            check,
            lemmas: LemmaReport::default(),
            cum_flips: Vec::new(),
            bad: BadEvents::default(),
            sent: HashMap::new(),
            bob_hashes: HashMap::new(),
            last_hash: None,
            last_accept: None,
            alice_rounds: Vec::new(),
            finished_at: [None, None],
            prev_bounded: [initial, initial],
            prev_iteration: [0, 0],
            phase_wasted: BTreeMap::new(),
            deltas: BTreeMap::new(),
            trace: trace.then(Vec::new),
        }
    }

    fn flips_between(&self, start: u64, end: u64) -> u64 {
        let at = |s: u64| self.cum_flips.get(s as usize).copied().unwrap_or(0);
        at(end) - if start == 0 { 0 } else { at(start - 1) }
    }

    fn total_flips(&self) -> u64 {
        self.cum_flips.last().copied().unwrap_or(0)
    }

    fn phase_of(&self, size: usize) -> u32 {
        (self.params.bounded.initial_round / size).trailing_zeros()
    }

    fn observe(&mut self, rec: &StepRecord, alice: &mut SchemeParty, bob: &mut SchemeParty) {
        let prior = self.total_flips();
        self.cum_flips.push(prior + rec.outcome.charged as u64);
        if let Some(t) = &mut self.trace {
            t.push(*rec);
        }
        let present = [rec.intents[0].is_some(), rec.intents[1].is_some()];
        let alice_events: Vec<Event> = alice.drain_events().collect();
        let bob_events: Vec<Event> = bob.drain_events().collect();
        let mut alice_round_end = None;
        let mut bob_round_end = None;
        for e in alice_events.iter().chain(&bob_events) {
            self.on_event(e, alice, &mut alice_round_end, &mut bob_round_end);
        }
        for (i, party) in [&*alice, &*bob].into_iter().enumerate() {
            if self.finished_at[i].is_none() && party.finished() {
                self.finished_at[i] = Some(rec.step);
            }
        }
        if self.check {
            self.step_checks(rec.step, present, alice, bob, alice_round_end, bob_round_end);
        }
        self.prev_bounded = [alice.bounded_state(), bob.bounded_state()];
        self.prev_iteration = [alice.iteration(), bob.iteration()];
    }

    fn on_event(
        &mut self,
        e: &Event,
        alice: &SchemeParty,
        alice_round_end: &mut Option<RoundSummary>,
        bob_round_end: &mut Option<RoundSummary>,
    ) {
        match e {
            Event::Sent { role, kind, start, payload } => {
                self.sent.insert((*role, *kind, *start), payload.clone());
                if *role == Role::Bob && *kind == MessageKind::Fingerprint {
                    if let Some(h) = self.last_hash.take() {
                        self.bob_hashes.insert(*start, h);
                    }
                }
            }
            Event::Accepted { role, kind, start, payload } => {
                let genuine = self.sent.get(&(role.other(), *kind, *start)) == Some(payload);
                if !genuine {
                    self.bad.amd_failure = true;
                }
                if *role == Role::Alice {
                    self.last_accept = Some((*start, genuine));
                }
            }
            Event::Hashed { len, digest } => self.last_hash = Some((*len, *digest)),
            Event::Matched { len, digest } => {
                if let Some((start, true)) = self.last_accept {
                    if self.bob_hashes.get(&start) != Some(&(*len, *digest)) {
                        self.bad.hash_collision = true;
                    }
                }
            }
            Event::RoundEnd(r) => match r.role {
                Role::Alice => {
                    let size = match self.prev_bounded[0] {
                        Some((_, s)) if r.iteration == 0 => s,
                        _ => r.round_size,
                    };
                    self.alice_rounds.push((r.clone(), size));
                    *alice_round_end = Some(r.clone());
                }
                Role::Bob => *bob_round_end = Some(r.clone()),
            },
            Event::Terminated { role: Role::Bob, silence: true, .. } => {
                if !alice.finished() {
                    self.bad.false_silence = true;
                }
            }
            Event::Terminated { .. } => {}
        }
    }

    fn step_checks(
        &mut self,
        step: u64,
        present: [bool; 2],
        alice: &SchemeParty,
        bob: &SchemeParty,
        alice_round_end: Option<RoundSummary>,
        bob_round_end: Option<RoundSummary>,
    ) {
        let a = alice.bounded_state();
        let b = bob.bounded_state();
        for (who, s) in [("alice", a), ("bob", b)] {
            if let Some((_, r)) = s {
                self.lemmas.check("round_power_of_two", r.is_power_of_two(), || {
                    format!("step {step}: {who} round size {r}")
                });
            }
        }
        if let (Some((ma, _)), Some((pma, _))) = (a, self.prev_bounded[0]) {
            self.lemmas.check("alice_failures_monotone", ma >= pma, || {
                format!("step {step}: {pma} -> {ma}")
            });
        }
        if let (Some((ma, ra)), Some((mb, rb))) = (a, b) {
            self.lemmas.check("bob_failures_at_most_alice", mb <= ma, || {
                format!("step {step}: mb {mb} > ma {ma}")
            });
            self.lemmas.check("bob_round_equal_or_double", rb == ra || rb == 2 * ra, || {
                format!("step {step}: ra {ra} rb {rb}")
            });
        }

        if let Some(r) = &alice_round_end {
            self.alice_round_checks(step, r, alice, bob, present[1]);
        }

        // Rounds of later iterations start and end together.
        if present[0] && present[1] {
            let key = |r: &Option<RoundSummary>| {
                r.as_ref().filter(|r| r.iteration > 0).map(|r| (r.iteration, r.start, r.end))
            };
            let (ka, kb) = (key(&alice_round_end), key(&bob_round_end));
            let bob_left = bob.finished() && !matches!(bob.outcome(), PartyOutcome::GaveUp);
            if (ka.is_some() || kb.is_some()) && !(kb.is_none() && bob_left) {
                self.lemmas.check("iteration_rounds_aligned", ka == kb, || {
                    format!("step {step}: alice {ka:?} bob {kb:?}")
                });
            }
        }

        // Bob leaves no earlier than Alice, and only once he holds L bits.
        if self.finished_at[1] == Some(step) && matches!(bob.outcome(), PartyOutcome::Output(_)) {
            let ok = self.finished_at[0].is_some_and(|s| s <= step);
            self.lemmas.check("bob_leaves_after_alice", ok, || format!("bob left at {step}"));
        }
        if self.finished_at[0] == Some(step)
            && matches!(alice.outcome(), PartyOutcome::Output(_))
            && present[1]
        {
            let have = bob.transcripts().map_or(0, |(_, v)| v.len());
            let need = self.params.length();
            self.lemmas.check("bob_verified_when_alice_leaves", have >= need, || {
                format!("step {step}: bob verified {have} < {need}")
            });
        }

        // Alice moved past a completed iteration.
        let (pj, j) = (self.prev_iteration[0], alice.iteration());
        if j > pj && pj >= 1 {
            self.completed_iteration_checks(pj);
        }
        if j > pj && pj == 0 {
            let f0 = self.total_flips();
            let l = self.params.length() as f64;
            let f = self.params.bounded.slot_bits as f64;
            let limit = (l / (8.0 * f) - 1.0).floor();
            if (f0 as f64) <= limit {
                self.lemmas.check("bounded_phase_suffices", false, || {
                    format!("reached iteration 1 with {f0} flips <= {limit}")
                });
            } else {
                self.lemmas.check("bounded_phase_suffices", true, String::new);
            }
        }
    }

    fn alice_round_checks(
        &mut self,
        step: u64,
        r: &RoundSummary,
        alice: &SchemeParty,
        bob: &SchemeParty,
        bob_present: bool,
    ) {
        let Some((ta, tsa)) = alice.transcripts() else { return };
        let ok = self.reference.has_prefix(tsa);
        self.lemmas.check("verified_prefix_of_reference", ok, || {
            format!("step {step}: alice verified length {}", tsa.len())
        });
        // A terminating Alice outputs without reconciling her working copy.
        if bob_present && !alice.finished() {
            if let Some((tb, tsb)) = bob.transcripts() {
                let (p1, s1) = strict_prefix(tsb, tsa);
                let p2 = tsa == ta;
                let (p3, s3) = strict_prefix(ta, tb);
                let ok = p1 && p2 && p3 && !(s1 && s3);
                self.lemmas.check("prefix_chain", ok, || {
                    format!(
                        "step {step}: |Tsb|={} |Tsa|={} |Ta|={} |Tb|={} ({p1},{p2},{p3})",
                        tsb.len(),
                        tsa.len(),
                        ta.len(),
                        tb.len()
                    )
                });
            }
        }
        if r.iteration != 0 {
            return;
        }
        let (round, size) = self.alice_rounds.last().cloned().expect("just pushed");
        let phase = self.phase_of(size);
        let flips = self.flips_between(round.start, round.end);
        let wasted = self.phase_wasted.entry(phase).or_default();
        if !round.progressed && flips == 0 {
            *wasted += 1;
        }
        let wasted = *wasted;
        let cap = if phase == 0 { 0 } else { 1u64 << (phase - 1) };
        self.lemmas.check("phase_wasted_rounds", wasted <= cap, || {
            format!("phase {phase}: {wasted} wasted > {cap}")
        });
        let t = self.total_flips() as f64;
        let ma = round.failures as f64;
        self.lemmas.check("failures_within_flips", ma <= t + t.sqrt(), || {
            format!("step {step}: ma {ma} > T + sqrt T with T = {t}")
        });
        // Phase ended: the round size just halved.
        if let (Some((ma, ra)), Some((mb, _))) = (alice.bounded_state(), bob.bounded_state()) {
            if ra < size {
                let delta = ma as i64 - mb as i64;
                self.deltas.insert(phase, delta);
                self.lemmas.check("phase_delta", delta <= 1i64 << phase, || {
                    format!("phase {phase}: delta {delta}")
                });
            }
        }
    }

    fn completed_iteration_checks(&mut self, j: u32) {
        let p = self.params.iteration(j);
        let clean = self
            .alice_rounds
            .iter()
            .filter(|(r, _)| r.iteration == j)
            .filter(|(r, _)| self.flips_between(r.start, r.end) == 0)
            .count() as u64;
        let cap = p.rounds / 4;
        self.lemmas.check("uncorrupted_rounds_budget", clean <= cap, || {
            format!("iteration {j}: {clean} uncorrupted rounds > N_j/4 = {cap}")
        });
    }

    fn classify(&self) -> (Vec<ClassifiedRound>, Vec<PhaseStats>) {
        let rounds: Vec<ClassifiedRound> = self
            .alice_rounds
            .iter()
            .map(|(r, size)| {
                let flips = self.flips_between(r.start, r.end);
                let class = if r.progressed {
                    RoundClass::Progressive
                } else if flips > 0 {
                    RoundClass::Corrupted
                } else {
                    RoundClass::Wasted
                };
                ClassifiedRound { iteration: r.iteration, start: r.start, end: r.end, size: *size, flips, class }
            })
            .collect();
        let mut phases: BTreeMap<u32, PhaseStats> = BTreeMap::new();
        for r in rounds.iter().filter(|r| r.iteration == 0) {
            let phase = self.phase_of(r.size);
            let s = phases.entry(phase).or_insert_with(|| PhaseStats {
                phase,
                round_size: r.size,
                ..PhaseStats::default()
            });
            s.rounds += 1;
            match r.class {
                RoundClass::Progressive => s.progressive += 1,
                RoundClass::Corrupted => s.corrupted += 1,
                RoundClass::Wasted => s.wasted += 1,
            }
        }
        for (phase, delta) in &self.deltas {
            if let Some(s) = phases.get_mut(phase) {
                s.delta = Some(*delta);
            }
        }
        (rounds, phases.into_values().collect())
    }
}

/// Everything fixed across the runs of one experiment.
pub struct Runner {
    pub spec: RunSpec,
    pub params: Arc<SchemeParams>,
    pub protocol: ProtocolSpec,
    reference: BitString,
}

impl Runner {
    pub fn new(spec: RunSpec) -> Result<Self, HarnessError> {
        let params = SchemeParams::new(spec.scheme.clone())?;
        let protocol = ProtocolSpec::new(spec.protocol, spec.scheme.length, spec.protocol_seed);
        let reference = protocol.reference();
        Ok(Runner { spec, params, protocol, reference })
    }

    pub fn reference(&self) -> &BitString {
        &self.reference
    }

    fn context(&self) -> AdversaryContext {
        AdversaryContext {
            params: self.params.clone(),
            protocol: self.protocol.clone(),
            public: self.spec.public,
        }
    }

    /// One run with the configured adversary.
    pub fn run(&self, seed: u64, trace: bool) -> Result<RunReport, HarnessError> {
        let seeds = RunSeeds::from_master(seed);
        let mut adversary = self.spec.adversary.build(&self.context(), seeds.adversary)?;
        let alternate = match self.spec.adversary {
            AdversarySpec::Mitm { .. } => {
                Some(alternate_protocol(&self.protocol, seeds.adversary).reference())
            }
            _ => None,
        };
        Ok(self.run_with(seed, adversary.as_mut(), trace, alternate.as_ref()))
    }

    /// One run with an explicit adversary.
    pub fn run_with(
        &self,
        seed: u64,
        adversary: &mut dyn Adversary,
        trace: bool,
        alternate: Option<&BitString>,
    ) -> RunReport {
        let seeds = RunSeeds::from_master(seed);
        let proto = Arc::new(PaddedProtocol::new(self.protocol.clone(), seeds.padding));
        let mut alice = SchemeParty::new(Role::Alice, self.params.clone(), proto.clone(), seeds.alice);
        let mut bob = SchemeParty::new(Role::Bob, self.params.clone(), proto.clone(), seeds.bob);
        let mut monitor = Monitor::new(self.params.clone(), proto, self.spec.assert_lemmas, trace);
        let config = EngineConfig { max_steps: self.spec.step_cap(), public: self.spec.public };
        let result = run_lockstep(&mut alice, &mut bob, adversary, config, |rec, a, b| {
            monitor.observe(rec, a, b)
        });

        let verdict = |p: &SchemeParty| match p.outcome() {
            PartyOutcome::Output(Some(out)) if *out == self.reference => Verdict::Correct,
            PartyOutcome::Output(_) => Verdict::Wrong,
            PartyOutcome::Running | PartyOutcome::GaveUp => Verdict::Missing,
        };
        let output = |p: &SchemeParty| match p.outcome() {
            PartyOutcome::Output(o) => o.clone(),
            _ => None,
        };
        let outcome = if result.timed_out {
            Outcome::Timeout
        } else if [alice.outcome(), bob.outcome()].iter().any(|o| **o == PartyOutcome::GaveUp) {
            Outcome::GaveUp
        } else {
            Outcome::Completed
        };
        let (output_alice, output_bob) = (verdict(&alice), verdict(&bob));
        let ledger = result.ledger;
        let steps_max = result.party_steps[0].max(result.party_steps[1]).max(1);
        let (rounds, phases) = monitor.classify();
        let lemmas = self.spec.assert_lemmas.then(|| monitor.lemmas.clone());
        let metrics = RunMetrics {
            seed,
            length: self.params.length(),
            slot_bits: self.params.bounded.slot_bits,
            beta: self.params.beta,
            adversary: self.spec.adversary.clone(),
            public: self.spec.public,
            flips: ledger.flips,
            wire_flips: ledger.wire_flips,
            silence_charges: ledger.silence_charges,
            flips_iteration0: ledger.flips_by_iteration.get(&0).copied().unwrap_or(0),
            rejected_actions: ledger.rejected_actions,
            steps_alice: result.party_steps[0],
            steps_bob: result.party_steps[1],
            success_alice: output_alice == Verdict::Correct,
            success_bob: output_bob == Verdict::Correct,
            output_alice,
            output_bob,
            iteration_alice: alice.iteration(),
            iteration_bob: bob.iteration(),
            bad_events: monitor.bad,
            outcome,
            rate: self.params.length() as f64 / steps_max as f64,
            bob_output_alternate: alternate.map(|alt| output(&bob).as_ref() == Some(alt)),
            lemma_violations: lemmas.as_ref().map(LemmaReport::violations),
        };
        RunReport {
            metrics,
            ledger,
            rounds,
            phases,
            lemmas,
            trace: monitor.trace,
            outputs: [output(&alice), output(&bob)],
        }
    }
}

/// Runs one seed per element of `seeds`, handing each report to `sink`.
/// Exhaustive enumeration goes through [`exhaustive_oracle`] instead.
pub fn run_experiment<I, F>(spec: &RunSpec, seeds: I, mut sink: F) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = u64>,
    F: FnMut(RunReport),
{
    let runner = Runner::new(spec.clone())?;
    for seed in seeds {
        sink(runner.run(seed, false)?);
    }
    Ok(())
}

/// Aggregate of a batch of runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: u64,
    pub successes: u64,
    pub completed: u64,
    pub timeouts: u64,
    pub gave_up: u64,
    pub silent_failures: u64,
    pub bad_event_runs: u64,
    pub mean_flips: f64,
    pub mean_steps_max: f64,
    pub max_steps_max: u64,
    pub mean_rate: f64,
}

impl Summary {
    pub fn add(&mut self, m: &RunMetrics) {
        let n = self.runs as f64;
        self.runs += 1;
        self.successes += m.success() as u64;
        self.completed += (m.outcome == Outcome::Completed) as u64;
        self.timeouts += (m.outcome == Outcome::Timeout) as u64;
        self.gave_up += (m.outcome == Outcome::GaveUp) as u64;
        self.silent_failures += m.silent_failure() as u64;
        self.bad_event_runs += m.bad_events.any() as u64;
        let avg = |old: f64, x: f64| (old * n + x) / (n + 1.0);
        self.mean_flips = avg(self.mean_flips, m.flips as f64);
        self.mean_steps_max = avg(self.mean_steps_max, m.steps_max() as f64);
        self.mean_rate = avg(self.mean_rate, m.rate);
        self.max_steps_max = self.max_steps_max.max(m.steps_max());
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub runs: u64,
    pub correct: u64,
    /// Wrong or missing outputs explained by a bad event.
    pub flagged: u64,
    pub timeouts: u64,
    pub gave_up: u64,
    pub silent_failures: u64,
    /// Metrics of every run that did not end with two correct outputs.
    pub failures: Vec<RunMetrics>,
}

/// Number of subsets of `window` steps with at most `k` elements.
pub fn pattern_count(window: u64, k: usize) -> u64 {
    let mut total = 0u64;
    let mut c = 1u64;
    for i in 0..=k as u64 {
        if i > window {
            break;
        }
        total = total.saturating_add(c);
        c = c.saturating_mul(window - i) / (i + 1);
    }
    total
}

fn for_each_pattern<F: FnMut(&[u64])>(window: u64, k: usize, f: &mut F) {
    fn rec<F: FnMut(&[u64])>(from: u64, window: u64, left: usize, cur: &mut Vec<u64>, f: &mut F) {
        f(cur);
        if left == 0 {
            return;
        }
        for s in from..window {
            cur.push(s);
            rec(s + 1, window, left - 1, cur, f);
            cur.pop();
        }
    }
    rec(0, window, k, &mut Vec::with_capacity(k), f);
}

/// Runs every flip pattern with at most `max_flips` flips inside the first
/// `window` steps under one seed.
pub fn exhaustive_oracle(
    spec: &RunSpec,
    window: u64,
    max_flips: usize,
    seed: u64,
) -> Result<OracleReport, HarnessError> {
    let count = pattern_count(window, max_flips);
    if count > MAX_ENUMERATION {
        return Err(HarnessError::TooManyRuns(count));
    }
    let runner = Runner::new(spec.clone())?;
    let mut report = OracleReport::default();
    for_each_pattern(window, max_flips, &mut |pattern: &[u64]| {
        let mut adv = FlipAt::new(pattern.iter().copied());
        let mut m = runner.run_with(seed, &mut adv, false, None).metrics;
        m.adversary = AdversarySpec::Exhaustive { window, max_flips };
        report.runs += 1;
        if m.success() {
            report.correct += 1;
            return;
        }
        report.flagged += m.bad_events.any() as u64;
        report.timeouts += (m.outcome == Outcome::Timeout) as u64;
        report.gave_up += (m.outcome == Outcome::GaveUp) as u64;
        report.silent_failures += m.silent_failure() as u64;
        report.failures.push(m);
    });
    Ok(report)
}

/// Smallest k with `(L' - L) <= k (sqrt(L (T + 1) log2 L) + T)` at every
/// point, each point given as (T, L').
pub fn overhead_constant(length: usize, points: &[(f64, f64)]) -> f64 {
    let l = length as f64;
    points
        .iter()
        .map(|&(t, steps)| (steps - l).max(0.0) / ((l * (t + 1.0) * l.log2()).sqrt() + t))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub spec: RunSpec,
    pub seed: u64,
    pub ledger: CostLedger,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLine {
    Header(Box<TraceHeader>),
    Step(StepRecord),
}

/// Writes a header line and one line per step.
pub fn write_trace<W: Write>(out: &mut W, spec: &RunSpec, report: &RunReport) -> Result<(), HarnessError> {
    let header = TraceHeader {
        spec: spec.clone(),
        seed: report.metrics.seed,
        ledger: report.ledger.clone(),
        metrics: report.metrics.clone(),
    };
    let line = |x: &TraceLine| serde_json::to_string(x).map_err(|e| HarnessError::TraceFormat(e.to_string()));
    writeln!(out, "{}", line(&TraceLine::Header(Box::new(header)))?)?;
    for rec in report.trace.iter().flatten() {
        writeln!(out, "{}", line(&TraceLine::Step(*rec))?)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(TraceHeader, Vec<StepRecord>), HarnessError> {
    let mut header = None;
    let mut steps = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::TraceFormat(format!("line {}: {e}", i + 1)))?;
        match parsed {
            TraceLine::Header(h) if header.is_none() => header = Some(*h),
            TraceLine::Header(_) => return Err(HarnessError::TraceFormat("second header".into())),
            TraceLine::Step(s) => steps.push(s),
        }
    }
    let header = header.ok_or_else(|| HarnessError::TraceFormat("missing header".into()))?;
    Ok((header, steps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: u64,
    pub ledger_matches: bool,
    pub rerun_matches: bool,
    pub ledger: CostLedger,
}

/// Re-resolves every recorded step and checks the header's ledger, then
/// re-runs the recorded seed and checks metrics and steps are identical.
pub fn replay_trace(header: &TraceHeader, steps: &[StepRecord]) -> Result<ReplayReport, HarnessError> {
    let ledger = replay(steps)?;
    let runner = Runner::new(header.spec.clone())?;
    let rerun = runner.run(header.seed, true)?;
    let rerun_matches =
        rerun.metrics == header.metrics && rerun.trace.as_deref() == Some(steps);
    Ok(ReplayReport {
        steps: steps.len() as u64,
        ledger_matches: ledger == header.ledger,
        rerun_matches,
        ledger,
    })
}
