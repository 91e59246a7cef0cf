use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use intercode::adversary::AdversarySpec;
use intercode::bitcodec::{AmdCode, RobustCodec};
use intercode::harness::{
    exhaustive_oracle, read_trace, replay_trace, write_trace, LemmaReport, RunSpec, Runner, Summary,
};
use intercode::protocol::ProtocolKind;
use intercode::scheme::{describe, SchemeConfig, SchemeParams};
use intercode::BitString;

#[derive(Parser)]
#[command(name = "intercode", version, about = "Interactive coding over adversarial binary channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Standard,
    Tiny,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Protocol length L; overrides the preset's.
    #[arg(long = "L")]
    length: Option<usize>,
    /// Minimum bounded-phase slot width F.
    #[arg(long = "F", default_value_t = 0)]
    slot: usize,
    /// Fingerprint growth per iteration; defaults to the smallest valid one.
    #[arg(long)]
    beta: Option<usize>,
    /// Per-use failure target; defaults to 1/L^2 (2^-8 for the tiny preset).
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, default_value_t = 20)]
    max_iterations: u32,
    #[arg(long, value_enum, default_value = "standard")]
    preset: Preset,
}

impl SchemeArgs {
    fn config(&self) -> Result<SchemeConfig> {
        let mut c = match self.preset {
            Preset::Standard => {
                SchemeConfig::standard(self.length.context("--L is required without --preset tiny")?)
            }
            Preset::Tiny => SchemeConfig::tiny(),
        };
        if let Some(l) = self.length {
            c.length = l;
        }
        if self.target.is_some() {
            c.target = self.target;
        }
        c.min_slot = self.slot;
        c.beta = self.beta;
        c.max_iterations = self.max_iterations;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded experiments and print one JSON metrics line per run.
    Run {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value = "prf")]
        protocol: ProtocolKind,
        #[arg(long, default_value_t = 1)]
        protocol_seed: u64,
        #[arg(long, default_value = "none")]
        adversary: AdversarySpec,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// First seed; runs use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        public_channel: bool,
        #[arg(long)]
        assert_lemmas: bool,
        /// Write the first run's step trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Re-verify a recorded trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Print the derived parameter table.
    Params {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 4)]
        iterations: u32,
    },
    /// Every flip pattern in a window, checked for silent wrong outputs.
    Oracle {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 256)]
        window: u64,
        #[arg(long, default_value_t = 2)]
        max_flips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "prf")]
        protocol: ProtocolKind,
    },
    /// Encode, decode or corrupt hex bit strings ("nbits:hex") line by line.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
}

#[derive(Args, Clone, Copy)]
struct CodecShape {
    /// AMD field degree k.
    #[arg(long, default_value_t = 16)]
    field_bits: u32,
    #[arg(long, default_value_t = 32)]
    payload_bits: usize,
    /// Wrap the AMD word in a Reed-Solomon code filling this many bits.
    #[arg(long)]
    slot: Option<usize>,
}

enum Codec {
    Amd(AmdCode),
    Robust(RobustCodec),
}

impl CodecShape {
    fn build(&self) -> Result<Codec> {
        let amd = AmdCode::new(self.field_bits, self.payload_bits)?;
        Ok(match self.slot {
            Some(slot) => Codec::Robust(RobustCodec::new(amd, slot)?),
            None => Codec::Amd(amd),
        })
    }
}

#[derive(Subcommand)]
enum CodecOp {
    Encode {
        #[command(flatten)]
        shape: CodecShape,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Prints the payload, or "reject".
    Decode {
        #[command(flatten)]
        shape: CodecShape,
    },
    /// Flips `flips` distinct random positions of each input.
    Corrupt {
        #[arg(long, default_value_t = 1)]
        flips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scheme,
            protocol,
            protocol_seed,
            adversary,
            runs,
            seed,
            public_channel,
            assert_lemmas,
            trace,
            max_steps,
        } => {
            if matches!(adversary, AdversarySpec::Mitm { .. }) && !public_channel {
                bail!("--adversary mitm requires --public-channel");
            }
            let spec = RunSpec {
                scheme: scheme.config()?,
                protocol,
                protocol_seed,
                adversary,
                public: public_channel,
                assert_lemmas,
                max_steps,
            };
            run(spec, runs, seed, trace)
        }
        Command::Replay { trace } => {
            let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let (header, steps) = read_trace(BufReader::new(file))?;
            let report = replay_trace(&header, &steps)?;
            println!("{}", serde_json::to_string(&report)?);
            if !(report.ledger_matches && report.rerun_matches) {
                bail!("trace does not replay");
            }
            Ok(())
        }
        Command::Params { scheme, iterations } => {
            let params = SchemeParams::new(scheme.config()?)?;
            for (k, v) in describe(&params, iterations) {
                println!("{k:<22} {v}");
            }
            Ok(())
        }
        Command::Oracle { scheme, window, max_flips, seed, protocol } => {
            let mut spec = RunSpec::new(scheme.config()?, AdversarySpec::Exhaustive { window, max_flips });
            spec.protocol = protocol;
            let report = exhaustive_oracle(&spec, window, max_flips, seed)?;
            println!(
                "{}",
                serde_json::json!({
                    "runs": report.runs,
                    "correct": report.correct,
                    "flagged": report.flagged,
                    "timeouts": report.timeouts,
                    "gave_up": report.gave_up,
                    "silent_failures": report.silent_failures,
                })
            );
            if report.silent_failures > 0 {
                bail!("{} silent wrong outputs", report.silent_failures);
            }
            Ok(())
        }
        Command::Codec { op } => codec(op),
    }
}

fn run(spec: RunSpec, runs: u64, seed: u64, trace: Option<PathBuf>) -> Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    if let AdversarySpec::Exhaustive { window, max_flips } = spec.adversary {
        let report = exhaustive_oracle(&spec, window, max_flips, seed)?;
        for m in &report.failures {
            writeln!(out, "{}", serde_json::to_string(m)?)?;
        }
        eprintln!(
            "runs {} correct {} flagged {} silent failures {}",
            report.runs, report.correct, report.flagged, report.silent_failures
        );
        return Ok(());
    }
    let runner = Runner::new(spec.clone())?;
    let mut summary = Summary::default();
    let mut lemmas = LemmaReport::default();
    for (i, s) in (seed..seed + runs).enumerate() {
        let want_trace = i == 0 && trace.is_some();
        let report = runner.run(s, want_trace)?;
        writeln!(out, "{}", serde_json::to_string(&report.metrics)?)?;
        if let (true, Some(path)) = (want_trace, &trace) {
            let mut f = BufWriter::new(File::create(path)?);
            write_trace(&mut f, &spec, &report)?;
            f.flush()?;
        }
        if let Some(l) = &report.lemmas {
            lemmas.merge(l);
        }
        summary.add(&report.metrics);
    }
    out.flush()?;
    eprintln!("{:<16} {}", "runs", summary.runs);
    eprintln!("{:<16} {}", "successes", summary.successes);
    eprintln!("{:<16} {}", "timeouts", summary.timeouts);
    eprintln!("{:<16} {}", "gave up", summary.gave_up);
    eprintln!("{:<16} {}", "silent failures", summary.silent_failures);
    eprintln!("{:<16} {}", "bad-event runs", summary.bad_event_runs);
    eprintln!("{:<16} {:.1}", "mean T", summary.mean_flips);
    eprintln!("{:<16} {:.1}", "mean L'", summary.mean_steps_max);
    eprintln!("{:<16} {}", "max L'", summary.max_steps_max);
    eprintln!("{:<16} {:.4}", "mean rate", summary.mean_rate);
    if spec.assert_lemmas {
        for (name, t) in &lemmas.checks {
            eprintln!("{name:<32} checked {:>8} violations {}", t.checked, t.violations);
        }
        for s in &lemmas.samples {
            eprintln!("  {s}");
        }
        if lemmas.violations() > 0 {
            bail!("{} lemma violations", lemmas.violations());
        }
    }
    Ok(())
}

fn read_lines() -> Result<Vec<BitString>> {
    io::stdin()
        .lock()
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(BitString::from_hex(&l?)?))
        .collect()
}

fn codec(op: CodecOp) -> Result<()> {
    let mut out = io::stdout().lock();
    match op {
        CodecOp::Encode { shape, seed } => {
            let codec = shape.build()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for payload in read_lines()? {
                let word = match &codec {
                    Codec::Amd(c) => c.encode(&payload, &mut rng)?,
                    Codec::Robust(c) => c.encode(&payload, &mut rng)?,
                };
                writeln!(out, "{}", word.to_hex())?;
            }
        }
        CodecOp::Decode { shape } => {
            let codec = shape.build()?;
            for word in read_lines()? {
                let decoded = match &codec {
                    Codec::Amd(c) => c.decode(&word),
                    Codec::Robust(c) => c.decode(&word),
                };
                match decoded {
                    Ok(p) => writeln!(out, "{}", p.to_hex())?,
                    Err(_) => writeln!(out, "reject")?,
                }
            }
        }
        CodecOp::Corrupt { flips, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for mut word in read_lines()? {
                if flips > word.len() {
                    bail!("cannot flip {flips} of {} bits", word.len());
                }
                for i in rand::seq::index::sample(&mut rng, word.len(), flips) {
                    word.flip(i);
                }
                writeln!(out, "{}", word.to_hex())?;
            }
        }
    }
    Ok(())
}
