//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any enforced criterion fails.

use std::time::Instant;

use intercode::bitcodec::{AmdCode, FingerprintHash, ReedSolomon, SymbolField};
use intercode::harness::{
    exhaustive_oracle, overhead_constant, LemmaReport, Outcome, RunReport, RunSpec, Runner,
};
use intercode::scheme::{SchemeConfig, SchemeParams};
use intercode::BitString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdicts {
    enforced_failures: Vec<u32>,
}

impl Verdicts {
    fn report(&mut self, n: u32, pass: bool, enforced: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {tag} {detail}");
        if !pass && enforced {
            self.enforced_failures.push(n);
        }
    }
}

fn spec(scheme: SchemeConfig, adversary: &str) -> RunSpec {
    let mut s = RunSpec::new(scheme, adversary.parse().unwrap());
    s.assert_lemmas = true;
    s
}

fn runs(spec: &RunSpec, seeds: std::ops::Range<u64>, lemmas: &mut LemmaReport) -> Vec<RunReport> {
    let runner = Runner::new(spec.clone()).unwrap();
    seeds
        .map(|seed| {
            let r = runner.run(seed, false).unwrap();
            lemmas.merge(r.lemmas.as_ref().unwrap());
            r
        })
        .collect()
}

fn noise_free(v: &mut Verdicts, lemmas: &mut LemmaReport) {
    let mut detail = Vec::new();
    let mut pass = true;
    for l in [1024usize, 4096] {
        let reports = runs(&spec(SchemeConfig::standard(l), "none"), 0..100, lemmas);
        let ok = reports
            .iter()
            .filter(|r| r.metrics.success() && r.metrics.steps_max() <= 12 * l as u64)
            .count();
        let worst = reports.iter().map(|r| r.metrics.steps_max()).max().unwrap();
        pass &= ok == 100;
        detail.push(format!("L={l}: {ok}/100 correct within 12L (max steps {worst}, 12L={})", 12 * l));
    }
    v.report(1, pass, true, detail.join("; "));
}

fn bounded_noise(v: &mut Verdicts, lemmas: &mut LemmaReport) {
    let l = 4096usize;
    let params = SchemeParams::new(SchemeConfig::standard(l)).unwrap();
    let f = params.bounded.slot_bits;
    let budget = (l as f64 / (8.0 * f as f64) - 1.0).floor() as u64;
    let mut pass = true;
    let mut detail = vec![format!("F={f}, budget {budget}")];
    for adv in [format!("sync:{budget}"), format!("iid:0.001,{budget}")] {
        let reports = runs(&spec(SchemeConfig::standard(l), &adv), 0..100, lemmas);
        let mut ok = 0;
        let mut worst_margin = f64::INFINITY;
        for r in &reports {
            let m = &r.metrics;
            let limit = l as f64 + 30.0 * ((l * f) as f64 * (m.flips + 1) as f64).sqrt();
            worst_margin = worst_margin.min(limit - m.steps_max() as f64);
            if m.success()
                && m.iteration_alice == 0
                && m.iteration_bob == 0
                && m.steps_max() as f64 <= limit
            {
                ok += 1;
            }
        }
        pass &= ok >= 99;
        detail.push(format!("{adv}: {ok}/100 in iteration 0 within the step bound (min slack {worst_margin:.0})"));
    }
    v.report(2, pass, true, detail.join("; "));
}

fn unbounded_noise(v: &mut Verdicts, lemmas: &mut LemmaReport) {
    let l = 2048usize;
    let budgets = [0u64, l as u64 / 64, l as u64 / 8, l as u64, 4 * l as u64];
    let mut points = Vec::new();
    let mut success_at_max = 0;
    let mut detail = Vec::new();
    for &b in &budgets {
        let mut s = spec(SchemeConfig::standard(l), &format!("fp:{b}"));
        s.max_steps = Some(2_000_000);
        let n = if b == 4 * l as u64 { 100 } else { 20 };
        let reports = runs(&s, 0..n, lemmas);
        let mean_t = reports.iter().map(|r| r.metrics.flips as f64).sum::<f64>() / n as f64;
        let mean_steps = reports.iter().map(|r| r.metrics.steps_max() as f64).sum::<f64>() / n as f64;
        let ok = reports.iter().filter(|r| r.metrics.success()).count();
        if b == 4 * l as u64 {
            success_at_max = reports
                .iter()
                .filter(|r| r.metrics.success() && r.metrics.iteration_alice >= 1)
                .count();
        }
        points.push((mean_t, mean_steps));
        detail.push(format!("budget {b}: T={mean_t:.0} L'={mean_steps:.0} ok {ok}/{n}"));
    }
    let k = overhead_constant(l, &points);
    let survive = success_at_max >= 95;
    v.report(
        3,
        survive,
        true,
        format!("survival at T=4L: {success_at_max}/100 succeed in iteration >= 1"),
    );
    // Reported rather than enforced; see the decisions ledger.
    v.report(3, k <= 64.0, false, format!("overhead constant k={k:.1} (limit 64); {}", detail.join("; ")));
}

fn primitives(v: &mut Verdicts) {
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let amd = AmdCode::new(8, 16).unwrap();
    let delta = amd.detection_bound();
    let mut fooled = 0;
    for _ in 0..trials {
        let payload = BitString::random(amd.payload_bits(), &mut rng);
        let word = amd.encode(&payload, &mut rng).unwrap();
        let offset = loop {
            let o = BitString::random(amd.width(), &mut rng);
            if o.count_ones() > 0 {
                break o;
            }
        };
        fooled += amd.is_codeword(&word.xor(&offset).unwrap()) as u64;
    }
    let amd_rate = fooled as f64 / trials as f64;

    let hash = FingerprintHash::new(8, 64).unwrap();
    let p = hash.collision_bound();
    let mut collisions = 0;
    for _ in 0..trials {
        let s = BitString::random(64, &mut rng);
        let t = loop {
            let t = BitString::random(rng.gen_range(0..=64), &mut rng);
            if t != s {
                break t;
            }
        };
        collisions += hash.matches(&hash.hash(&s, &mut rng), &t) as u64;
    }
    let hash_rate = collisions as f64 / trials as f64;

    // Every corruption of at most capacity() symbols over every codeword.
    let rs = ReedSolomon::new(SymbolField::new(4).unwrap(), 6, 2).unwrap();
    let cap = rs.capacity();
    let mut rs_bad = 0;
    let mut rs_cases = 0u64;
    for d in 0..256u32 {
        let data = [(d & 15) as u16, (d >> 4) as u16];
        let word = rs.encode(&data).unwrap();
        for a in 0..6 {
            for b in a..6 {
                for ea in 0..16u16 {
                    for eb in 0..16u16 {
                        if a == b && eb != 0 {
                            continue;
                        }
                        let mut r = word.clone();
                        r[a] ^= ea;
                        r[b] ^= eb;
                        rs_cases += 1;
                        if rs.decode_data(&r).ok().as_deref() != Some(&data[..]) {
                            rs_bad += 1;
                        }
                    }
                }
            }
        }
    }

    // Decoding commutes with adding a codeword, for every received word.
    let toy = ReedSolomon::new(SymbolField::new(4).unwrap(), 3, 1).unwrap();
    let mut lin_bad = 0;
    for x in 0..16u16 {
        let c = toy.encode(&[x]).unwrap();
        for e in 0..4096u32 {
            let eta: Vec<u16> = (0..3).map(|i| ((e >> (4 * i)) & 15) as u16).collect();
            let sum: Vec<u16> = c.iter().zip(&eta).map(|(a, b)| a ^ b).collect();
            let ok = match (toy.decode(&eta), toy.decode(&sum)) {
                (Ok(de), Ok(ds)) => ds.iter().zip(&de).zip(&c).all(|((s, d), w)| *s == d ^ w),
                (Err(_), Err(_)) => true,
                _ => false,
            };
            lin_bad += !ok as u64;
        }
    }

    let pass = amd_rate <= 2.0 * delta && hash_rate <= 2.0 * p && rs_bad == 0 && lin_bad == 0 && cap == 2;
    v.report(
        4,
        pass,
        true,
        format!(
            "AMD {amd_rate:.5} vs 2*delta {:.5}; hash {hash_rate:.5} vs 2p {:.5}; RS {rs_bad}/{rs_cases} miscorrected within {cap} symbols; linearity violations {lin_bad}",
            2.0 * delta,
            2.0 * p
        ),
    );
}

const LEMMA_CHECKS: [&str; 14] = [
    "alice_failures_monotone",
    "bob_failures_at_most_alice",
    "bob_leaves_after_alice",
    "bob_round_equal_or_double",
    "bob_verified_when_alice_leaves",
    "bounded_phase_suffices",
    "failures_within_flips",
    "iteration_rounds_aligned",
    "phase_delta",
    "phase_wasted_rounds",
    "prefix_chain",
    "round_power_of_two",
    "uncorrupted_rounds_budget",
    "verified_prefix_of_reference",
];

fn describe_lemmas(lemmas: &LemmaReport) -> String {
    let per: Vec<String> = LEMMA_CHECKS
        .iter()
        .map(|k| match lemmas.checks.get(*k) {
            Some(t) => format!("{k} {}/{}", t.violations, t.checked),
            None => format!("{k} not exercised"),
        })
        .collect();
    let mut text = format!("{} violations ({})", lemmas.violations(), per.join(", "));
    if !lemmas.samples.is_empty() {
        text += &format!(" {:?}", lemmas.samples);
    }
    text
}

fn lemma_summary(v: &mut Verdicts, lemmas: &LemmaReport) {
    let checked: u64 = lemmas.checks.values().map(|t| t.checked).sum();
    v.report(5, lemmas.violations() == 0 && checked > 0, true, describe_lemmas(lemmas));

    // Runs long enough to halve the round size and to finish whole iterations,
    // which the runs above never do.
    let mut extra = LemmaReport::default();
    let mut deep = SchemeConfig::standard(16_384);
    deep.target = Some(1e-9);
    runs(&spec(deep, "sync:6"), 0..3, &mut extra);
    let mut long = spec(SchemeConfig::standard(1024), "fp:20000");
    long.max_steps = Some(2_000_000);
    runs(&long, 0..3, &mut extra);
    let exercised = LEMMA_CHECKS.iter().filter(|k| extra.checks.contains_key(**k) || lemmas.checks.contains_key(**k)).count();
    v.report(
        5,
        extra.violations() == 0,
        true,
        format!("supplementary runs, {exercised}/{} checks exercised overall: {}", LEMMA_CHECKS.len(), describe_lemmas(&extra)),
    );
}

fn oracle(v: &mut Verdicts) {
    let s = RunSpec::new(SchemeConfig::tiny(), "none".parse().unwrap());
    let r = exhaustive_oracle(&s, 256, 2, 0).unwrap();
    v.report(
        6,
        r.silent_failures == 0,
        true,
        format!(
            "{} patterns: {} correct, {} flagged, {} timeouts, {} gave up, {} silent failures",
            r.runs, r.correct, r.flagged, r.timeouts, r.gave_up, r.silent_failures
        ),
    );
}

fn privacy(v: &mut Verdicts) {
    let mut public = RunSpec::new(SchemeConfig::tiny(), "mitm".parse().unwrap());
    public.public = true;
    public.max_steps = Some(16_384);
    let runner = Runner::new(public.clone()).unwrap();
    let n = 50;
    let fooled = (0..n)
        .filter(|&seed| runner.run(seed, false).unwrap().metrics.bob_output_alternate == Some(true))
        .count();
    // Unlimited, the blind strategy jams forever; with a budget the runs
    // finish, so both show whether it can ever plant a wrong output.
    let mut private = Vec::new();
    for (adv, max_steps) in [("mitm", Some(16_384)), ("mitm:1000", None)] {
        let mut s = RunSpec::new(SchemeConfig::tiny(), adv.parse().unwrap());
        s.max_steps = max_steps;
        let runner = Runner::new(s).unwrap();
        let mut silent = 0;
        let mut completed = 0;
        for seed in 0..100 {
            let m = runner.run(seed, false).unwrap().metrics;
            silent += m.silent_failure() as u64;
            completed += (m.outcome == Outcome::Completed) as u64;
        }
        private.push((adv, silent, completed));
    }
    let frac = fooled as f64 / n as f64;
    let silent: u64 = private.iter().map(|p| p.1).sum();
    let detail: Vec<String> = private
        .iter()
        .map(|(adv, s, c)| format!("private {adv}: {s} silent failures over 100 ({c} completed)"))
        .collect();
    v.report(
        7,
        frac >= 0.10 && silent == 0,
        true,
        format!("public: Bob output the alternate transcript in {fooled}/{n}; {}", detail.join("; ")),
    );
}

fn main() {
    let mut v = Verdicts { enforced_failures: Vec::new() };
    let mut lemmas = LemmaReport::default();
    let start = Instant::now();
    noise_free(&mut v, &mut lemmas);
    bounded_noise(&mut v, &mut lemmas);
    unbounded_noise(&mut v, &mut lemmas);
    primitives(&mut v);
    lemma_summary(&mut v, &lemmas);
    oracle(&mut v);
    privacy(&mut v);
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if !v.enforced_failures.is_empty() {
        eprintln!("enforced criteria failed: {:?}", v.enforced_failures);
        std::process::exit(1);
    }
}
