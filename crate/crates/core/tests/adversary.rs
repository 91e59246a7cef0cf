use intercode::adversary::{AdversaryContext, AdversaryError, AdversarySpec, IidFlip};
use intercode::channel::{Action, Activity, Adversary, AdversaryView, SlotInfo};
use intercode::harness::{RoundClass, RunSpec, Runner};
use intercode::protocol::{ProtocolKind, ProtocolSpec};
use intercode::scheme::{SchemeConfig, SchemeParams};
use proptest::prelude::*;

fn spec(scheme: SchemeConfig, adversary: &str) -> RunSpec {
    let mut s = RunSpec::new(scheme, adversary.parse().unwrap());
    s.assert_lemmas = true;
    s
}

#[test]
fn specs_parse_and_print() {
    let cases = [
        ("none", AdversarySpec::None),
        ("iid:0.01", AdversarySpec::Iid { rate: 0.01, budget: None }),
        ("iid:0.5,7", AdversarySpec::Iid { rate: 0.5, budget: Some(7) }),
        ("burst:10,5", AdversarySpec::Burst { start: 10, len: 5 }),
        ("sync:3", AdversarySpec::Sync { budget: 3 }),
        ("fp:8192", AdversarySpec::Fingerprint { budget: 8192 }),
        ("silence:4", AdversarySpec::Silence { budget: 4 }),
        ("exhaustive:256,2", AdversarySpec::Exhaustive { window: 256, max_flips: 2 }),
        ("mitm", AdversarySpec::Mitm { budget: None }),
        ("mitm:9", AdversarySpec::Mitm { budget: Some(9) }),
    ];
    for (text, want) in cases {
        let got: AdversarySpec = text.parse().unwrap();
        assert_eq!(got, want, "{text}");
        assert_eq!(got.to_string().parse::<AdversarySpec>().unwrap(), want);
        let json = serde_json::to_string(&got).unwrap();
        assert_eq!(serde_json::from_str::<AdversarySpec>(&json).unwrap(), want);
    }
    for bad in ["", "iid", "iid:2", "burst:1", "sync:x", "bogus:1"] {
        assert!(bad.parse::<AdversarySpec>().is_err(), "{bad:?}");
    }
    assert_eq!(AdversarySpec::Sync { budget: 3 }.budget(), Some(3));
    assert_eq!(AdversarySpec::Mitm { budget: None }.budget(), None);
}

#[test]
fn exhaustive_is_not_a_single_adversary() {
    let params = SchemeParams::new(SchemeConfig::tiny()).unwrap();
    let ctx = AdversaryContext {
        params,
        protocol: ProtocolSpec::new(ProtocolKind::Prf, 512, 1),
        public: false,
    };
    let spec = AdversarySpec::Exhaustive { window: 10, max_flips: 1 };
    assert!(matches!(spec.build(&ctx, 0), Err(AdversaryError::Enumerated)));
}

fn view(activity: Activity) -> AdversaryView {
    AdversaryView {
        step: 0,
        activity,
        silent_run_start: false,
        present: [true, true],
        slots: [SlotInfo::default(); 2],
        observed: None,
    }
}

#[test]
fn iid_flips_only_transmitted_bits() {
    let mut adv = IidFlip::new(1.0, None, 3);
    assert_eq!(adv.decide(&view(Activity::OneSending)), Action::Flip);
    assert_eq!(adv.decide(&view(Activity::BothSilent)), Action::Pass);
    assert_eq!(adv.decide(&view(Activity::BothSending)), Action::Pass);
}

#[test]
fn iid_rate_is_respected() {
    let mut adv = IidFlip::new(0.1, None, 3);
    let n = 100_000;
    let flips = (0..n).filter(|_| adv.decide(&view(Activity::OneSending)) == Action::Flip).count();
    let rate = flips as f64 / n as f64;
    assert!((rate - 0.1).abs() < 0.005, "{rate}");
}

#[test]
fn sync_targeting_spends_one_flip_per_failure() {
    // A long protocol has room for several failures in the bounded phase.
    for budget in [1u64, 2, 5] {
        let r = Runner::new(spec(SchemeConfig::standard(16_384), &format!("sync:{budget}")))
            .unwrap()
            .run(1, false)
            .unwrap();
        let m = &r.metrics;
        assert!(m.success());
        assert_eq!(m.iteration_alice, 0);
        assert_eq!(m.flips, budget);
        let failed = r.rounds.iter().filter(|x| x.iteration == 0 && x.class != RoundClass::Progressive);
        assert_eq!(failed.count() as u64, budget, "budget {budget}");
        assert_eq!(r.lemmas.unwrap().violations(), 0);
    }
}

#[test]
fn fingerprint_targeting_reaches_later_iterations() {
    let mut s = spec(SchemeConfig::standard(1024), "fp:1000");
    s.max_steps = Some(2_000_000);
    let r = Runner::new(s).unwrap().run(2, false).unwrap();
    let m = &r.metrics;
    assert!(m.success());
    assert!(m.iteration_alice >= 1);
    assert!(m.flips <= 1000 && m.flips > m.flips_iteration0);
    assert_eq!(r.lemmas.unwrap().violations(), 0);
}

#[test]
fn silence_spoofing_only_delays_bob() {
    let r = Runner::new(spec(SchemeConfig::standard(1024), "silence:30"))
        .unwrap()
        .run(4, false)
        .unwrap();
    let m = &r.metrics;
    assert!(m.success());
    assert!(m.silence_charges > 0);
    assert!(m.flips <= 30);
    assert!(m.steps_bob > m.steps_alice);
    assert_eq!(r.lemmas.unwrap().violations(), 0);
}

#[test]
fn public_mitm_impersonates_alice() {
    let mut s = spec(SchemeConfig::tiny(), "mitm");
    s.public = true;
    s.assert_lemmas = false;
    s.max_steps = Some(20_000);
    let runner = Runner::new(s).unwrap();
    let mut fooled = 0;
    for seed in 0..5 {
        let m = runner.run(seed, false).unwrap().metrics;
        fooled += (m.bob_output_alternate == Some(true)) as usize;
        assert!(!m.silent_failure());
    }
    assert!(fooled >= 1);
}

#[test]
fn private_mitm_cannot_cause_silent_failures() {
    let mut s = spec(SchemeConfig::tiny(), "mitm");
    s.assert_lemmas = false;
    s.max_steps = Some(20_000);
    let runner = Runner::new(s).unwrap();
    for seed in 0..5 {
        let m = runner.run(seed, false).unwrap().metrics;
        assert_eq!(m.bob_output_alternate, Some(false));
        assert!(!m.silent_failure());
        assert!(m.accounted());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn budgets_are_never_exceeded(kind in 0usize..5, budget in 0u64..12, seed in 0u64..1000) {
        let text = match kind {
            0 => format!("iid:0.01,{budget}"),
            1 => format!("sync:{budget}"),
            2 => format!("fp:{budget}"),
            3 => format!("silence:{budget}"),
            _ => format!("burst:{},{budget}", seed * 3),
        };
        let mut s = spec(SchemeConfig::tiny(), &text);
        s.assert_lemmas = false;
        let m = Runner::new(s).unwrap().run(seed, false).unwrap().metrics;
        prop_assert!(m.flips <= budget, "{} spent {}", text, m.flips);
        prop_assert!(!m.silent_failure());
        prop_assert!(m.accounted());
    }
}
