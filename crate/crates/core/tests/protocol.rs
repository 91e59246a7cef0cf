use intercode::protocol::{
    prf, PaddedProtocol, ProtocolError, ProtocolKind, ProtocolSpec, Role, Transcript, Turn,
};
use intercode::BitString;
use proptest::prelude::*;

// Folds next_bit over a growing history, rebuilding the transcript from
// scratch at every position so no rolling state is shared with the library.
fn fold_reference(spec: &ProtocolSpec) -> BitString {
    let mut bits = BitString::new();
    for pos in 0..spec.length {
        let history = Transcript::from_bits(&bits);
        let owner = spec.direction(pos);
        bits.push(spec.next_bit(owner, &history).unwrap());
    }
    bits
}

#[test]
fn constant_protocol_is_all_zero() {
    let spec = ProtocolSpec::new(ProtocolKind::Constant, 100, 9);
    assert_eq!(spec.reference(), BitString::zeros(100));
}

#[test]
fn prf_reference_matches_direct_fold() {
    for seed in 0..8 {
        let spec = ProtocolSpec::new(ProtocolKind::Prf, 32, seed);
        assert_eq!(spec.reference(), fold_reference(&spec), "seed {seed}");
    }
}

#[test]
fn echo_copies_alice() {
    let r = ProtocolSpec::new(ProtocolKind::Echo, 64, 3).reference();
    for i in 0..32 {
        assert_eq!(r.get(2 * i), r.get(2 * i + 1));
    }
    // Alice's bits are not all the same, so the check is not vacuous.
    let alice: BitString = (0..32).map(|i| r.get(2 * i).unwrap()).collect();
    assert!(!alice.all_equal());
}

#[test]
fn alice_speaks_first() {
    for kind in [ProtocolKind::Constant, ProtocolKind::Echo, ProtocolKind::Prf] {
        for seed in 0..16 {
            assert_eq!(ProtocolSpec::new(kind, 10, seed).direction(0), Role::Alice);
        }
    }
}

#[test]
fn prf_schedule_uses_both_directions() {
    let spec = ProtocolSpec::new(ProtocolKind::Prf, 1000, 1);
    let alice = (0..1000).filter(|&i| spec.direction(i) == Role::Alice).count();
    assert!((400..=600).contains(&alice), "{alice}");
}

#[test]
fn wrong_speaker_and_past_end_are_errors() {
    let spec = ProtocolSpec::new(ProtocolKind::Constant, 4, 0);
    let t = Transcript::new();
    assert_eq!(
        spec.next_bit(Role::Bob, &t),
        Err(ProtocolError::NotYourTurn { pos: 0, owner: Role::Alice })
    );
    let full = Transcript::from_bits(&spec.reference());
    assert_eq!(
        spec.next_bit(Role::Alice, &full),
        Err(ProtocolError::PastEnd { pos: 4, len: 4 })
    );
}

#[test]
fn padding_belongs_to_alice() {
    let spec = ProtocolSpec::new(ProtocolKind::Prf, 16, 5);
    let padded = PaddedProtocol::new(spec.clone(), 77);
    let t = padded.reference(40);
    assert!(spec.reference().is_prefix_of(t.bits()));
    let mut history = Transcript::from_bits(&t.bits().slice(0, 16));
    for pos in 16..40 {
        assert_eq!(padded.direction(pos), Role::Alice);
        assert_eq!(padded.turn(Role::Bob, &history), Turn::Listen);
        let Turn::Speak(b) = padded.turn(Role::Alice, &history) else { panic!("alice at {pos}") };
        assert_eq!(b, t.bits().get(pos).unwrap());
        history.push(b);
    }
}

#[test]
fn padding_depends_on_key() {
    let spec = ProtocolSpec::new(ProtocolKind::Constant, 8, 0);
    let a = PaddedProtocol::new(spec.clone(), 1).reference(200);
    let b = PaddedProtocol::new(spec, 2).reference(200);
    assert_eq!(a.bits().slice(0, 8), b.bits().slice(0, 8));
    assert_ne!(a.bits().slice(8, 200), b.bits().slice(8, 200));
}

#[test]
fn alternate_alice_key_changes_only_alice() {
    let spec = ProtocolSpec::new(ProtocolKind::Prf, 64, 2);
    let alt = spec.with_alice_key(prf(99, 0, 0));
    assert_eq!(alt.bob_key, spec.bob_key);
    assert_eq!(alt.schedule_seed, spec.schedule_seed);
    assert_ne!(alt.reference(), spec.reference());
}

#[test]
fn prefix_semantics() {
    let t = Transcript::from_bits(&"0110".parse().unwrap());
    assert_eq!(t.prefix(2).unwrap().to_string(), "01");
    assert_eq!(t.prefix(5), Err(ProtocolError::Incomplete { have: 4, want: 5 }));
    assert!(Transcript::new().is_prefix_of(&t));
    assert!(t.is_prefix_of(&t));
    let other = Transcript::from_bits(&"0100".parse().unwrap());
    assert!(!other.is_prefix_of(&t));
}

#[test]
fn protocol_kind_parses() {
    assert_eq!("echo".parse::<ProtocolKind>(), Ok(ProtocolKind::Echo));
    assert!("nope".parse::<ProtocolKind>().is_err());
}

proptest! {
    #[test]
    fn rewinding_reproduces_bits(seed: u64, len in 1usize..200, cut in 0usize..200) {
        let spec = ProtocolSpec::new(ProtocolKind::Prf, len, seed);
        let padded = PaddedProtocol::new(spec, seed ^ 1);
        let full = padded.reference(len + 20);
        let cut = cut.min(len + 19);
        let mut t = full.clone();
        t.truncate(cut);
        let speaker = padded.direction(cut);
        prop_assert_eq!(padded.turn(speaker, &t), Turn::Speak(full.bits().get(cut).unwrap()));
        prop_assert_eq!(t.digest(), Transcript::from_bits(&full.bits().slice(0, cut)).digest());
    }

    #[test]
    fn prefix_relation_matches_bits(a in proptest::collection::vec(0u8..2, 0..40),
                                    b in proptest::collection::vec(0u8..2, 0..40)) {
        let (ba, bb) = (BitString::from_bits(&a), BitString::from_bits(&b));
        let (ta, tb) = (Transcript::from_bits(&ba), Transcript::from_bits(&bb));
        prop_assert_eq!(ta.is_prefix_of(&tb), b.starts_with(&a));
    }
}
