use intercode::bitcodec::{
    count_alternations, gf, majority, AmdCode, BinaryField, CodecError, EccCode, FingerprintHash,
    ReedSolomon, RobustCodec, SymbolField,
};
use intercode::BitString;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Field oracles: schoolbook carry-less product, then long-division reduction.

fn clmul(a: u128, b: u128) -> (u128, u128) {
    let (mut lo, mut hi) = (0u128, 0u128);
    for i in 0..128 {
        if (b >> i) & 1 == 1 {
            lo ^= a << i;
            if i > 0 {
                hi ^= a >> (128 - i);
            }
        }
    }
    (lo, hi)
}

fn reduce(mut lo: u128, mut hi: u128, modulus: u128, k: u32) -> u128 {
    for bit in (k..256).rev() {
        let set = if bit >= 128 { (hi >> (bit - 128)) & 1 } else { (lo >> bit) & 1 };
        if set == 1 {
            let shift = bit - k;
            // modulus << shift as a 256-bit value
            if shift < 128 {
                lo ^= modulus << shift;
                if shift > 0 {
                    hi ^= modulus >> (128 - shift);
                }
            } else {
                hi ^= modulus << (shift - 128);
            }
        }
    }
    lo
}

fn oracle_mul(f: &BinaryField, a: u128, b: u128) -> u128 {
    let (lo, hi) = clmul(a, b);
    reduce(lo, hi, f.modulus(), f.degree())
}

fn trial_division_irreducible(p: u64, degree: u32) -> bool {
    let deg = |x: u64| 63 - x.leading_zeros() as i32;
    for d in 1..=(degree / 2) {
        for q in (1u64 << d)..(1u64 << (d + 1)) {
            let mut r = p;
            while r != 0 && deg(r) >= deg(q) {
                r ^= q << (deg(r) - deg(q));
            }
            if r == 0 {
                return false;
            }
        }
    }
    true
}

#[test]
fn smallest_irreducible_matches_trial_division() {
    for k in 2..=14u32 {
        let expected = ((1u64 << k)..(1u64 << (k + 1)))
            .find(|&p| trial_division_irreducible(p, k))
            .unwrap();
        assert_eq!(BinaryField::new(k).unwrap().modulus(), expected as u128, "degree {k}");
    }
}

#[test]
fn rabin_agrees_with_trial_division() {
    for k in 2..=10u32 {
        for p in (1u64 << k)..(1u64 << (k + 1)) {
            assert_eq!(
                gf::is_irreducible(p as u128, k),
                trial_division_irreducible(p, k),
                "poly {p:#x}"
            );
        }
    }
}

#[test]
fn symbol_field_tables_agree_with_shift_and_add() {
    for m in [3u32, 4, 8, 9] {
        let f = SymbolField::new(m).unwrap();
        let modulus = f.modulus() as u128;
        let size = 1u32 << m;
        for a in 0..size.min(64) {
            for b in 0..size {
                let (lo, hi) = clmul(a as u128, b as u128);
                assert_eq!(f.mul(a as u16, b as u16) as u128, reduce(lo, hi, modulus, m));
            }
        }
    }
}

proptest! {
    #[test]
    fn binary_field_mul_matches_oracle(k in 2u32..=127, a: u128, b: u128) {
        let f = BinaryField::new(k).unwrap();
        let (a, b) = (a & f.mask(), b & f.mask());
        prop_assert_eq!(f.mul(a, b), oracle_mul(&f, a, b));
    }

    #[test]
    fn binary_field_inverse(k in 2u32..=127, a: u128) {
        let f = BinaryField::new(k).unwrap();
        let a = a & f.mask();
        prop_assume!(a != 0);
        prop_assert_eq!(f.mul(a, f.inv(a)), 1);
    }
}

// ---------------------------------------------------------------------------
// Fingerprint hash.

fn all_strings(max_len: usize) -> Vec<BitString> {
    let mut out = Vec::new();
    for len in 0..=max_len {
        for v in 0..(1u32 << len) {
            out.push(BitString::from_uint(v as u128, len));
        }
    }
    out
}

#[test]
fn hash_collision_count_within_bound_exhaustive() {
    let h = FingerprintHash::new(4, 9).unwrap();
    let strings = all_strings(9);
    let bound = 9usize.div_ceil(4) + 1;
    let mut worst = 0;
    for (i, s) in strings.iter().enumerate() {
        for t in &strings[i + 1..] {
            let collisions = (1..16u128).filter(|&seed| h.digest(seed, s) == h.digest(seed, t)).count();
            worst = worst.max(collisions);
        }
    }
    assert!(worst <= bound, "worst {worst} > {bound}");
    assert!(worst as f64 / 15.0 <= h.collision_bound() + 1e-12);
}

#[test]
fn hash_empty_and_length_sensitivity() {
    let h = FingerprintHash::new(16, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fp = h.hash(&BitString::new(), &mut rng);
    assert_eq!(fp.digest, 0);
    let a: BitString = "0".parse().unwrap();
    let b: BitString = "00".parse().unwrap();
    assert!(!h.matches(&h.hash(&a, &mut rng), &b));
}

#[test]
fn hash_target_selection() {
    let h = FingerprintHash::for_target(3072, 2f64.powi(-22)).unwrap();
    assert!(h.collision_bound() <= 2f64.powi(-22));
    let smaller = FingerprintHash::new(h.field_bits() - 1, 3072).unwrap();
    assert!(smaller.collision_bound() > 2f64.powi(-22));
}

#[test]
fn hash_collision_rate_monte_carlo() {
    // 8-bit field, 64-bit strings: bound 9/255.
    let h = FingerprintHash::new(8, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 20_000;
    let mut hits = 0;
    for _ in 0..trials {
        let s = BitString::random(64, &mut rng);
        let mut t = s.clone();
        t.flip(rng.gen_range(0..64));
        if h.matches(&h.hash(&s, &mut rng), &t) {
            hits += 1;
        }
    }
    assert!((hits as f64 / trials as f64) <= h.collision_bound());
}

// ---------------------------------------------------------------------------
// Tamper detection.

#[test]
fn amd_detection_exhaustive_small_field() {
    // GF(2^4), one payload block: every nonzero offset against every payload.
    let code = AmdCode::new(4, 4).unwrap();
    assert_eq!(code.blocks(), 1);
    let w = code.width();
    let valid_x: Vec<u128> = (1..15).collect();
    let mut worst = 0usize;
    for m in 0..16u128 {
        let payload = BitString::from_uint(m, 4);
        let words: Vec<BitString> =
            valid_x.iter().map(|&x| code.encode_with(&payload, x).unwrap()).collect();
        for off in 1..(1u128 << w) {
            let offset = BitString::from_uint(off, w);
            let fooled = words.iter().filter(|c| code.is_codeword(&c.xor(&offset).unwrap())).count();
            worst = worst.max(fooled);
        }
    }
    assert!(worst as f64 / valid_x.len() as f64 <= code.detection_bound() + 1e-12, "worst {worst}");
}

#[test]
fn amd_detection_three_blocks_sampled() {
    let code = AmdCode::new(4, 12).unwrap();
    assert_eq!(code.blocks(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let payload = BitString::random(12, &mut rng);
        let offset = loop {
            let o = BitString::random(code.width(), &mut rng);
            if o.count_ones() > 0 {
                break o;
            }
        };
        let fooled = (1..15u128)
            .filter(|&x| code.is_codeword(&code.encode_with(&payload, x).unwrap().xor(&offset).unwrap()))
            .count();
        assert!(fooled <= code.blocks() + 1);
    }
}

#[test]
fn amd_roundtrip_and_silence_rejection() {
    let code = AmdCode::for_target(64, 2f64.powi(-24)).unwrap();
    assert!(code.detection_bound() <= 2f64.powi(-24));
    assert!(code.blocks() % 2 == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let payload = BitString::random(64, &mut rng);
        let word = code.encode(&payload, &mut rng).unwrap();
        assert!(!word.all_equal());
        assert_eq!(code.decode(&word).unwrap(), payload);
    }
    assert_eq!(code.decode(&BitString::zeros(code.width())), Err(CodecError::NotCodeword));
    assert_eq!(code.decode(&BitString::ones(code.width())), Err(CodecError::NotCodeword));
}

proptest! {
    #[test]
    fn amd_roundtrip(k in 2u32..40, payload_len in 0usize..80, seed: u64) {
        let code = AmdCode::new(k, payload_len).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let payload = BitString::random(payload_len, &mut rng);
        let word = code.encode(&payload, &mut rng).unwrap();
        prop_assert_eq!(word.len(), code.width());
        prop_assert!(!word.all_equal());
        prop_assert_eq!(code.decode(&word).unwrap(), payload);
    }
}

// ---------------------------------------------------------------------------
// Reed-Solomon against brute-force nearest codeword.

fn all_codewords(rs: &ReedSolomon) -> Vec<Vec<u16>> {
    let q = 1u32 << rs.field().bits();
    let k = rs.data_len();
    (0..q.pow(k as u32))
        .map(|mut v| {
            let data: Vec<u16> = (0..k)
                .map(|_| {
                    let s = (v % q) as u16;
                    v /= q;
                    s
                })
                .collect();
            rs.encode(&data).unwrap()
        })
        .collect()
}

fn symbol_distance(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn brute_force_decode(codewords: &[Vec<u16>], received: &[u16], radius: usize) -> Option<Vec<u16>> {
    codewords.iter().find(|c| symbol_distance(c, received) <= radius).cloned()
}

#[test]
fn rs_min_distance_small_code() {
    let rs = ReedSolomon::new(SymbolField::new(4).unwrap(), 6, 2).unwrap();
    let words = all_codewords(&rs);
    let min = words
        .iter()
        .enumerate()
        .flat_map(|(i, a)| words[i + 1..].iter().map(move |b| symbol_distance(a, b)))
        .min()
        .unwrap();
    assert_eq!(min, 5);
}

#[test]
fn rs_matches_brute_force_on_random_words() {
    let rs = ReedSolomon::new(SymbolField::new(4).unwrap(), 7, 2).unwrap();
    let words = all_codewords(&rs);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20_000 {
        let received: Vec<u16> = if trial % 2 == 0 {
            (0..7).map(|_| rng.gen_range(0..16)).collect()
        } else {
            let mut w = words[rng.gen_range(0..words.len())].clone();
            for _ in 0..rng.gen_range(1..=4) {
                let i = rng.gen_range(0..7);
                w[i] = rng.gen_range(0..16);
            }
            w
        };
        let expected = brute_force_decode(&words, &received, rs.capacity());
        assert_eq!(rs.decode(&received).ok(), expected, "received {received:?}");
    }
}

#[test]
fn rs_corrects_every_two_symbol_corruption_gf256() {
    let rs = ReedSolomon::new(SymbolField::new(8).unwrap(), 6, 2).unwrap();
    let codeword = rs.encode(&[0x5a, 0xc3]).unwrap();
    for i in 0..6 {
        for j in i..6 {
            for ei in 1..256u16 {
                for ej in 0..256u16 {
                    if i == j && ej > 0 {
                        break;
                    }
                    let mut w = codeword.clone();
                    w[i] ^= ei;
                    w[j] ^= ej;
                    assert_eq!(rs.decode(&w).unwrap(), codeword);
                }
            }
        }
    }
}

#[test]
fn rs_decoding_is_linear_exhaustive_gf16() {
    let rs = ReedSolomon::new(SymbolField::new(4).unwrap(), 3, 1).unwrap();
    let words = all_codewords(&rs);
    for x in &words {
        for e in 0..4096u32 {
            let eta: Vec<u16> = (0..3).map(|i| ((e >> (4 * i)) & 15) as u16).collect();
            let sum: Vec<u16> = x.iter().zip(&eta).map(|(a, b)| a ^ b).collect();
            match (rs.decode(&eta), rs.decode(&sum)) {
                (Ok(de), Ok(ds)) => {
                    let shifted: Vec<u16> = x.iter().zip(&de).map(|(a, b)| a ^ b).collect();
                    assert_eq!(ds, shifted);
                }
                (Err(_), Err(_)) => {}
                other => panic!("linearity broken for x={x:?} eta={eta:?}: {other:?}"),
            }
        }
    }
}

#[test]
fn rs_decoding_is_linear_gf16_low_weight_offsets() {
    let rs = ReedSolomon::new(SymbolField::new(4).unwrap(), 6, 2).unwrap();
    let words = all_codewords(&rs);
    let mut offsets = vec![vec![0u16; 6]];
    for i in 0..6 {
        for a in 1..16u16 {
            let mut e = vec![0u16; 6];
            e[i] = a;
            offsets.push(e.clone());
            for j in i + 1..6 {
                for b in 1..16u16 {
                    let mut f = e.clone();
                    f[j] = b;
                    offsets.push(f.clone());
                    for l in j + 1..6 {
                        for c in [1u16, 7, 15] {
                            let mut g = f.clone();
                            g[l] = c;
                            offsets.push(g);
                        }
                    }
                }
            }
        }
    }
    for x in &words {
        for eta in &offsets {
            let sum: Vec<u16> = x.iter().zip(eta).map(|(a, b)| a ^ b).collect();
            match (rs.decode(eta), rs.decode(&sum)) {
                (Ok(de), Ok(ds)) => {
                    let shifted: Vec<u16> = x.iter().zip(&de).map(|(a, b)| a ^ b).collect();
                    assert_eq!(ds, shifted);
                }
                (Err(_), Err(_)) => {}
                other => panic!("linearity broken: {other:?}"),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Slot codes.

#[test]
fn ecc_fill_slot_shapes() {
    let ecc = EccCode::fill_slot(124, 1500).unwrap();
    assert_eq!(ecc.symbol_bits(), 8);
    assert_eq!(ecc.rs().code_len(), 187);
    assert_eq!(ecc.rs().data_len(), 16);
    assert!(ecc.rs().code_len() >= 3 * ecc.rs().data_len());
    // 2420-bit slot no longer fits in 255 bytes.
    let wide = EccCode::fill_slot(140, 2420).unwrap();
    assert_eq!(wide.symbol_bits(), 9);
}

#[test]
fn ecc_survives_corruption_within_capacity() {
    let ecc = EccCode::fill_slot(40, 200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = ecc.symbol_bits() as usize;
    for _ in 0..500 {
        let data = BitString::random(40, &mut rng);
        let mut word = ecc.encode(&data).unwrap();
        assert_eq!(word.len(), 200);
        let mut symbols: Vec<usize> = (0..ecc.rs().code_len()).collect();
        for _ in 0..ecc.capacity() {
            let s = symbols.swap_remove(rng.gen_range(0..symbols.len()));
            for b in 0..m {
                if rng.gen::<bool>() {
                    word.flip(s * m + b);
                }
            }
        }
        assert_eq!(ecc.decode(&word).unwrap(), data);
    }
}

#[test]
fn robust_codec_rejects_heavy_corruption() {
    let amd = AmdCode::for_target(32, 1e-6).unwrap();
    let codec = RobustCodec::new(amd, 600).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let payload = BitString::random(32, &mut rng);
    let word = codec.encode(&payload, &mut rng).unwrap();
    assert_eq!(codec.decode(&word).unwrap(), payload);
    let m = codec.ecc().symbol_bits() as usize;
    let mut accepted = 0;
    for _ in 0..200 {
        let mut w = word.clone();
        for s in 0..=codec.ecc().capacity() * 2 {
            w.flip(s * m);
        }
        accepted += codec.decode(&w).is_ok() as usize;
    }
    assert_eq!(accepted, 0);
    assert_eq!(codec.decode(&BitString::zeros(600)), Err(CodecError::NotCodeword));
    assert_eq!(codec.decode(&BitString::ones(600)), Err(CodecError::NotCodeword));
}

#[test]
fn majority_and_alternations() {
    let b = |s: &str| s.parse::<BitString>().unwrap();
    assert_eq!(majority(&b("110")), 1);
    assert_eq!(majority(&b("10")), 0);
    assert_eq!(majority(&b("")), 0);
    assert_eq!(count_alternations(&b("")), 0);
    assert_eq!(count_alternations(&b("0")), 0);
    assert_eq!(count_alternations(&b("0101")), 3);
    assert_eq!(count_alternations(&b("0011")), 1);
}

proptest! {
    #[test]
    fn majority_matches_count(bits in proptest::collection::vec(0u8..2, 0..40)) {
        let s = BitString::from_bits(&bits);
        let ones = bits.iter().filter(|&&b| b == 1).count();
        prop_assert_eq!(majority(&s) == 1, ones > bits.len() - ones);
    }
}
