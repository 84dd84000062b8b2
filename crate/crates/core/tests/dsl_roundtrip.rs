mod support;

use cogrec_core::dsl::{parse_production, parse_rules, serialize_production, serialize_rules};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn generated_productions_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    for _ in 0..2_000 {
        let p = support::random_production(&mut rng);
        let text = serialize_production(&p);
        let back = parse_production(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(back, p, "{text}");
        assert_eq!(serialize_production(&back), text);
    }
}

#[test]
fn rule_files_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rules: Vec<_> = (0..50).map(|_| support::random_production(&mut rng)).collect();
    let text = serialize_rules(&rules);
    assert_eq!(parse_rules(&text).unwrap(), rules);
}

#[test]
fn parser_survives_random_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    for _ in 0..20_000 {
        let len = rng.gen_range(0..64);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let _ = parse_rules(&String::from_utf8_lossy(&bytes));
    }
}

#[test]
fn parser_survives_mutated_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
    for _ in 0..5_000 {
        let mut bytes = serialize_production(&support::random_production(&mut rng)).into_bytes();
        for _ in 0..rng.gen_range(1..4) {
            let i = rng.gen_range(0..bytes.len());
            match rng.gen_range(0..3) {
                0 => bytes[i] = rng.gen(),
                1 => {
                    bytes.remove(i);
                }
                _ => bytes.insert(i, b"(){}<>^-+=@\"#"[rng.gen_range(0..13)]),
            }
        }
        let _ = parse_rules(&String::from_utf8_lossy(&bytes));
    }
}

proptest! {
    #[test]
    fn round_trip_property(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = support::random_production(&mut rng);
        prop_assert_eq!(parse_production(&serialize_production(&p)).unwrap(), p);
    }

    #[test]
    fn arbitrary_text_never_panics(s in ".{0,200}") {
        let _ = parse_rules(&s);
    }
}
