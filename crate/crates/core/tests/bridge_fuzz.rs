mod support;

use cogrec_core::bridge::{symbol_to_text, text_to_chunk, BridgeError};
use cogrec_core::chunking::{build_chunk, internalize, ChunkConfig, ChunkOutcome};
use cogrec_core::engine::ProceduralMemory;
use cogrec_core::oracle::Oracle;
use proptest::prelude::*;

#[test]
fn oracle_answer_is_valid_and_every_corruption_is_refused() {
    let (wm, imp, schema) = support::tie_fixture();
    let q = symbol_to_text(&wm, &imp, &schema).unwrap();
    let answer = Oracle::new(support::tie_catalog()).answer(&q.rendered);
    assert!(text_to_chunk(&answer, &q, &wm).is_ok(), "{answer}");
    for kind in support::CORRUPTIONS {
        for n in 0..20 {
            let bad = support::corrupt(&answer, kind, n);
            match text_to_chunk(&bad, &q, &wm) {
                Err(e) => assert!(e.is_parse_failure() || matches!(e, BridgeError::UngroundedCondition(_)), "{kind}: {e}"),
                Ok(raw) => panic!("{kind} accepted:\n{bad}\n{raw:?}"),
            }
        }
    }
}

#[test]
fn ungrounded_and_parse_failures_are_told_apart() {
    let (wm, imp, schema) = support::tie_fixture();
    let q = symbol_to_text(&wm, &imp, &schema).unwrap();
    let answer = Oracle::new(support::tie_catalog()).answer(&q.rendered);
    let e = text_to_chunk(&support::corrupt(&answer, "ungrounded-user-fact", 0), &q, &wm).unwrap_err();
    assert!(matches!(e, BridgeError::UngroundedCondition(_)));
    let e = text_to_chunk(&support::corrupt(&answer, "unknown-attribute", 0), &q, &wm).unwrap_err();
    assert_eq!(e, BridgeError::UnknownAttribute("budget0".into()));
    let e = text_to_chunk(&support::corrupt(&answer, "missing-recommend", 0), &q, &wm).unwrap_err();
    assert_eq!(e, BridgeError::NoRecommendLine);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_responses_never_panic_and_accepted_ones_are_grounded(text in "(RECOMMEND: |BECAUSE:|- user\\.|- item\\.|genre|preference| = |vA|vB|cyberpunk|sci-fi|western|\n|\"| ){0,30}") {
        let (wm, imp, schema) = support::tie_fixture();
        let q = symbol_to_text(&wm, &imp, &schema).unwrap();
        if let Ok(raw) = text_to_chunk(&text, &q, &wm) {
            for (id, attr, value) in &raw.conditions {
                prop_assert!(wm.contains(id, attr, value));
            }
            let chunk = build_chunk(&raw, &wm, &ChunkConfig::default()).unwrap();
            let mut pm = ProceduralMemory::new();
            prop_assert!(matches!(internalize(&mut pm, chunk, None).unwrap(), ChunkOutcome::Added(_)));
        }
    }

    #[test]
    fn corrupted_answers_with_noise_stay_refused(kind in 0..support::CORRUPTIONS.len(), n in 0usize..1000, noise in "[a-z ]{0,20}") {
        let (wm, imp, schema) = support::tie_fixture();
        let q = symbol_to_text(&wm, &imp, &schema).unwrap();
        let answer = Oracle::new(support::tie_catalog()).answer(&q.rendered);
        let bad = format!("{}\n{}", noise, support::corrupt(&answer, support::CORRUPTIONS[kind], n));
        prop_assert!(text_to_chunk(&bad, &q, &wm).is_err());
    }
}
