mod support;

use cogrec_core::symbol::{Atom, Identifier};
use cogrec_core::wm::{WmePattern, WorkingMemory};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn indexes_agree_with_scans_after_random_edits(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wm = support::random_wm(&mut rng, 60);
        for _ in 0..40 {
            let all: Vec<_> = wm.iter().map(|w| (w.id.clone(), w.attr.clone(), w.value.clone())).collect();
            if rng.gen_bool(0.4) && !all.is_empty() {
                let (i, a, v) = all.choose(&mut rng).unwrap().clone();
                prop_assert!(wm.remove_triple(&i, &a, &v).is_some());
                prop_assert!(!wm.contains(&i, &a, &v));
            } else {
                let extra = support::random_wm(&mut rng, 2);
                for w in extra.iter() {
                    wm.add(w.id.clone(), w.attr.clone(), w.value.clone()).unwrap();
                }
            }
        }
        for id in support::IDS {
            let id = Identifier::new(id);
            let by_index: Vec<_> = wm.with_id(&id).map(|w| w.timetag).collect();
            let by_scan: Vec<_> = wm.iter().filter(|w| w.id == id).map(|w| w.timetag).collect();
            prop_assert_eq!(by_index, by_scan);
            for attr in support::ATTRS {
                let attr = Atom::new(attr);
                let by_index: Vec<_> = wm.with_id_attr(&id, &attr).map(|w| w.timetag).collect();
                let by_scan: Vec<_> = wm.iter().filter(|w| w.id == id && w.attr == attr).map(|w| w.timetag).collect();
                prop_assert_eq!(by_index, by_scan);
            }
        }
        for attr in support::ATTRS {
            let attr = Atom::new(attr);
            let pattern = WmePattern { id: None, attr: Some(attr.clone()), value: None };
            let q: Vec<_> = wm.query(&pattern).into_iter().map(|w| w.timetag).collect();
            let by_index: Vec<_> = wm.with_attr(&attr).map(|w| w.timetag).collect();
            prop_assert_eq!(q, by_index);
        }
        let replayed = WorkingMemory::replay(wm.journal());
        prop_assert!(replayed.same_contents(&wm));
    }

    #[test]
    fn adding_twice_changes_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wm = support::random_wm(&mut rng, 40);
        let mut again = wm.clone();
        for w in wm.iter() {
            let tag = again.add(w.id.clone(), w.attr.clone(), w.value.clone()).unwrap();
            prop_assert_eq!(tag, w.timetag);
        }
        prop_assert_eq!(again.len(), wm.len());
        prop_assert_eq!(again.journal().len(), wm.journal().len());
    }
}
