mod support;

use proptest::prelude::*;
use sastline_core::detection::detect;
use support::*;

#[test]
fn matches_brute_force_on_seeded_instances() {
    let mut rng = rng(7);
    for i in 0..5_000 {
        let inst = random_instance(&mut rng);
        let got = detect(&inst.delta, &inst.vul, &inst.fix).unwrap();
        assert_eq!(got.detected, oracle_detect(&inst), "instance {i}: {inst:?}");
        let located = inst.vul.alerts.iter().filter(|a| oracle_at_fix(a, &inst.delta)).count();
        assert_eq!(got.location_only_matches, located, "instance {i}");
        assert_eq!(got.matching_alerts.len() + got.survived_filter_removals, located, "instance {i}");
    }
}

proptest! {
    #[test]
    fn filtered_detection_implies_location_match(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed));
        let got = detect(&inst.delta, &inst.vul, &inst.fix).unwrap();
        prop_assert!(!got.detected || oracle_location_only(&inst));
    }

    #[test]
    fn more_fix_alerts_never_create_detection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r);
        let before = detect(&inst.delta, &inst.vul, &inst.fix).unwrap().detected;
        let mut grown = inst.fix.clone();
        grown.alerts.push(random_alert(&mut r, &FILES));
        let after = detect(&inst.delta, &inst.vul, &grown).unwrap().detected;
        prop_assert!(!after || before);
    }

    #[test]
    fn more_vulnerable_alerts_never_destroy_detection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r);
        let before = detect(&inst.delta, &inst.vul, &inst.fix).unwrap().detected;
        let mut grown = inst.vul.clone();
        grown.alerts.push(random_alert(&mut r, &FILES));
        let after = detect(&inst.delta, &grown, &inst.fix).unwrap().detected;
        prop_assert!(!before || after);
    }
}
