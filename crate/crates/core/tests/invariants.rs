mod common;

use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn reservoir_keeps_its_size(seed in any::<u64>(), kind in kind_strategy(), drift in 0.0..0.08f64) {
        reservoir_size_constancy(seed, kind, drift)?;
    }

    #[test]
    fn adaptation_ignores_ground_truth(seed in any::<u64>(), kind in kind_strategy(), scramble in any::<u64>()) {
        pseudo_label_only(seed, kind, scramble)?;
    }

    #[test]
    fn injected_faults_are_realistic(
        seed in any::<u64>(),
        n_sensors in 1usize..6,
        per_sensor in 1usize..5,
        events in prop::collection::vec((0usize..200, prop::option::of(0usize..40), any::<bool>()), 0..6),
    ) {
        fault_realism(seed, n_sensors, per_sensor, events)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn runs_replay_bit_identically(seed in any::<u64>(), kind in kind_strategy(), run in 0usize..100) {
        seed_determinism(seed, kind, run)?;
    }

    #[test]
    fn repairs_never_overlap(seed in any::<u64>(), kind in kind_strategy(), zero in any::<bool>()) {
        sequential_repair_safety(seed, kind, zero)?;
    }
}
