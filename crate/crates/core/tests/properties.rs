mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn partition_structure(c in partition_case()) {
        partition_laws(&c)?;
    }

    #[test]
    fn bridge_monotone_and_normalized(c in bridge_case()) {
        bridge_laws(&c)?;
    }

    #[test]
    fn hierarchy_conserves_mass(c in hierarchy_case()) {
        hierarchy_laws(&c)?;
    }

    #[test]
    fn rng_streams_are_deterministic(seed in any::<u64>(), stream in any::<u64>()) {
        rng_laws(seed, stream)?;
    }
}
