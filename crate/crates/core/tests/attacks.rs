use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use vldp_core::adversary::{simulate_attacks, AttackKind, AttackSpec, Collection, GainReport};
use vldp_core::group::GroupParams;
use vldp_core::ldp::MechanismKind;
use vldp_core::protocol::{SessionConfig, SessionPlan};

const D: u64 = 10;

fn specs(beta: f64) -> Vec<AttackSpec> {
    AttackKind::ALL.iter().map(|&k| AttackSpec::new(k, vec![3], beta).unwrap()).collect()
}

fn gains(kind: MechanismKind, n: usize, collection: Collection<'_>, seed: u64) -> [GainReport; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let honest = vec![1.0; D as usize];
    let mut g = simulate_attacks(&specs(0.05), &kind, &honest, n, collection, &mut rng).unwrap();
    let (mga, ria, rpa) = (g.pop().unwrap(), g.pop().unwrap(), g.pop().unwrap());
    [rpa, ria, mga]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Output manipulation beats input manipulation on plain collections.
    #[test]
    fn plain_gains_are_ordered(seed in any::<u64>(), mech in 0usize..3) {
        let kind = [
            MechanismKind::Krr { d: D, epsilon: 1.0 },
            MechanismKind::Oue { d: D, epsilon: 1.0 },
            MechanismKind::Olh { d: D, epsilon: 1.0, range: 3 },
        ][mech];
        let [rpa, ria, mga] = gains(kind, 20_000, Collection::Plain, seed);
        prop_assert!(mga.empirical_gain > ria.empirical_gain);
        prop_assert!(mga.empirical_gain > rpa.empirical_gain);
        // for OUE with one target RPA and RIA have the same expectation
        if mech != 1 {
            prop_assert!(ria.empirical_gain > rpa.empirical_gain);
        }
        for g in [&rpa, &ria, &mga] {
            prop_assert_eq!(g.halt_rate, 0.0);
        }
    }
}

#[test]
fn secure_collection_halts_output_manipulation_and_accepts_input_manipulation() {
    let group = Arc::new(GroupParams::generate(56, 64, &mut ChaCha20Rng::seed_from_u64(2)).unwrap());
    for (kind, width) in [
        (MechanismKind::Krr { d: D, epsilon: 1.0 }, 11),
        (MechanismKind::Oue { d: D, epsilon: 1.0 }, 6),
        (MechanismKind::Olh { d: D, epsilon: 1.0, range: 3 }, 11),
    ] {
        let plan = SessionPlan::new(SessionConfig::new(kind, width), group.clone()).unwrap();
        let [rpa, ria, mga] = gains(kind, 1_000, Collection::Secure(&plan), 5);
        for g in [&rpa, &ria, &mga] {
            assert_eq!(g.genuine_halts, 0);
            assert_eq!(g.attackers, 53);
        }
        assert_eq!(mga.halt_rate, 1.0, "{kind:?}");
        assert_eq!(rpa.halt_rate, 1.0, "{kind:?}");
        assert_eq!(mga.empirical_gain, 0.0);
        assert_eq!(ria.halt_rate, 0.0);
        assert!(ria.empirical_gain.abs() < 0.2, "{kind:?} {ria:?}");
    }
}
