use proptest::prelude::*;
use sc_lab::generate::{random_layered_mdp, RandomMdpConfig};
use sc_lab::mdp::make_bandit;
use sc_lab::trust_region::{
    chi_squared, linear_improvement, taylor_remainder, trust_region_radius, verify_optimality,
    TrustRegionInstance,
};
use sc_lab::ConditioningAnalysis;

#[test]
fn two_arm_bandit_is_optimal_and_binding() {
    let (mdp, pi) = make_bandit(&[0.495, 0.505], &[0.5, 0.5]).unwrap();
    let r = verify_optimality(&mdp, &pi, 10_000, 1, 1e-9).unwrap();
    assert!(r.passed, "{r:?}");
    assert!((r.radius - 1e-4).abs() < 1e-15);
}

#[test]
fn deterministic_behavior_has_zero_radius() {
    let (mdp, pi) = make_bandit(&[0.3, 0.7], &[1.0, 0.0]).unwrap();
    let r = verify_optimality(&mdp, &pi, 1000, 1, 1e-9).unwrap();
    assert_eq!(r.radius, 0.0);
    assert_eq!(r.gap, 0.0);
    assert!(r.passed);
}

#[test]
fn five_state_instance_seed_seven() {
    let cfg = RandomMdpConfig {
        layers: 3..=3,
        width: 1..=1,
        ..RandomMdpConfig::default()
    };
    let (mdp, pi) = random_layered_mdp(&cfg, 7);
    assert_eq!(mdp.n_states(), 5);
    let r = verify_optimality(&mdp, &pi, 5000, 7, 1e-9).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn one_step_bandits_have_no_remainder() {
    let (mdp, pi) = make_bandit(&[0.2, 0.6, 0.9], &[0.3, 0.3, 0.4]).unwrap();
    let a = ConditioningAnalysis::compute(&mdp, &pi).unwrap();
    let rem = taylor_remainder(&mdp, &pi, &a.conditioned, &a.behavior_values).unwrap();
    assert!(rem.abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_and_radius_cross_checks(seed in 0u64..100_000) {
        let (mdp, pi) = random_layered_mdp(&RandomMdpConfig::default(), seed);
        let a = ConditioningAnalysis::compute(&mdp, &pi).unwrap();
        let occ = &a.behavior_occupancy;
        let l = linear_improvement(&mdp, &pi, &a.conditioned, &a.behavior_values, occ).unwrap();
        let radius = trust_region_radius(occ, &a.influence);
        prop_assert!((l - a.behavior_values.rho * radius).abs() <= 1e-10);
        let movement: f64 = mdp.non_terminal_states().iter()
            .map(|&s| occ.d_plus[s] * chi_squared(a.conditioned.row(s), pi.row(s)))
            .sum();
        prop_assert!((movement - radius).abs() <= 1e-10);
        // the remainder is self-checked against its second formula internally
        taylor_remainder(&mdp, &pi, &a.conditioned, &a.behavior_values).unwrap();
        let sc = TrustRegionInstance::success_conditioning(occ, &a.influence);
        prop_assert!((sc.constraint_value(&mdp, &pi, &a.conditioned) - radius).abs() <= 1e-10);
    }
}
