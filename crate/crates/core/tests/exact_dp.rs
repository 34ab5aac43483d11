mod common;

use proptest::prelude::*;
use sc_lab::generate::{random_deterministic_mdp, random_layered_mdp, RandomMdpConfig};
use sc_lab::mdp::make_bandit;
use sc_lab::{
    action_influence, occupancy_pair, success_conditioned_policy, value_bundle, ConditioningAnalysis,
};

#[test]
fn every_corpus_output_matches_enumeration() {
    let corpus = common::enumerable_corpus();
    assert!(corpus.len() >= 150);
    for (name, mdp, pi) in &corpus {
        let worst = common::oracle_discrepancy(mdp, pi);
        assert!(worst <= 1e-10, "{name}: discrepancy {worst:e}");
    }
}

#[test]
fn ten_state_values_match_enumeration_tightly() {
    let cfg = RandomMdpConfig {
        layers: 4..=4,
        width: 2..=2,
        ..RandomMdpConfig::enumerable()
    };
    let (mdp, pi) = random_layered_mdp(&cfg, 3);
    assert_eq!(mdp.n_states(), 10);
    let o = common::oracle(&mdp, &pi);
    let values = value_bundle(&mdp, &pi).unwrap();
    let occ = occupancy_pair(&mdp, &pi, &values).unwrap();
    assert!(common::max_abs_diff(&values.v, &o.v) <= 1e-12);
    assert!(common::max_abs_diff(&occ.d_plus, &o.d_plus) <= 1e-12);
    let plus = success_conditioned_policy(&mdp, &pi, &values).unwrap();
    for &s in mdp.non_terminal_states() {
        assert!(common::max_abs_diff(plus.row(s), &o.conditioned[s]) <= 1e-12);
    }
}

#[test]
fn three_arm_influence_by_hand() {
    let (mdp, pi) = make_bandit(&[0.2, 0.8, 0.5], &[0.1, 0.6, 0.3]).unwrap();
    let values = value_bundle(&mdp, &pi).unwrap();
    let infl = action_influence(&mdp, &pi, &values).unwrap();
    // mean 0.65; second moment 0.1·0.04 + 0.6·0.64 + 0.3·0.25 = 0.463
    let expected = (0.463 - 0.65 * 0.65) / (0.65 * 0.65);
    assert!((infl.at(0) - expected).abs() < 1e-14);
    assert!((infl.alternate[0] - expected).abs() < 1e-14);
}

#[test]
fn deterministic_chain_values_and_visits() {
    let (mdp, _) = random_deterministic_mdp(&RandomMdpConfig::enumerable(), 0);
    let pi = sc_lab::Policy::uniform(&mdp);
    let values = value_bundle(&mdp, &pi).unwrap();
    let occ = occupancy_pair(&mdp, &pi, &values).unwrap();
    assert!((occ.d[0] - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bayes_consistency_support_and_conditioned_occupancy(seed in 0u64..100_000) {
        let (mdp, pi) = random_layered_mdp(&RandomMdpConfig::default(), seed);
        let a = ConditioningAnalysis::compute(&mdp, &pi).unwrap();
        let values = &a.behavior_values;
        for &s in mdp.non_terminal_states() {
            for (act, (&p0, &p1)) in pi.row(s).iter().zip(a.conditioned.row(s)).enumerate() {
                prop_assert!((p1 * values.v[s] - p0 * values.q[s][act]).abs() <= 1e-12);
                if p0 == 0.0 {
                    prop_assert_eq!(p1, 0.0);
                }
            }
            let lhs = values.rho * a.behavior_occupancy.d_plus[s];
            let rhs = values.v[s] * a.behavior_occupancy.d[s];
            prop_assert!((lhs - rhs).abs() <= 1e-10);
            let mean_adv: f64 = pi.row(s).iter().zip(&values.adv[s]).map(|(p, x)| p * x).sum();
            prop_assert!(mean_adv.abs() <= 1e-10);
            prop_assert!(a.influence.at(s) >= 0.0);
            if pi.is_deterministic_at(s) {
                prop_assert_eq!(a.influence.at(s), 0.0);
                prop_assert_eq!(a.conditioned.row(s), pi.row(s));
            }
        }
        let rho: f64 = mdp.initial_dist().iter().zip(&values.v).map(|(m, v)| m * v).sum();
        prop_assert!((rho - values.rho).abs() <= 1e-12);
    }
}
