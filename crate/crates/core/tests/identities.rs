use sc_lab::dp::ConditioningAnalysis;
use sc_lab::generate::{random_layered_mdp, RandomMdpConfig};
use sc_lab::identities::{all_reports, exact_improvement, improvement_check, Tolerances};
use sc_lab::mdp::make_bandit;

#[test]
fn hundred_random_mdps_pass_every_suite() {
    for seed in 0..100 {
        let (mdp, pi) = random_layered_mdp(&RandomMdpConfig::default(), 1_000 + seed);
        let a = ConditioningAnalysis::compute(&mdp, &pi).unwrap();
        for r in all_reports(&a, &mdp, &pi, &Tolerances::default()).unwrap() {
            assert!(
                r.passed,
                "seed {seed}: {} max residual {:e}",
                r.name, r.max_residual
            );
        }
    }
}

#[test]
fn unchanged_policy_has_zero_improvement() {
    // equal arms: π₊ = π₀
    let (mdp, pi) = make_bandit(&[0.4, 0.4, 0.4], &[0.2, 0.3, 0.5]).unwrap();
    let r = exact_improvement(&mdp, &pi).unwrap();
    assert_eq!(r.checks[0].values, vec![0.0, 0.0]);
    let g = improvement_check(&mdp, &pi).unwrap();
    assert!(g.passed);
}

#[test]
fn reports_serialize_identically() {
    let (mdp, pi) = random_layered_mdp(&RandomMdpConfig::default(), 5);
    let json = || {
        let a = ConditioningAnalysis::compute(&mdp, &pi).unwrap();
        serde_json::to_string(&all_reports(&a, &mdp, &pi, &Tolerances::default()).unwrap()).unwrap()
    };
    assert_eq!(json(), json());
}
