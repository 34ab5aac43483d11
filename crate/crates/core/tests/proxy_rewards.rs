use sc_lab::dp;
use sc_lab::generate::{random_layered_mdp, RandomMdpConfig};
use sc_lab::mdp::make_bandit;
use sc_lab::proxy_rewards::{
    bernoulli_label, decompose_state, default_thetas, proxy_conditioned_policy, proxy_decomposition,
    threshold_reward, threshold_sweep, BetaArm, BetaBandit, BetaBanditConfig,
};
use sc_lab::sampling::{Episode, TrajectorySet};
use sc_lab::special::beta_tail;

fn constant_returns(n: usize, y: f64) -> TrajectorySet {
    TrajectorySet {
        episodes: (0..n as u64)
            .map(|i| Episode {
                stream: i,
                states: vec![0, 1],
                actions: vec![0],
                success: false,
                ret: Some(y),
            })
            .collect(),
        seed: 0,
        policy_id: "constant".into(),
    }
}

#[test]
fn bernoulli_labels_match_return_in_mean() {
    let n = 100_000;
    assert_eq!(
        bernoulli_label(&constant_returns(100, 0.0), 1)
            .unwrap()
            .success_count(),
        0
    );
    let labelled = bernoulli_label(&constant_returns(n, 0.3), 1).unwrap();
    let f = labelled.success_count() as f64 / n as f64;
    assert!((f - 0.3).abs() < 3.0 * (0.21 / n as f64).sqrt(), "{f}");
}

#[test]
fn faithful_reduction_preserves_expected_return() {
    let bandit = BetaBandit::from_config(&BetaBanditConfig::default()).unwrap();
    let set = bandit.sample(100_000, 9).unwrap();
    let ys: Vec<f64> = set.episodes.iter().map(|e| e.ret.unwrap()).collect();
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let labelled = bernoulli_label(&set, 10).unwrap();
    let mean_r = labelled.success_count() as f64 / ys.len() as f64;
    let sigma = (mean_y * (1.0 - mean_y) / ys.len() as f64).sqrt();
    assert!((mean_r - mean_y).abs() <= 4.0 * sigma);
}

#[test]
fn threshold_fraction_matches_beta_tail() {
    for arm in [
        BetaArm {
            alpha: 18.0,
            beta: 2.0,
        },
        BetaArm {
            alpha: 0.4,
            beta: 0.4,
        },
    ] {
        let bandit = BetaBandit {
            arms: vec![arm],
            behavior: vec![1.0],
        };
        let n = 100_000;
        let set = threshold_reward(&bandit.sample(n, 21).unwrap(), 0.5).unwrap();
        let p = beta_tail(0.5, arm.alpha, arm.beta).unwrap();
        let f = set.success_count() as f64 / n as f64;
        assert!(
            (f - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "{arm:?}: {f} vs {p}"
        );
    }
}

#[test]
fn threshold_extremes() {
    let bandit = BetaBandit::from_config(&BetaBanditConfig::default()).unwrap();
    let set = bandit.sample(1000, 2).unwrap();
    assert_eq!(threshold_reward(&set, 0.0).unwrap().success_count(), 1000);
    assert_eq!(threshold_reward(&set, 1.0).unwrap().success_count(), 0);
}

#[test]
fn zero_threshold_leaves_behavior_unchanged() {
    let bandit = BetaBandit::from_config(&BetaBanditConfig::default()).unwrap();
    let (mdp, pi) = make_bandit(&bandit.means(), &bandit.behavior).unwrap();
    let q = vec![bandit.threshold_q(0.0).unwrap(), vec![], vec![]];
    let tilde = proxy_conditioned_policy(&mdp, &pi, &q).unwrap();
    for (a, b) in tilde.row(0).iter().zip(pi.row(0)) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn beta_bandit_decomposition_at_point_eight() {
    let bandit = BetaBandit::from_config(&BetaBanditConfig::default()).unwrap();
    let r = decompose_state(
        0,
        &bandit.behavior,
        &bandit.means(),
        &bandit.threshold_q(0.8).unwrap(),
    )
    .unwrap();
    assert!(r.residual <= 1e-10, "{r:?}");
}

#[test]
fn swapped_terminals_give_a_valid_mdp_proxy() {
    // proxy: success and failure terminals swapped, blended with a nonlinear
    // function of the true values so alignment is neither 1 nor -1
    for seed in 0..30 {
        let (mdp, pi) = random_layered_mdp(&RandomMdpConfig::default(), seed);
        let values = dp::value_bundle(&mdp, &pi).unwrap();
        let n = mdp.n_states();
        let swapped = mdp.with_success_set(vec![n - 1]).unwrap();
        let swapped_q = dp::value_bundle(&swapped, &pi).unwrap().q;
        let proxy_q: Vec<Vec<f64>> = swapped_q
            .iter()
            .zip(&values.q)
            .map(|(f, q)| f.iter().zip(q).map(|(f, q)| 0.5 * f + 0.4 * q * q).collect())
            .collect();
        let report = proxy_decomposition(&mdp, &pi, &values, &proxy_q).unwrap();
        assert!(report.passed(), "seed {seed}: {:e}", report.max_residual);
    }
}

#[test]
fn alignment_degrades_at_the_top_of_the_grid() {
    let rows = threshold_sweep(&BetaBanditConfig::default(), &default_thetas()).unwrap();
    let best = rows
        .iter()
        .filter(|r| r.alignment.is_finite())
        .map(|r| r.alignment)
        .fold(f64::NEG_INFINITY, f64::max);
    let last = rows.last().unwrap();
    assert_eq!(last.theta, 0.999);
    assert!(last.alignment < best);
    assert!(rows[0].proxy_improvement.abs() < 1e-15);
}
