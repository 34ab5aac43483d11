//! Seeded random instances: layered DAG MDPs, deterministic-transition MDPs
//! and bandits with a proxy success criterion.
//!
//! States are numbered layer by layer; the last two indices are the success
//! and failure terminals. Every non-terminal state can reach success under
//! the generated behavior policy, so instances always pass validation.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::mdp::{Mdp, MdpSpec, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdpConfig {
    pub layers: RangeInclusive<usize>,
    pub width: RangeInclusive<usize>,
    pub actions: RangeInclusive<usize>,
    /// Probability that a state's behavior row is a point mass.
    pub deterministic_fraction: f64,
    /// Range of the mass each non-final-layer row sends straight to a terminal.
    pub leak: (f64, f64),
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self {
            layers: 2..=6,
            width: 1..=5,
            actions: 2..=4,
            deterministic_fraction: 0.1,
            leak: (0.05, 0.4),
        }
    }
}

impl RandomMdpConfig {
    /// At most 10 states including the two terminals.
    pub fn small() -> Self {
        Self {
            layers: 2..=4,
            width: 1..=2,
            ..Self::default()
        }
    }

    /// At most 12 states and horizon 5: cheap to enumerate exhaustively.
    pub fn enumerable() -> Self {
        Self {
            layers: 1..=5,
            width: 1..=2,
            actions: 2..=3,
            ..Self::default()
        }
    }

    /// Upper bound on the number of states (terminals included).
    pub fn max_states(&self) -> usize {
        self.layers.end() * self.width.end() + 2
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn exponentials(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn behavior_row(rng: &mut ChaCha8Rng, k: usize, deterministic_fraction: f64) -> Vec<f64> {
    if rng.random::<f64>() < deterministic_fraction {
        let mut row = vec![0.0; k];
        row[rng.random_range(0..k)] = 1.0;
        row
    } else {
        exponentials(rng, k)
    }
}

fn layer_sizes(rng: &mut ChaCha8Rng, config: &RandomMdpConfig) -> Vec<usize> {
    let n_layers = rng.random_range(config.layers.clone());
    (0..n_layers)
        .map(|_| rng.random_range(config.width.clone()))
        .collect()
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, &w| {
            let start = *acc;
            *acc += w;
            Some(start)
        })
        .collect()
}

/// Layered DAG with stochastic transitions and a stochastic initial layer.
pub fn random_layered_mdp(config: &RandomMdpConfig, seed: u64) -> (Mdp, Policy) {
    let mut rng = rng(seed);
    let sizes = layer_sizes(&mut rng, config);
    let offsets = layer_offsets(&sizes);
    let n_inner: usize = sizes.iter().sum();
    let n = n_inner + 2;
    let (success, failure) = (n_inner, n_inner + 1);

    let mut actions = vec![0; n];
    let mut transition = vec![Vec::new(); n];
    let mut behavior = vec![Vec::new(); n];
    for (layer, (&start, &width)) in offsets.iter().zip(&sizes).enumerate() {
        let last = layer + 1 == sizes.len();
        for s in start..start + width {
            let k = rng.random_range(config.actions.clone());
            actions[s] = k;
            transition[s] = (0..k)
                .map(|_| {
                    let mut row = vec![0.0; n];
                    let leak = if last {
                        1.0
                    } else {
                        rng.random_range(config.leak.0..=config.leak.1)
                    };
                    let split = exponentials(&mut rng, 2);
                    row[success] = leak * split[0];
                    row[failure] = leak * split[1];
                    if !last {
                        let next_start = offsets[layer + 1];
                        let next = exponentials(&mut rng, sizes[layer + 1]);
                        for (j, w) in next.into_iter().enumerate() {
                            row[next_start + j] = (1.0 - leak) * w;
                        }
                    }
                    row
                })
                .collect();
            behavior[s] = behavior_row(&mut rng, k, config.deterministic_fraction);
        }
    }

    let mut initial = vec![0.0; n];
    for (j, w) in exponentials(&mut rng, sizes[0]).into_iter().enumerate() {
        initial[j] = w;
    }

    let mdp = Mdp::new(MdpSpec {
        n_states: n,
        actions_per_state: actions,
        transition,
        initial_dist: initial,
        terminal_success: vec![success],
        terminal_failure: vec![failure],
    })
    .expect("generated MDP is well formed");
    let policy = Policy::new(behavior).expect("generated policy is well formed");
    (mdp, policy)
}

/// Layered DAG where every action leads to exactly one next state, started
/// from a single state (a token-append style process).
pub fn random_deterministic_mdp(config: &RandomMdpConfig, seed: u64) -> (Mdp, Policy) {
    let mut rng = rng(seed);
    let mut sizes = layer_sizes(&mut rng, config);
    sizes[0] = 1;
    let offsets = layer_offsets(&sizes);
    let n_inner: usize = sizes.iter().sum();
    let n = n_inner + 2;
    let (success, failure) = (n_inner, n_inner + 1);

    let mut actions = vec![0; n];
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut behavior = vec![Vec::new(); n];
    for (layer, (&start, &width)) in offsets.iter().zip(&sizes).enumerate() {
        let last = layer + 1 == sizes.len();
        for s in start..start + width {
            let k = rng.random_range(config.actions.clone());
            actions[s] = k;
            targets[s] = (0..k)
                .map(|_| {
                    if !last && rng.random::<f64>() < 0.8 {
                        offsets[layer + 1] + rng.random_range(0..sizes[layer + 1])
                    } else if rng.random::<bool>() {
                        success
                    } else {
                        failure
                    }
                })
                .collect();
            behavior[s] = behavior_row(&mut rng, k, config.deterministic_fraction);
        }
    }
    // backward pass: every state keeps a behavior-supported action that can still succeed
    let mut can_succeed = vec![false; n];
    can_succeed[success] = true;
    for s in (0..n_inner).rev() {
        let supported = |a: &usize| behavior[s][*a] > 0.0;
        if !(0..actions[s])
            .filter(supported)
            .any(|a| can_succeed[targets[s][a]])
        {
            let a = (0..actions[s]).find(supported).expect("behavior row has support");
            targets[s][a] = success;
        }
        can_succeed[s] = true;
    }
    let transition = targets
        .iter()
        .map(|row_targets| {
            row_targets
                .iter()
                .map(|&t| {
                    let mut row = vec![0.0; n];
                    row[t] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;

    let mdp = Mdp::new(MdpSpec {
        n_states: n,
        actions_per_state: actions,
        transition,
        initial_dist: initial,
        terminal_success: vec![success],
        terminal_failure: vec![failure],
    })
    .expect("generated MDP is well formed");
    let policy = Policy::new(behavior).expect("generated policy is well formed");
    (mdp, policy)
}

/// A bandit with per-arm true and proxy success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProxyBandit {
    pub behavior: Vec<f64>,
    pub success_probs: Vec<f64>,
    pub proxy_probs: Vec<f64>,
}

pub fn random_proxy_bandit(seed: u64) -> RandomProxyBandit {
    let mut rng = rng(seed);
    let k = rng.random_range(2..=8);
    RandomProxyBandit {
        behavior: exponentials(&mut rng, k),
        success_probs: (0..k).map(|_| rng.random_range(0.01..0.99)).collect(),
        proxy_probs: (0..k).map(|_| rng.random_range(0.01..0.99)).collect(),
    }
}
