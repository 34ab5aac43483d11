//! Brute-force trajectory enumeration: an oracle independent of the linear
//! solves in the library. Only usable on small acyclic instances.
#![allow(dead_code)]

use sc_lab::mdp::{Mdp, Policy};

/// (probability, state-action steps, success).
pub type WeightedPath = (f64, Vec<(usize, usize)>, bool);

/// Every trajectory with positive probability.
pub struct Enumeration {
    pub paths: Vec<WeightedPath>,
}

const MAX_DEPTH: usize = 64;

fn walk(
    mdp: &Mdp,
    policy: &Policy,
    s: usize,
    prob: f64,
    prefix: &mut Vec<(usize, usize)>,
    out: &mut Vec<WeightedPath>,
) {
    if mdp.is_terminal(s) {
        out.push((prob, prefix.clone(), mdp.is_success(s)));
        return;
    }
    assert!(prefix.len() < MAX_DEPTH, "enumeration needs a finite horizon");
    for (a, &pa) in policy.row(s).iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (t, &pt) in mdp.transition(s, a).iter().enumerate() {
            if pt == 0.0 {
                continue;
            }
            prefix.push((s, a));
            walk(mdp, policy, t, prob * pa * pt, prefix, out);
            prefix.pop();
        }
    }
}

impl Enumeration {
    /// Trajectories started from the initial distribution.
    pub fn from_initial(mdp: &Mdp, policy: &Policy) -> Self {
        let mut paths = Vec::new();
        for (s, &p0) in mdp.initial_dist().iter().enumerate() {
            if p0 > 0.0 {
                walk(mdp, policy, s, p0, &mut Vec::new(), &mut paths);
            }
        }
        Self { paths }
    }

    /// Trajectories started at `s`, with the first action forced when given.
    pub fn from_state(mdp: &Mdp, policy: &Policy, s: usize, first: Option<usize>) -> Self {
        let mut paths = Vec::new();
        match first {
            None => walk(mdp, policy, s, 1.0, &mut Vec::new(), &mut paths),
            Some(a) => {
                for (t, &pt) in mdp.transition(s, a).iter().enumerate() {
                    if pt > 0.0 {
                        walk(mdp, policy, t, pt, &mut vec![(s, a)], &mut paths);
                    }
                }
            }
        }
        Self { paths }
    }

    pub fn success_probability(&self) -> f64 {
        self.paths.iter().filter(|p| p.2).map(|p| p.0).sum()
    }

    /// Expected visits to each state, optionally restricted to successes.
    pub fn visits(&self, n: usize, successes_only: bool) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for (p, path, ok) in &self.paths {
            if successes_only && !ok {
                continue;
            }
            for &(s, _) in path {
                d[s] += p;
            }
        }
        d
    }

    /// Expected visits to each (state, action) among successes.
    pub fn success_pair_visits(&self, mdp: &Mdp) -> Vec<Vec<f64>> {
        let mut c: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| vec![0.0; mdp.n_actions(s)]).collect();
        for (p, path, ok) in &self.paths {
            if *ok {
                for &(s, a) in path {
                    c[s][a] += p;
                }
            }
        }
        c
    }

    pub fn max_length(&self) -> usize {
        self.paths.iter().map(|p| p.1.len()).max().unwrap_or(0)
    }
}

/// Everything the exact solver produces, recomputed by enumeration.
pub struct OracleTables {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub rho: f64,
    pub d: Vec<f64>,
    pub d_plus: Vec<f64>,
    /// Conditional action frequencies among successful trajectories; NaN at unvisited states.
    pub conditioned: Vec<Vec<f64>>,
    pub influence: Vec<f64>,
}

pub fn oracle(mdp: &Mdp, policy: &Policy) -> OracleTables {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut q: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in 0..n {
        if mdp.is_terminal(s) {
            v[s] = if mdp.is_success(s) { 1.0 } else { 0.0 };
            continue;
        }
        v[s] = Enumeration::from_state(mdp, policy, s, None).success_probability();
        q[s] = (0..mdp.n_actions(s))
            .map(|a| Enumeration::from_state(mdp, policy, s, Some(a)).success_probability())
            .collect();
    }
    let all = Enumeration::from_initial(mdp, policy);
    let rho = all.success_probability();
    let d = all.visits(n, false);
    let d_plus: Vec<f64> = all.visits(n, true).iter().map(|x| x / rho).collect();
    let pairs = all.success_pair_visits(mdp);
    let conditioned = pairs
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().map(|c| c / total).collect()
        })
        .collect();
    let influence = (0..n)
        .map(|s| {
            if mdp.is_terminal(s) {
                return 0.0;
            }
            let pi = policy.row(s);
            let mean: f64 = pi.iter().zip(&q[s]).map(|(p, q)| p * q).sum();
            let var: f64 = pi
                .iter()
                .zip(&q[s])
                .map(|(p, q)| p * (q - mean) * (q - mean))
                .sum();
            var / (mean * mean)
        })
        .collect();
    OracleTables {
        v,
        q,
        rho,
        d,
        d_plus,
        conditioned,
        influence,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Small acyclic instances: ≤ 12 states, horizon ≤ 8.
pub fn enumerable_corpus() -> Vec<(String, Mdp, Policy)> {
    use sc_lab::generate::{random_deterministic_mdp, random_layered_mdp, RandomMdpConfig};
    use sc_lab::mdp::make_bandit;

    let mut corpus = Vec::new();
    for (name, probs, weights) in [
        ("two-arm bandit", vec![0.495, 0.505], vec![0.5, 0.5]),
        ("three-arm bandit", vec![0.2, 0.8, 0.5], vec![0.1, 0.6, 0.3]),
        ("single arm", vec![1.0], vec![1.0]),
        ("point-mass behavior", vec![0.3, 0.7], vec![0.0, 1.0]),
    ] {
        let (mdp, pi) = make_bandit(&probs, &weights).unwrap();
        corpus.push((name.to_string(), mdp, pi));
    }
    let cfg = RandomMdpConfig::enumerable();
    for seed in 0..100 {
        let (mdp, pi) = random_layered_mdp(&cfg, seed);
        corpus.push((format!("layered seed {seed}"), mdp, pi));
    }
    for seed in 0..50 {
        let (mdp, pi) = random_deterministic_mdp(&cfg, seed);
        corpus.push((format!("deterministic seed {seed}"), mdp, pi));
    }
    corpus
        .into_iter()
        .filter(|(_, mdp, pi)| mdp.n_states() <= 12 && Enumeration::from_initial(mdp, pi).max_length() <= 8)
        .collect()
}

/// Largest discrepancy between the exact solver and enumeration across
/// V, Q, ρ, d, d⁺, π₊ (at visited states) and ℐ.
pub fn oracle_discrepancy(mdp: &Mdp, pi: &Policy) -> f64 {
    let o = oracle(mdp, pi);
    let values = sc_lab::value_bundle(mdp, pi).unwrap();
    let occ = sc_lab::occupancy_pair(mdp, pi, &values).unwrap();
    let plus = sc_lab::success_conditioned_policy(mdp, pi, &values).unwrap();
    let infl = sc_lab::action_influence(mdp, pi, &values).unwrap();
    let mut worst = max_abs_diff(&values.v, &o.v)
        .max((values.rho - o.rho).abs())
        .max(max_abs_diff(&occ.d, &o.d))
        .max(max_abs_diff(&occ.d_plus, &o.d_plus))
        .max(max_abs_diff(&infl.values, &o.influence));
    for &s in mdp.non_terminal_states() {
        worst = worst.max(max_abs_diff(&values.q[s], &o.q[s]));
        if o.d_plus[s] > 0.0 {
            worst = worst.max(max_abs_diff(plus.row(s), &o.conditioned[s]));
        }
    }
    worst
}
