//! Exact dynamic programming for success probabilities.
//!
//! Values are success probabilities: `V(s) = P(R = 1 | S_t = s)` with
//! boundary values 1 on success terminals and 0 on failure terminals.
//! Occupancies are expected visit counts per episode (unnormalized) and are
//! zero on terminal states.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mdp::{Mdp, Policy};

/// Per-equation residual allowed on the value and occupancy solves.
pub const SOLVE_TOLERANCE: f64 = 1e-12;

/// V, Q, advantage and overall success probability of a policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueBundle {
    /// Success probability from every state (terminals included).
    pub v: Vec<f64>,
    /// `q[s][a]`; empty rows at terminal states.
    pub q: Vec<Vec<f64>>,
    /// `adv[s][a] = q[s][a] - v[s]`.
    pub adv: Vec<Vec<f64>>,
    pub rho: f64,
}

/// Unconditioned and success-conditioned expected visit counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyPair {
    pub d: Vec<f64>,
    pub d_plus: Vec<f64>,
}

/// Action-influence at every state (zero at terminals).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceProfile {
    /// Squared coefficient of variation of `Q(s, ·)` under the behavior draw.
    pub values: Vec<f64>,
    /// `E[(A(s,a) / V(s))²]`, the alternate form.
    pub alternate: Vec<f64>,
}

impl InfluenceProfile {
    pub fn at(&self, s: usize) -> f64 {
        self.values[s]
    }
}

fn compact_to_full(mdp: &Mdp, compact: &[f64], terminal_value: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| match mdp.compact_index(s) {
            Some(i) => compact[i],
            None => terminal_value(s),
        })
        .collect()
}

fn i_minus(p: &Matrix) -> Matrix {
    let mut a = Matrix::identity(p.dim());
    for i in 0..p.dim() {
        for j in 0..p.dim() {
            a[(i, j)] -= p[(i, j)];
        }
    }
    a
}

/// Solves `V = P_π V` on non-terminal states with terminal boundary values.
pub fn value_bundle(mdp: &Mdp, policy: &Policy) -> Result<ValueBundle> {
    mdp.check_policy(policy)?;
    let p = mdp.sub_stochastic_matrix(policy);
    let b: Vec<f64> = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| {
            policy
                .row(s)
                .iter()
                .enumerate()
                .map(|(a, &pa)| pa * mdp.immediate_success(s, a))
                .sum()
        })
        .collect();
    let (v_compact, residual) = linalg::solve(&i_minus(&p), &b)?;
    if residual > SOLVE_TOLERANCE {
        return Err(Error::SolverFailure(format!(
            "value residual {residual:e} exceeds {SOLVE_TOLERANCE:e}"
        )));
    }
    // Rounding can push probabilities a few ulps outside [0, 1].
    let v = compact_to_full(mdp, &v_compact, |s| if mdp.is_success(s) { 1.0 } else { 0.0 })
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0))
        .collect::<Vec<_>>();

    let mut q = vec![Vec::new(); mdp.n_states()];
    let mut adv = vec![Vec::new(); mdp.n_states()];
    for &s in mdp.non_terminal_states() {
        q[s] = (0..mdp.n_actions(s))
            .map(|a| mdp.transition(s, a).iter().zip(&v).map(|(p, v)| p * v).sum())
            .collect();
        adv[s] = q[s].iter().map(|qa| qa - v[s]).collect();
        let mean_adv: f64 = policy.row(s).iter().zip(&adv[s]).map(|(p, a)| p * a).sum();
        if mean_adv.abs() > 1e-10 {
            return Err(Error::ConsistencyCheck {
                check: "mean advantage under the evaluated policy",
                residual: mean_adv.abs(),
                tolerance: 1e-10,
            });
        }
    }
    let rho = mdp.initial_dist().iter().zip(&v).map(|(m, v)| m * v).sum();
    Ok(ValueBundle { v, q, adv, rho })
}

/// Solves `d = μ + P_πᵀ d` and applies `d⁺(s) = V(s)·d(s)/ρ`.
pub fn occupancy_pair(mdp: &Mdp, policy: &Policy, values: &ValueBundle) -> Result<OccupancyPair> {
    let d = occupancy(mdp, policy)?;
    if values.rho <= 0.0 {
        return Err(Error::DivisionByZero);
    }
    let d_plus = d.iter().zip(&values.v).map(|(d, v)| v * d / values.rho).collect();
    Ok(OccupancyPair { d, d_plus })
}

/// Expected visit counts per episode under `policy`.
pub fn occupancy(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let p = mdp.sub_stochastic_matrix(policy);
    let mu: Vec<f64> = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| mdp.initial_dist()[s])
        .collect();
    let (d_compact, residual) = linalg::solve(&i_minus(&p.transpose()), &mu)?;
    if residual > SOLVE_TOLERANCE {
        return Err(Error::SolverFailure(format!(
            "occupancy residual {residual:e} exceeds {SOLVE_TOLERANCE:e}"
        )));
    }
    Ok(compact_to_full(mdp, &d_compact, |_| 0.0)
        .into_iter()
        .map(|x| x.max(0.0))
        .collect())
}

fn require_positive_values(mdp: &Mdp, values: &ValueBundle) -> Result<()> {
    let bad: Vec<usize> = mdp
        .non_terminal_states()
        .iter()
        .copied()
        .filter(|&s| values.v[s] <= 0.0)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::SuccessUnreachable(bad))
    }
}

/// Bayes posterior `π₊(a|s) = π₀(a|s)·Q(s,a)/V(s)`.
///
/// Rows are checked to sum to one within 1e-12 and never renormalized.
/// Rows where π₀ is a point mass are copied unchanged.
pub fn success_conditioned_policy(mdp: &Mdp, behavior: &Policy, values: &ValueBundle) -> Result<Policy> {
    mdp.check_policy(behavior)?;
    require_positive_values(mdp, values)?;
    let rows = (0..mdp.n_states())
        .map(|s| {
            // a point mass is its own posterior; V = Q there only up to rounding
            if behavior.is_deterministic_at(s) {
                return behavior.row(s).to_vec();
            }
            behavior
                .row(s)
                .iter()
                .zip(&values.q[s])
                .map(|(p, q)| p * q / values.v[s])
                .collect()
        })
        .collect();
    Policy::new(rows)
}

/// Squared coefficient of variation of `Q(s, ·)` over the behavior action draw.
pub fn action_influence(mdp: &Mdp, behavior: &Policy, values: &ValueBundle) -> Result<InfluenceProfile> {
    mdp.check_policy(behavior)?;
    require_positive_values(mdp, values)?;
    let n = mdp.n_states();
    let mut direct = vec![0.0; n];
    let mut alternate = vec![0.0; n];
    for &s in mdp.non_terminal_states() {
        let pi = behavior.row(s);
        let vs = values.v[s];
        alternate[s] = pi
            .iter()
            .zip(&values.adv[s])
            .map(|(p, a)| p * (a / vs) * (a / vs))
            .sum();
        if behavior.is_deterministic_at(s) {
            continue;
        }
        let q = &values.q[s];
        let mean: f64 = pi.iter().zip(q).map(|(p, q)| p * q).sum();
        let var: f64 = pi.iter().zip(q).map(|(p, q)| p * (q - mean) * (q - mean)).sum();
        direct[s] = var / (mean * mean);
        let gap = (direct[s] - alternate[s]).abs();
        let tol = 1e-12 * direct[s].max(1.0);
        if gap > tol {
            return Err(Error::ConsistencyCheck {
                check: "action-influence alternate form",
                residual: gap,
                tolerance: tol,
            });
        }
    }
    Ok(InfluenceProfile {
        values: direct,
        alternate,
    })
}

/// Every exact object for one behavior policy and its success-conditioned update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningAnalysis {
    pub behavior_values: ValueBundle,
    pub behavior_occupancy: OccupancyPair,
    pub influence: InfluenceProfile,
    /// π₊.
    pub conditioned: Policy,
    pub conditioned_values: ValueBundle,
    pub conditioned_occupancy: OccupancyPair,
}

impl ConditioningAnalysis {
    pub fn compute(mdp: &Mdp, behavior: &Policy) -> Result<Self> {
        let values = value_bundle(mdp, behavior)?;
        let conditioned = success_conditioned_policy(mdp, behavior, &values)?;
        Self::assemble(mdp, behavior, values, conditioned)
    }

    /// Uses the supplied policy in place of π₊; the behavior-side objects are
    /// computed as usual. Intended for fault injection in verification runs.
    pub fn with_conditioned(mdp: &Mdp, behavior: &Policy, conditioned: Policy) -> Result<Self> {
        mdp.check_policy(&conditioned)?;
        let values = value_bundle(mdp, behavior)?;
        Self::assemble(mdp, behavior, values, conditioned)
    }

    fn assemble(
        mdp: &Mdp,
        behavior: &Policy,
        behavior_values: ValueBundle,
        conditioned: Policy,
    ) -> Result<Self> {
        let behavior_occupancy = occupancy_pair(mdp, behavior, &behavior_values)?;
        let influence = action_influence(mdp, behavior, &behavior_values)?;
        let conditioned_values = value_bundle(mdp, &conditioned)?;
        let conditioned_occupancy = occupancy_pair(mdp, &conditioned, &conditioned_values)?;
        Ok(Self {
            behavior_values,
            behavior_occupancy,
            influence,
            conditioned,
            conditioned_values,
            conditioned_occupancy,
        })
    }
}
