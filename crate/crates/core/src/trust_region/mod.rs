//! First-order policy improvement, its remainder, and the trust region that
//! success conditioning solves exactly.
//!
//! The generic problem is
//!
//! ```text
//! maximize  L(π) = Σ_s d_{π₀}(s) Σ_a π(a|s) A_{π₀}(s,a)
//! subject to  Σ_s w(s) D(π(·|s) ; π₀(·|s)) ≤ Γ
//! ```
//!
//! Success conditioning corresponds to `w = d⁺_{π₀}`, `D = χ²` and
//! `Γ = Σ_s d⁺_{π₀}(s) ℐ(s)`; TRPO and MDPO use `w = d_{π₀}` with reverse and
//! forward KL.

pub mod divergence;
pub mod tolerance;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::dp::{self, InfluenceProfile, OccupancyPair, ValueBundle};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};

pub use divergence::{chi_squared, chi_squared_variance_form, forward_kl, reverse_kl, DivergenceKind};
pub use tolerance::rare_action_tolerance;

/// A concrete instance of the weighted-divergence trust region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrustRegionInstance {
    pub weights: Vec<f64>,
    pub kind: DivergenceKind,
    pub radius: f64,
}

impl TrustRegionInstance {
    pub fn new(weights: Vec<f64>, kind: DivergenceKind, radius: f64) -> Result<Self> {
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "trust-region weights must be nonnegative".into(),
            ));
        }
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        Ok(Self {
            weights,
            kind,
            radius,
        })
    }

    /// The instance solved by success conditioning.
    pub fn success_conditioning(occ: &OccupancyPair, influence: &InfluenceProfile) -> Self {
        Self {
            weights: occ.d_plus.clone(),
            kind: DivergenceKind::Chi2,
            radius: trust_region_radius(occ, influence),
        }
    }

    /// TRPO's reverse-KL region weighted by the behavior occupancy.
    pub fn trpo(occ: &OccupancyPair, radius: f64) -> Result<Self> {
        Self::new(occ.d.clone(), DivergenceKind::ReverseKl, radius)
    }

    /// MDPO's forward-KL region weighted by the behavior occupancy.
    pub fn mdpo(occ: &OccupancyPair, radius: f64) -> Result<Self> {
        Self::new(occ.d.clone(), DivergenceKind::ForwardKl, radius)
    }

    /// `Σ_s w(s) D(candidate(·|s) ; behavior(·|s))`.
    pub fn constraint_value(&self, mdp: &Mdp, behavior: &Policy, candidate: &Policy) -> f64 {
        mdp.non_terminal_states()
            .iter()
            .filter(|&&s| self.weights[s] > 0.0)
            .map(|&s| self.weights[s] * self.kind.eval(candidate.row(s), behavior.row(s)))
            .sum()
    }

    pub fn is_feasible(&self, mdp: &Mdp, behavior: &Policy, candidate: &Policy) -> bool {
        self.constraint_value(mdp, behavior, candidate) <= self.radius
    }
}

/// `A_{π₀}(s, π) = E_{a~π(·|s)} A_{π₀}(s, a)`.
pub fn mean_advantage(values: &ValueBundle, candidate: &Policy, s: usize) -> f64 {
    candidate
        .row(s)
        .iter()
        .zip(&values.adv[s])
        .map(|(p, a)| p * a)
        .sum()
}

/// The first-order objective `L_{π₀}(π)`.
pub fn linear_improvement(
    mdp: &Mdp,
    behavior: &Policy,
    candidate: &Policy,
    values: &ValueBundle,
    occ: &OccupancyPair,
) -> Result<f64> {
    mdp.check_policy(behavior)?;
    mdp.check_policy(candidate)?;
    Ok(mdp
        .non_terminal_states()
        .iter()
        .map(|&s| occ.d[s] * mean_advantage(values, candidate, s))
        .sum())
}

/// `Rem_{π₀}(π) = ρ(π) − ρ(π₀) − L_{π₀}(π)`.
///
/// Also evaluates `Σ_s (d_π(s) − d_{π₀}(s)) A_{π₀}(s, π)` and fails if the two
/// disagree by more than 1e-10.
pub fn taylor_remainder(
    mdp: &Mdp,
    behavior: &Policy,
    candidate: &Policy,
    values: &ValueBundle,
) -> Result<f64> {
    let behavior_occ = dp::occupancy_pair(mdp, behavior, values)?;
    let linear = linear_improvement(mdp, behavior, candidate, values, &behavior_occ)?;
    let candidate_values = dp::value_bundle(mdp, candidate)?;
    let candidate_d = dp::occupancy(mdp, candidate)?;
    let direct = candidate_values.rho - values.rho - linear;
    let shift: f64 = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| (candidate_d[s] - behavior_occ.d[s]) * mean_advantage(values, candidate, s))
        .sum();
    let gap = (direct - shift).abs();
    if gap > 1e-10 {
        return Err(Error::ConsistencyCheck {
            check: "remainder: value difference vs occupancy shift",
            residual: gap,
            tolerance: 1e-10,
        });
    }
    Ok(direct)
}

/// `Γ = Σ_s d⁺_{π₀}(s) ℐ(s)`.
pub fn trust_region_radius(occ: &OccupancyPair, influence: &InfluenceProfile) -> f64 {
    occ.d_plus.iter().zip(&influence.values).map(|(d, i)| d * i).sum()
}

/// Verdict of the randomized optimality check for the success-conditioning trust region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub objective_at_conditioned: f64,
    pub constraint_at_conditioned: f64,
    pub radius: f64,
    pub best_oracle_objective: f64,
    pub best_oracle_constraint: f64,
    /// `best_oracle_objective − objective_at_conditioned`.
    pub gap: f64,
    pub binding: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Random policy supported on the behavior policy's support.
fn random_supported_policy(mdp: &Mdp, behavior: &Policy, rng: &mut ChaCha8Rng) -> Policy {
    let rows = (0..mdp.n_states())
        .map(|s| {
            let mut row: Vec<f64> = behavior
                .row(s)
                .iter()
                .map(|&p| if p > 0.0 { rng.sample::<f64, _>(Exp1) } else { 0.0 })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect();
    Policy::new(rows).expect("normalized exponential rows")
}

/// Searches for a feasible policy beating π₊ on the success-conditioning trust region.
///
/// Each sample draws a policy on the behavior support and shrinks it toward
/// π₀ along `π_t = π₀ + t(σ − π₀)`. On this segment the χ² constraint is
/// `t²·C(σ)` and the objective is `t·L(σ)`, so the largest feasible step is
/// `t = min(1, sqrt(Γ / C(σ)))`.
pub fn verify_optimality(
    mdp: &Mdp,
    behavior: &Policy,
    n_oracle_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<OptimalityReport> {
    if n_oracle_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 oracle samples, got {n_oracle_samples}"
        )));
    }
    let values = dp::value_bundle(mdp, behavior)?;
    let occ = dp::occupancy_pair(mdp, behavior, &values)?;
    let influence = dp::action_influence(mdp, behavior, &values)?;
    let conditioned = dp::success_conditioned_policy(mdp, behavior, &values)?;
    let instance = TrustRegionInstance::success_conditioning(&occ, &influence);

    let objective = linear_improvement(mdp, behavior, &conditioned, &values, &occ)?;
    let constraint = instance.constraint_value(mdp, behavior, &conditioned);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_objective = f64::NEG_INFINITY;
    let mut best_constraint = 0.0;
    for _ in 0..n_oracle_samples {
        let sample = random_supported_policy(mdp, behavior, &mut rng);
        let full_constraint = instance.constraint_value(mdp, behavior, &sample);
        let full_objective = linear_improvement(mdp, behavior, &sample, &values, &occ)?;
        let step = if full_constraint <= instance.radius {
            1.0
        } else {
            (instance.radius / full_constraint).sqrt()
        };
        let feasible_objective = step * full_objective;
        if feasible_objective > best_objective {
            best_objective = feasible_objective;
            best_constraint = step * step * full_constraint;
        }
    }

    let gap = best_objective - objective;
    let binding = (constraint - instance.radius).abs() <= tol;
    Ok(OptimalityReport {
        objective_at_conditioned: objective,
        constraint_at_conditioned: constraint,
        radius: instance.radius,
        best_oracle_objective: best_objective,
        best_oracle_constraint: best_constraint,
        gap,
        binding,
        samples: n_oracle_samples,
        tolerance: tol,
        passed: gap <= tol && binding,
    })
}
