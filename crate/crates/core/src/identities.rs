//! Residual reports for the exact identities and inequalities satisfied by
//! success conditioning.
//!
//! Each report is a pure function of its inputs. The `*_of` variants take a
//! precomputed [`ConditioningAnalysis`], which lets callers substitute a
//! different conditioned policy and watch the checks fail.

use serde::Serialize;

use crate::dp::ConditioningAnalysis;
use crate::error::Result;
use crate::mdp::{Mdp, Policy};
use crate::trust_region::{chi_squared, linear_improvement, mean_advantage, trust_region_radius};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Two-sided equalities.
    pub identity: f64,
    /// Slack on `ρ(π₊) ≥ ρ(π₀)`.
    pub inequality: f64,
    /// Slack on the per-state relative-gain bound.
    pub relative_gain: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-10,
            inequality: 1e-12,
            relative_gain: 1e-10,
        }
    }
}

impl Tolerances {
    /// Same tolerance everywhere.
    pub fn uniform(tol: f64) -> Self {
        Self {
            identity: tol,
            inequality: tol,
            relative_gain: tol,
        }
    }
}

/// One checked relation; `values` are the compared quantities in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub label: String,
    pub state: Option<usize>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub checks: Vec<IdentityCheck>,
    pub max_residual: f64,
    /// True iff every check's residual is within its tolerance.
    pub passed: bool,
}

impl IdentityReport {
    fn new(name: &str, checks: Vec<IdentityCheck>) -> Self {
        let max_residual = checks.iter().fold(0.0_f64, |m, c| m.max(c.residual));
        // NaN residuals fail
        let passed = checks.iter().all(IdentityCheck::passed);
        Self {
            name: name.to_string(),
            checks,
            max_residual,
            passed,
        }
    }
}

fn equality(label: &str, state: Option<usize>, values: Vec<f64>, tolerance: f64) -> IdentityCheck {
    let residual = values
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(0.0_f64, |m, r| if r.is_nan() { f64::NAN } else { m.max(r) });
    IdentityCheck {
        label: label.to_string(),
        state,
        values,
        residual,
        tolerance,
    }
}

/// `lhs ≥ rhs`; the residual is the amount of violation.
fn at_least(label: &str, state: Option<usize>, lhs: f64, rhs: f64, tolerance: f64) -> IdentityCheck {
    IdentityCheck {
        label: label.to_string(),
        state,
        values: vec![lhs, rhs],
        residual: (rhs - lhs).max(0.0),
        tolerance,
    }
}

/// Per state: relative advantage of π₊, `χ²(π₊ ‖ π₀)`, and action-influence.
pub fn triple_identity(mdp: &Mdp, behavior: &Policy) -> Result<IdentityReport> {
    let analysis = ConditioningAnalysis::compute(mdp, behavior)?;
    Ok(triple_identity_of(
        &analysis,
        mdp,
        behavior,
        &Tolerances::default(),
    ))
}

pub fn triple_identity_of(
    analysis: &ConditioningAnalysis,
    mdp: &Mdp,
    behavior: &Policy,
    tol: &Tolerances,
) -> IdentityReport {
    let values = &analysis.behavior_values;
    let checks = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| {
            let relative_advantage = mean_advantage(values, &analysis.conditioned, s) / values.v[s];
            let movement = chi_squared(analysis.conditioned.row(s), behavior.row(s));
            let influence = analysis.influence.at(s);
            equality(
                "relative advantage = chi2 movement = action-influence",
                Some(s),
                vec![relative_advantage, movement, influence],
                tol.identity,
            )
        })
        .collect();
    IdentityReport::new("triple_identity", checks)
}

/// `L(π₊)/ρ(π₀) = Σ d⁺ χ²(π₊ ‖ π₀) = Σ d⁺ ℐ`.
pub fn weighted_identity(mdp: &Mdp, behavior: &Policy) -> Result<IdentityReport> {
    let analysis = ConditioningAnalysis::compute(mdp, behavior)?;
    weighted_identity_of(&analysis, mdp, behavior, &Tolerances::default())
}

pub fn weighted_identity_of(
    analysis: &ConditioningAnalysis,
    mdp: &Mdp,
    behavior: &Policy,
    tol: &Tolerances,
) -> Result<IdentityReport> {
    let values = &analysis.behavior_values;
    let occ = &analysis.behavior_occupancy;
    let first_order = linear_improvement(mdp, behavior, &analysis.conditioned, values, occ)? / values.rho;
    let movement: f64 = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| occ.d_plus[s] * chi_squared(analysis.conditioned.row(s), behavior.row(s)))
        .sum();
    let influence = trust_region_radius(occ, &analysis.influence);
    Ok(IdentityReport::new(
        "weighted_identity",
        vec![equality(
            "L(pi+)/rho = sum d+ chi2 = sum d+ influence",
            None,
            vec![first_order, movement, influence],
            tol.identity,
        )],
    ))
}

/// `ρ(π₊) ≥ ρ(π₀)` and `(V_{π₊}(s) − V_{π₀}(s)) / V_{π₀}(s) ≥ ℐ(s)` at every state.
pub fn improvement_check(mdp: &Mdp, behavior: &Policy) -> Result<IdentityReport> {
    let analysis = ConditioningAnalysis::compute(mdp, behavior)?;
    Ok(improvement_check_of(&analysis, mdp, &Tolerances::default()))
}

pub fn improvement_check_of(analysis: &ConditioningAnalysis, mdp: &Mdp, tol: &Tolerances) -> IdentityReport {
    let before = &analysis.behavior_values;
    let after = &analysis.conditioned_values;
    let mut checks = vec![at_least(
        "rho(pi+) >= rho(pi0)",
        None,
        after.rho,
        before.rho,
        tol.inequality,
    )];
    checks.extend(mdp.non_terminal_states().iter().map(|&s| {
        let relative_gain = (after.v[s] - before.v[s]) / before.v[s];
        at_least(
            "relative value gain >= action-influence",
            Some(s),
            relative_gain,
            analysis.influence.at(s),
            tol.relative_gain,
        )
    }));
    IdentityReport::new("improvement_check", checks)
}

/// `ρ(π₊) − ρ(π₀) = Σ_s d_{π₊}(s) V_{π₀}(s) ℐ(s)`.
pub fn exact_improvement(mdp: &Mdp, behavior: &Policy) -> Result<IdentityReport> {
    let analysis = ConditioningAnalysis::compute(mdp, behavior)?;
    Ok(exact_improvement_of(&analysis, mdp, &Tolerances::default()))
}

pub fn exact_improvement_of(analysis: &ConditioningAnalysis, mdp: &Mdp, tol: &Tolerances) -> IdentityReport {
    let gain = analysis.conditioned_values.rho - analysis.behavior_values.rho;
    let weighted: f64 = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| {
            analysis.conditioned_occupancy.d[s] * analysis.behavior_values.v[s] * analysis.influence.at(s)
        })
        .sum();
    IdentityReport::new(
        "exact_improvement",
        vec![equality(
            "rho(pi+) - rho(pi0) = sum d_pi+ V influence",
            None,
            vec![gain, weighted],
            tol.identity,
        )],
    )
}

/// All four suites on one analysis.
pub fn all_reports(
    analysis: &ConditioningAnalysis,
    mdp: &Mdp,
    behavior: &Policy,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    Ok(vec![
        triple_identity_of(analysis, mdp, behavior, tol),
        weighted_identity_of(analysis, mdp, behavior, tol)?,
        improvement_check_of(analysis, mdp, tol),
        exact_improvement_of(analysis, mdp, tol),
    ])
}
