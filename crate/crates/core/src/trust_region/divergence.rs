//! Divergences between finite distributions.
//!
//! A support violation yields `f64::INFINITY`; none of these functions
//! produce NaN for valid probability vectors.

use serde::{Deserialize, Serialize};

/// Which divergence `D(π(·|s) ; π₀(·|s))` a trust region uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// `χ²(π ‖ π₀)`.
    Chi2,
    /// `KL(π ‖ π₀)`, the MDPO constraint.
    ForwardKl,
    /// `KL(π₀ ‖ π)`, the TRPO constraint.
    ReverseKl,
}

impl DivergenceKind {
    /// `D(candidate ; reference)`.
    pub fn eval(self, candidate: &[f64], reference: &[f64]) -> f64 {
        match self {
            DivergenceKind::Chi2 => chi_squared(candidate, reference),
            DivergenceKind::ForwardKl => forward_kl(candidate, reference),
            DivergenceKind::ReverseKl => reverse_kl(candidate, reference),
        }
    }
}

fn same_len(p: &[f64], q: &[f64]) {
    assert_eq!(p.len(), q.len(), "distributions over different alphabets");
}

/// `Σ_x (p(x)/q(x) − 1)² q(x)`.
pub fn chi_squared(p: &[f64], q: &[f64]) -> f64 {
    same_len(p, q);
    let mut total = 0.0;
    for (&px, &qx) in p.iter().zip(q) {
        if qx == 0.0 {
            if px > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let r = px / qx - 1.0;
        total += r * r * qx;
    }
    total
}

/// `Var_{x~q}(p(x)/q(x))`, computed two-pass.
pub fn chi_squared_variance_form(p: &[f64], q: &[f64]) -> f64 {
    same_len(p, q);
    if p.iter().zip(q).any(|(&px, &qx)| qx == 0.0 && px > 0.0) {
        return f64::INFINITY;
    }
    let ratios: Vec<(f64, f64)> = p
        .iter()
        .zip(q)
        .filter(|(_, &qx)| qx > 0.0)
        .map(|(&px, &qx)| (px / qx, qx))
        .collect();
    let mean: f64 = ratios.iter().map(|(r, w)| r * w).sum();
    ratios.iter().map(|(r, w)| w * (r - mean) * (r - mean)).sum()
}

/// `KL(p ‖ q)` with `0·log 0 = 0`; infinite when `p` is not absolutely continuous w.r.t. `q`.
pub fn forward_kl(p: &[f64], q: &[f64]) -> f64 {
    same_len(p, q);
    let mut total = 0.0;
    for (&px, &qx) in p.iter().zip(q) {
        if px == 0.0 {
            continue;
        }
        if qx == 0.0 {
            return f64::INFINITY;
        }
        total += px * (px / qx).ln();
    }
    total.max(0.0)
}

/// `KL(q ‖ p)`: infinite when `q` puts mass where `p` has none.
pub fn reverse_kl(p: &[f64], q: &[f64]) -> f64 {
    forward_kl(q, p)
}
