//! How much probability a divergence budget lets a policy move onto a rare action.
//!
//! The instance has one rare action `a*` with behavior probability `δ` and `k`
//! common actions sharing `1 − δ` uniformly. Candidates put `p` on `a*` and
//! spread `1 − p` uniformly over the common actions, which is optimal for a
//! fixed `p` because every divergence here is convex.

use super::divergence::{chi_squared, forward_kl, reverse_kl, DivergenceKind};
use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 200;
const P_TOLERANCE: f64 = 1e-12;

fn divergence_at(p: f64, delta: f64, k: usize, kind: DivergenceKind) -> f64 {
    match kind {
        DivergenceKind::Chi2 => {
            let mut cand = vec![(1.0 - p) / k as f64; k + 1];
            let mut reference = vec![(1.0 - delta) / k as f64; k + 1];
            cand[0] = p;
            reference[0] = delta;
            chi_squared(&cand, &reference)
        }
        // Grouping the common actions into one outcome is exact here since
        // their likelihood ratio is constant.
        DivergenceKind::ForwardKl => forward_kl(&[p, 1.0 - p], &[delta, 1.0 - delta]),
        DivergenceKind::ReverseKl => reverse_kl(&[p, 1.0 - p], &[delta, 1.0 - delta]),
    }
}

/// `sup { π(a*) : D(π ‖ π₀) ≤ ε }` on the rare-action instance.
pub fn rare_action_tolerance(delta: f64, k: usize, epsilon: f64, kind: DivergenceKind) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 common actions, got {k}"
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if divergence_at(1.0, delta, k, kind) <= epsilon {
        return Ok(1.0);
    }
    // Divergence is zero at p = δ and increasing on [δ, 1].
    let (mut lo, mut hi) = (delta, 1.0);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= P_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if divergence_at(mid, delta, k, kind) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
