//! Dense returns, proxy success criteria and the Beta-bandit threshold sweep.
//!
//! A proxy criterion `R̃` induces its own values `Q̃`, `Ṽ`, conditioned policy
//! `π̃₊ = π₀·Q̃/Ṽ` and influence `ℐ̃`. Per state the true advantage of π̃₊
//! relative to that of π₊ factors as `√(ℐ̃/ℐ) · Corr_{π₀}(A, Ã)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::dp::ValueBundle;
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::sampling::{draw_index, substream, Episode, TrajectorySet};
use crate::special::beta_tail;

/// Residual allowed between the two sides of the decomposition.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaArm {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaArm {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// `P(Y > θ)`.
    pub fn tail(&self, theta: f64) -> Result<f64> {
        beta_tail(theta, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaBanditConfig {
    pub moderate_arms: usize,
    /// `Uniform(lo, hi)` range for the shared shape of each symmetric arm.
    pub moderate_shape: (f64, f64),
    pub strong_arm: BetaArm,
    pub seed: u64,
}

impl Default for BetaBanditConfig {
    fn default() -> Self {
        Self {
            moderate_arms: 99,
            moderate_shape: (0.3, 0.7),
            strong_arm: BetaArm {
                alpha: 18.0,
                beta: 2.0,
            },
            seed: 20240101,
        }
    }
}

/// Arms with Beta-distributed returns under a uniform behavior policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaBandit {
    pub arms: Vec<BetaArm>,
    pub behavior: Vec<f64>,
}

impl BetaBandit {
    /// Moderate arms first, strong arm last.
    pub fn from_config(config: &BetaBanditConfig) -> Result<Self> {
        let (lo, hi) = config.moderate_shape;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad moderate shape range ({lo}, {hi})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut arms: Vec<BetaArm> = (0..config.moderate_arms)
            .map(|_| {
                let a = rng.random_range(lo..hi);
                BetaArm { alpha: a, beta: a }
            })
            .collect();
        arms.push(config.strong_arm);
        let k = arms.len();
        Ok(Self {
            arms,
            behavior: vec![1.0 / k as f64; k],
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(BetaArm::mean).collect()
    }

    /// `Q̃(a) = P(Y > θ | a)` for every arm.
    pub fn threshold_q(&self, theta: f64) -> Result<Vec<f64>> {
        self.arms.iter().map(|arm| arm.tail(theta)).collect()
    }

    /// `n` pulls under the behavior policy, each carrying its return and no label.
    ///
    /// Paths are `[0, 1]`: the single decision state and a shared terminal.
    pub fn sample(&self, n: usize, seed: u64) -> Result<TrajectorySet> {
        let dists = self
            .arms
            .iter()
            .map(|arm| Beta::new(arm.alpha, arm.beta).map_err(|e| Error::InvalidParameter(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let episodes = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i);
                let a = draw_index(&mut rng, &self.behavior);
                let y: f64 = dists[a].sample(&mut rng);
                Episode {
                    stream: i,
                    states: vec![0, 1],
                    actions: vec![a],
                    success: false,
                    ret: Some(y),
                }
            })
            .collect();
        Ok(TrajectorySet {
            episodes,
            seed,
            policy_id: "beta-bandit-uniform".into(),
        })
    }
}

fn returns_of(trajs: &TrajectorySet) -> Result<Vec<f64>> {
    trajs
        .episodes
        .iter()
        .enumerate()
        .map(|(i, e)| match e.ret {
            Some(y) if (0.0..=1.0).contains(&y) => Ok(y),
            Some(y) => Err(Error::InvalidProbability {
                what: format!("return of episode {i}"),
                value: y,
            }),
            None => Err(Error::MissingReturn(i)),
        })
        .collect()
}

/// Labels each episode once with `R ~ Bernoulli(Y)`, drawn from the episode's
/// substream of `seed`.
pub fn bernoulli_label(trajs: &TrajectorySet, seed: u64) -> Result<TrajectorySet> {
    let returns = returns_of(trajs)?;
    let episodes = trajs
        .episodes
        .iter()
        .zip(returns)
        .map(|(e, y)| {
            let u: f64 = substream(seed, e.stream).random();
            Episode {
                success: u < y,
                ..e.clone()
            }
        })
        .collect();
    Ok(TrajectorySet {
        episodes,
        ..trajs.clone()
    })
}

/// `R̃ = 1{Y > θ}`; ties count as failures.
pub fn threshold_reward(trajs: &TrajectorySet, theta: f64) -> Result<TrajectorySet> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in [0, 1], got {theta}"
        )));
    }
    let returns = returns_of(trajs)?;
    let episodes = trajs
        .episodes
        .iter()
        .zip(returns)
        .map(|(e, y)| Episode {
            success: y > theta,
            ..e.clone()
        })
        .collect();
    Ok(TrajectorySet {
        episodes,
        ..trajs.clone()
    })
}

/// `π₀(·)·q(·)/Σ π₀ q`, or `None` when the normalizer vanishes.
pub fn conditioned_row(behavior: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let v: f64 = behavior.iter().zip(q).map(|(p, q)| p * q).sum();
    if v <= 0.0 {
        return None;
    }
    Some(behavior.iter().zip(q).map(|(p, q)| p * q / v).collect())
}

/// π̃₊ for proxy action values `proxy_q[s][a]`.
pub fn proxy_conditioned_policy(mdp: &Mdp, behavior: &Policy, proxy_q: &[Vec<f64>]) -> Result<Policy> {
    mdp.check_policy(behavior)?;
    check_q_shape(mdp, proxy_q)?;
    let rows = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                return Ok(Vec::new());
            }
            conditioned_row(behavior.row(s), &proxy_q[s]).ok_or(Error::ProxySuccessUnreachable(s))
        })
        .collect::<Result<Vec<_>>>()?;
    Policy::new(rows)
}

fn check_q_shape(mdp: &Mdp, q: &[Vec<f64>]) -> Result<()> {
    if q.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "proxy values cover {} states, MDP has {}",
            q.len(),
            mdp.n_states()
        )));
    }
    for &s in mdp.non_terminal_states() {
        if q[s].len() != mdp.n_actions(s) {
            return Err(Error::DimensionMismatch(format!(
                "proxy values at state {s} have {} entries, state has {} actions",
                q[s].len(),
                mdp.n_actions(s)
            )));
        }
        if let Some(&bad) = q[s].iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidProbability {
                what: format!("proxy value at state {s}"),
                value: bad,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyStateReport {
    pub state: usize,
    /// `A(s, π̃₊) / A(s, π₊)`.
    pub ratio: f64,
    /// `√(ℐ̃(s)/ℐ(s))`.
    pub influence_ratio: f64,
    /// `Corr_{a~π₀}(A(s,a), Ã(s,a))`.
    pub alignment: f64,
    /// `|ratio − influence_ratio·alignment|`, before rounding either side to f64.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedState {
    pub state: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyReport {
    pub states: Vec<ProxyStateReport>,
    pub skipped: Vec<SkippedState>,
    pub max_residual: f64,
}

impl ProxyReport {
    pub fn passed(&self) -> bool {
        self.max_residual <= DECOMPOSITION_TOLERANCE
    }
}

/// Mean and population variance of `x` under weights `w`.
fn moments(w: &[f64], x: &[f64]) -> (f64, f64) {
    let mean: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let var = w.iter().zip(x).map(|(w, x)| w * (x - mean) * (x - mean)).sum();
    (mean, var)
}

fn dd_moments(w: &[TwoFloat], x: &[TwoFloat]) -> (TwoFloat, TwoFloat) {
    let mean = w
        .iter()
        .zip(x)
        .fold(TwoFloat::from(0.0), |acc, (w, x)| acc + *w * *x);
    let var = w.iter().zip(x).fold(TwoFloat::from(0.0), |acc, (w, x)| {
        acc + *w * (*x - mean) * (*x - mean)
    });
    (mean, var)
}

/// Decomposition at one decision point with action draw `behavior`.
///
/// The ratio is evaluated from the two conditioned policies and the true
/// advantages; the product from π₀-moments of `q` and `proxy_q`. Both sides
/// run in double-double arithmetic: when Q is nearly constant the advantage
/// sums cancel to a few ulps of V, which would otherwise dominate the residual.
/// The behavior row is renormalized to sum to exactly 1 in that precision.
pub fn decompose_state(
    state: usize,
    behavior: &[f64],
    q: &[f64],
    proxy_q: &[f64],
) -> std::result::Result<ProxyStateReport, SkippedState> {
    let skip = |reason: &str| SkippedState {
        state,
        reason: reason.to_string(),
    };
    let lift = |x: &[f64]| -> Vec<TwoFloat> { x.iter().map(|&v| TwoFloat::from(v)).collect() };
    let (w, q, proxy_q) = (lift(behavior), lift(q), lift(proxy_q));
    let zero = TwoFloat::from(0.0);
    // a row summing to 1 − ε leaves Σπ₀(Q − V) = εV, comparable to A(s, π₊) when ℐ is tiny
    let total = w.iter().fold(zero, |acc, x| acc + *x);
    let w: Vec<TwoFloat> = w.iter().map(|x| *x / total).collect();
    let (v, var) = dd_moments(&w, &q);
    let (v_proxy, var_proxy) = dd_moments(&w, &proxy_q);
    if v <= zero || var <= zero {
        return Err(skip("action-influence is zero"));
    }
    if v_proxy <= zero || var_proxy <= zero {
        return Err(skip("proxy action-influence is zero"));
    }
    let conditioned = |x: &[TwoFloat], norm: TwoFloat| -> Vec<TwoFloat> {
        w.iter().zip(x).map(|(w, x)| *w * *x / norm).collect()
    };
    let plus = conditioned(&q, v);
    let proxy_plus = conditioned(&proxy_q, v_proxy);
    let mean_adv =
        |pi: &[TwoFloat]| -> TwoFloat { pi.iter().zip(&q).fold(zero, |acc, (p, x)| acc + *p * (*x - v)) };
    let ratio = mean_adv(&proxy_plus) / mean_adv(&plus);

    let influence = var / (v * v);
    let proxy_influence = var_proxy / (v_proxy * v_proxy);
    let influence_ratio = (proxy_influence / influence).sqrt();
    let cov = w
        .iter()
        .zip(q.iter().zip(&proxy_q))
        .fold(zero, |acc, (w, (x, y))| acc + *w * (*x - v) * (*y - v_proxy));
    let alignment = cov / (var * var_proxy).sqrt();
    Ok(ProxyStateReport {
        state,
        ratio: ratio.into(),
        influence_ratio: influence_ratio.into(),
        alignment: alignment.into(),
        residual: (ratio - influence_ratio * alignment).abs().into(),
    })
}

/// Per-state decomposition for proxy values on a full MDP.
pub fn proxy_decomposition(
    mdp: &Mdp,
    behavior: &Policy,
    values: &ValueBundle,
    proxy_q: &[Vec<f64>],
) -> Result<ProxyReport> {
    mdp.check_policy(behavior)?;
    check_q_shape(mdp, proxy_q)?;
    let mut states = Vec::new();
    let mut skipped = Vec::new();
    for &s in mdp.non_terminal_states() {
        match decompose_state(s, behavior.row(s), &values.q[s], &proxy_q[s]) {
            Ok(r) => states.push(r),
            Err(k) => skipped.push(k),
        }
    }
    let max_residual = states.iter().fold(0.0_f64, |m, r| m.max(r.residual));
    Ok(ProxyReport {
        states,
        skipped,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    /// NaN when the proxy values are constant across arms.
    pub alignment: f64,
    pub influence_ratio: f64,
    /// `E_{π̃₊}[Y] − E_{π₀}[Y]`.
    pub proxy_improvement: f64,
    /// `E_{π₊}[Y] − E_{π₀}[Y]` under faithful Bernoulli labels.
    pub faithful_improvement: f64,
}

/// `0.00, 0.01, …, 0.99` followed by `0.999`.
pub fn default_thetas() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    grid.push(0.999);
    grid
}

fn check_grid(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::InvalidGrid("no thresholds given".into()));
    }
    if let Some(bad) = thetas
        .iter()
        .find(|t| !(t.is_finite() && (0.0..1.0).contains(*t)))
    {
        return Err(Error::InvalidGrid(format!("threshold {bad} is outside [0, 1)")));
    }
    Ok(())
}

fn expected_return(pi: &[f64], means: &[f64]) -> f64 {
    pi.iter().zip(means).map(|(p, m)| p * m).sum()
}

/// Analytic sweep of the Beta bandit over proxy thresholds, in grid order.
pub fn threshold_sweep(config: &BetaBanditConfig, thetas: &[f64]) -> Result<Vec<SweepRow>> {
    check_grid(thetas)?;
    let bandit = BetaBandit::from_config(config)?;
    let pi0 = &bandit.behavior;
    let means = bandit.means();
    let base = expected_return(pi0, &means);
    // faithful labels give Q(a) = E[Y | a]
    let plus = conditioned_row(pi0, &means).ok_or(Error::DivisionByZero)?;
    let faithful_improvement = expected_return(&plus, &means) - base;
    let (v, var) = moments(pi0, &means);
    let influence = var / (v * v);

    thetas
        .par_iter()
        .map(|&theta| {
            let proxy_q = bandit.threshold_q(theta)?;
            let mut proxy_plus = conditioned_row(pi0, &proxy_q).ok_or(Error::ProxySuccessUnreachable(0))?;
            let (v_proxy, mut var_proxy) = moments(pi0, &proxy_q);
            // a constant proxy has no variance and conditions on nothing; rounding must not fake either
            if proxy_q.iter().all(|&x| x == proxy_q[0]) {
                var_proxy = 0.0;
                proxy_plus = pi0.clone();
            }
            let cov: f64 = pi0
                .iter()
                .zip(means.iter().zip(&proxy_q))
                .map(|(w, (x, y))| w * (x - v) * (y - v_proxy))
                .sum();
            let alignment = if var_proxy > 0.0 {
                cov / (var * var_proxy).sqrt()
            } else {
                f64::NAN
            };
            Ok(SweepRow {
                theta,
                alignment,
                influence_ratio: (var_proxy / (v_proxy * v_proxy) / influence).sqrt(),
                proxy_improvement: expected_return(&proxy_plus, &means) - base,
                faithful_improvement,
            })
        })
        .collect()
}

/// CSV with 17 significant digits per value and LF line endings.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("theta,alignment,influence_ratio,proxy_improvement,faithful_improvement\n");
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.theta, r.alignment, r.influence_ratio, r.proxy_improvement, r.faithful_improvement
        ));
    }
    out
}
