//! Monte Carlo episodes, success filtering, empirical imitation of successes
//! and the offline-loss-to-deployment bound.
//!
//! Episode `i` of a run draws from the ChaCha8 stream `i` of the run seed,
//! so a set is a pure function of `(mdp, policy, n, seed)` regardless of how
//! rayon schedules the work.
//!
//! # Text format
//!
//! ```text
//! # sc-lab trajectories v1
//! # seed 7
//! # policy 3f9a0c11d2e4b5a6
//! 0	0 1 1	1	-
//! 1	0 0 2	0	0.25
//! ```
//!
//! Each episode line holds four tab-separated fields: substream id, the path
//! `s₁ a₁ s₂ … s_T` as space-separated indices, outcome (`1` or `0`) and the
//! dense return or `-` when absent.
#![allow(clippy::tabs_in_doc_comments)] // the format is tab-separated

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{self, OccupancyPair, ValueBundle};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::trust_region::forward_kl;

const FORMAT_TAG: &str = "# sc-lab trajectories v1";
/// Occupancies at or below this are treated as structurally zero.
const SUPPORT_FLOOR: f64 = 1e-14;
/// Slack on `gap ≤ bound`.
pub const BOUND_SLACK: f64 = 1e-12;

/// One episode; `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub stream: u64,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub success: bool,
    #[serde(rename = "return")]
    pub ret: Option<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.states.iter().copied().zip(self.actions.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub episodes: Vec<Episode>,
    pub seed: u64,
    pub policy_id: String,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn success_count(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG}\n# seed {}\n# policy {}\n",
            self.seed, self.policy_id
        );
        for e in &self.episodes {
            let mut path = String::new();
            for (t, &s) in e.states.iter().enumerate() {
                if t > 0 {
                    path.push(' ');
                    let _ = write!(path, "{} ", e.actions[t - 1]);
                }
                let _ = write!(path, "{s}");
            }
            let ret = match e.ret {
                Some(y) => format!("{y:?}"),
                None => "-".to_string(),
            };
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.stream, path, u8::from(e.success), ret);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut seed = None;
        let mut policy_id = None;
        let mut episodes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(header) = raw.strip_prefix('#') {
                let header = header.trim();
                if let Some(v) = header.strip_prefix("seed ") {
                    seed = Some(
                        v.trim()
                            .parse::<u64>()
                            .map_err(|e| err(line, format!("bad seed: {e}")))?,
                    );
                } else if let Some(v) = header.strip_prefix("policy ") {
                    policy_id = Some(v.trim().to_string());
                }
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(
                    line,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let stream = fields[0]
                .parse::<u64>()
                .map_err(|e| err(line, format!("bad substream id: {e}")))?;
            let tokens = fields[1]
                .split(' ')
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(line, format!("bad path index: {e}")))?;
            if tokens.len() % 2 == 0 {
                return Err(err(
                    line,
                    "path must alternate states and actions and end on a state".into(),
                ));
            }
            let states = tokens.iter().step_by(2).copied().collect();
            let actions = tokens.iter().skip(1).step_by(2).copied().collect();
            let success = match fields[2] {
                "1" => true,
                "0" => false,
                other => return Err(err(line, format!("outcome must be 0 or 1, got {other:?}"))),
            };
            let ret = match fields[3] {
                "-" => None,
                v => {
                    let y = v
                        .parse::<f64>()
                        .map_err(|e| err(line, format!("bad return: {e}")))?;
                    if !(0.0..=1.0).contains(&y) {
                        return Err(err(line, format!("return {y} outside [0, 1]")));
                    }
                    Some(y)
                }
            };
            episodes.push(Episode {
                stream,
                states,
                actions,
                success,
                ret,
            });
        }
        Ok(Self {
            episodes,
            seed: seed.ok_or_else(|| err(0, "missing `# seed` header".into()))?,
            policy_id: policy_id.ok_or_else(|| err(0, "missing `# policy` header".into()))?,
        })
    }
}

/// Generator for episode `stream` of a run.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Index drawn from `weights` (a distribution); never returns a zero-weight index.
pub fn draw_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn default_max_steps(mdp: &Mdp) -> usize {
    10 * mdp.n_states() + 100
}

fn sample_episode(mdp: &Mdp, policy: &Policy, seed: u64, stream: u64, max_steps: usize) -> Result<Episode> {
    let mut rng = substream(seed, stream);
    let mut s = draw_index(&mut rng, mdp.initial_dist());
    let mut states = vec![s];
    let mut actions = Vec::new();
    while !mdp.is_terminal(s) {
        if actions.len() == max_steps {
            return Err(Error::HorizonGuardTripped { stream, max_steps });
        }
        let a = draw_index(&mut rng, policy.row(s));
        s = draw_index(&mut rng, mdp.transition(s, a));
        actions.push(a);
        states.push(s);
    }
    Ok(Episode {
        stream,
        states,
        actions,
        success: mdp.is_success(s),
        ret: None,
    })
}

/// `n` episodes of `policy`; `max_steps` defaults to `10·|S| + 100`.
pub fn sample_trajectories(
    mdp: &Mdp,
    policy: &Policy,
    n: usize,
    seed: u64,
    max_steps: Option<usize>,
) -> Result<TrajectorySet> {
    mdp.check_policy(policy)?;
    let max_steps = max_steps.unwrap_or_else(|| default_max_steps(mdp));
    if max_steps < 10 * mdp.n_states() {
        return Err(Error::InvalidParameter(format!(
            "max_steps {max_steps} is below 10 x {} states",
            mdp.n_states()
        )));
    }
    let episodes = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_episode(mdp, policy, seed, i, max_steps))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet {
        episodes,
        seed,
        policy_id: policy.fingerprint(),
    })
}

/// Successful episodes in their original order.
pub fn filter_successes(trajs: &TrajectorySet) -> TrajectorySet {
    TrajectorySet {
        episodes: trajs.episodes.iter().filter(|e| e.success).cloned().collect(),
        seed: trajs.seed,
        policy_id: trajs.policy_id.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPolicy {
    pub policy: Policy,
    /// Non-terminal states absent from the successes; their rows copy the behavior policy.
    pub unvisited: Vec<usize>,
}

/// Smoothed action frequencies over every step of the successful episodes.
pub fn empirical_policy(
    successes: &TrajectorySet,
    smoothing: f64,
    mdp: &Mdp,
    behavior: &Policy,
) -> Result<EmpiricalPolicy> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be nonnegative, got {smoothing}"
        )));
    }
    mdp.check_policy(behavior)?;
    let mut counts: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| vec![0.0; mdp.n_actions(s)]).collect();
    let mut used = 0usize;
    for e in successes.episodes.iter().filter(|e| e.success) {
        used += 1;
        for (s, a) in e.steps() {
            if s >= mdp.n_states() || a >= mdp.n_actions(s) {
                return Err(Error::DimensionMismatch(format!(
                    "episode on stream {} visits (state {s}, action {a}) outside the MDP",
                    e.stream
                )));
            }
            counts[s][a] += 1.0;
        }
    }
    if used == 0 {
        return Err(Error::EmptyInput);
    }
    let mut unvisited = Vec::new();
    let rows = (0..mdp.n_states())
        .map(|s| {
            let row = &counts[s];
            if row.is_empty() {
                return Vec::new();
            }
            let visits: f64 = row.iter().sum();
            if visits == 0.0 {
                unvisited.push(s);
                return behavior.row(s).to_vec();
            }
            let total = visits + smoothing * row.len() as f64;
            row.iter().map(|c| (c + smoothing) / total).collect()
        })
        .collect();
    Ok(EmpiricalPolicy {
        policy: Policy::new(rows)?,
        unvisited,
    })
}

/// `Σ_s w(s) Σ_a p(a|s)·(−log c(a|s))`, infinite on a support violation.
fn weighted_cross_entropy(mdp: &Mdp, weights: &[f64], target: &Policy, candidate: &Policy) -> f64 {
    let mut total = 0.0;
    for &s in mdp.non_terminal_states() {
        if weights[s] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (&p, &c) in target.row(s).iter().zip(candidate.row(s)) {
            if p == 0.0 {
                continue;
            }
            if c == 0.0 {
                return f64::INFINITY;
            }
            inner -= p * c.ln();
        }
        total += weights[s] * inner;
    }
    total
}

/// Expected next-action log loss of `candidate` on success-conditioned
/// trajectories of `behavior`, computed from exact occupancies.
///
/// Returns `f64::INFINITY` when `candidate` misses part of the support of π₊.
pub fn cross_entropy_loss(
    mdp: &Mdp,
    behavior: &Policy,
    candidate: &Policy,
    values: &ValueBundle,
    occ: &OccupancyPair,
) -> Result<f64> {
    mdp.check_policy(candidate)?;
    let conditioned = dp::success_conditioned_policy(mdp, behavior, values)?;
    let loss = weighted_cross_entropy(mdp, &occ.d_plus, &conditioned, candidate);
    if !loss.is_finite() {
        return Ok(f64::INFINITY);
    }
    let floor = weighted_cross_entropy(mdp, &occ.d_plus, &conditioned, &conditioned);
    let excess: f64 = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| occ.d_plus[s] * forward_kl(conditioned.row(s), candidate.row(s)))
        .sum();
    let residual = (loss - floor - excess).abs();
    let tolerance = 1e-10 * loss.max(1.0);
    if residual > tolerance {
        return Err(Error::ConsistencyCheck {
            check: "excess loss equals weighted KL",
            residual,
            tolerance,
        });
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Mean per-episode log loss of `candidate` over the successful episodes.
pub fn monte_carlo_loss(successes: &TrajectorySet, candidate: &Policy) -> Result<MonteCarloEstimate> {
    let per_episode: Vec<f64> = successes
        .episodes
        .iter()
        .filter(|e| e.success)
        .map(|e| e.steps().map(|(s, a)| -candidate.prob(s, a).ln()).sum())
        .collect();
    let n = per_episode.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = per_episode.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        per_episode.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    })
}

fn occupancy_ratio(numer: &[f64], denom: &[f64], mdp: &Mdp) -> Result<f64> {
    let mut sup = 0.0_f64;
    for &s in mdp.non_terminal_states() {
        let (a, b) = (numer[s], denom[s]);
        match (a > SUPPORT_FLOOR, b > SUPPORT_FLOOR) {
            (true, true) => sup = sup.max(a / b),
            (false, false) => {}
            _ => return Err(Error::SupportMismatch(s)),
        }
    }
    Ok(sup)
}

/// `sup_s d_{π₊}(s) / d⁺_{π₀}(s)`, the distribution-shift factor under which
/// the offline bound is proved.
pub fn shift_ratio(mdp: &Mdp, behavior: &Policy, values: &ValueBundle, occ: &OccupancyPair) -> Result<f64> {
    let conditioned = dp::success_conditioned_policy(mdp, behavior, values)?;
    let d_conditioned = dp::occupancy(mdp, &conditioned)?;
    occupancy_ratio(&d_conditioned, &occ.d_plus, mdp)
}

/// `sup_s d⁺_{π₀}(s) / d_{π₊}(s)`, the reciprocal orientation. Reported
/// alongside [`shift_ratio`]; the two coincide when transitions and the
/// initial state are deterministic.
pub fn shift_ratio_as_stated(
    mdp: &Mdp,
    behavior: &Policy,
    values: &ValueBundle,
    occ: &OccupancyPair,
) -> Result<f64> {
    let conditioned = dp::success_conditioned_policy(mdp, behavior, values)?;
    let d_conditioned = dp::occupancy(mdp, &conditioned)?;
    occupancy_ratio(&occ.d_plus, &d_conditioned, mdp)
}

/// Offline loss, distribution shift and deployment gap for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    #[serde(serialize_with = "crate::float_repr::serialize")]
    pub loss_candidate: f64,
    pub loss_conditioned: f64,
    #[serde(serialize_with = "crate::float_repr::serialize")]
    pub excess: f64,
    pub shift_ratio: f64,
    pub shift_ratio_as_stated: f64,
    #[serde(serialize_with = "crate::float_repr::serialize")]
    pub bound: f64,
    pub gap: f64,
    /// `gap ≤ bound + 1e-12`.
    pub holds: bool,
}

/// `|ρ(π̂) − ρ(π₊)| ≤ √(M·Δ/2)` with everything computed exactly.
pub fn offline_bound_check(mdp: &Mdp, behavior: &Policy, candidate: &Policy) -> Result<LossReport> {
    let values = dp::value_bundle(mdp, behavior)?;
    let occ = dp::occupancy_pair(mdp, behavior, &values)?;
    let conditioned = dp::success_conditioned_policy(mdp, behavior, &values)?;
    let loss_candidate = cross_entropy_loss(mdp, behavior, candidate, &values, &occ)?;
    let loss_conditioned = cross_entropy_loss(mdp, behavior, &conditioned, &values, &occ)?;
    // subtracting the losses loses precision when the candidate is close to π₊
    let excess = if loss_candidate.is_finite() {
        mdp.non_terminal_states()
            .iter()
            .map(|&s| occ.d_plus[s] * forward_kl(conditioned.row(s), candidate.row(s)))
            .sum()
    } else {
        f64::INFINITY
    };
    let m = shift_ratio(mdp, behavior, &values, &occ)?;
    let m_stated = shift_ratio_as_stated(mdp, behavior, &values, &occ)?;
    let bound = (m * excess / 2.0).sqrt();
    let gap = (dp::value_bundle(mdp, candidate)?.rho - dp::value_bundle(mdp, &conditioned)?.rho).abs();
    Ok(LossReport {
        loss_candidate,
        loss_conditioned,
        excess,
        shift_ratio: m,
        shift_ratio_as_stated: m_stated,
        bound,
        gap,
        holds: gap <= bound + BOUND_SLACK,
    })
}
