//! Tabular episodic MDPs with a success/failure partition of the terminal states,
//! Markov policies over per-state action lists, and validation.
//!
//! States are dense indices `0..n_states`. Terminal states carry no actions;
//! every other state has a nonempty ordered action list whose entries are
//! addressed by position. Transition rows are dense probability vectors over
//! all states.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dp;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Tolerance on probability-vector row sums.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Surviving-mass threshold for the termination check.
pub const TERMINATION_THRESHOLD: f64 = 1e-12;

fn check_distribution(what: impl FnOnce() -> String, row: &[f64]) -> Result<()> {
    if let Some(&bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidProbability {
            what: what(),
            value: bad,
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::NonStochasticRow { what: what(), sum });
    }
    Ok(())
}

/// A Markov policy: one action distribution per non-terminal state.
///
/// Rows for terminal states are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    /// Builds a policy, checking every nonempty row is a distribution within 1e-12.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            if !row.is_empty() {
                check_distribution(|| format!("policy row {s}"), row)?;
            }
        }
        Ok(Self { rows })
    }

    /// The uniform policy over each state's actions.
    pub fn uniform(mdp: &Mdp) -> Self {
        let rows = mdp
            .actions_per_state()
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        Self { rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.rows[s][a]
    }

    /// True when the row at `s` puts all its mass on one action.
    pub fn is_deterministic_at(&self, s: usize) -> bool {
        self.rows[s].iter().filter(|p| **p > 0.0).count() == 1
    }

    /// Short stable identifier derived from the exact bit patterns of the rows.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for row in &self.rows {
            hasher.update((row.len() as u64).to_le_bytes());
            for p in row {
                hasher.update(p.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Policy {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<Policy> for Vec<Vec<f64>> {
    fn from(p: Policy) -> Self {
        p.rows
    }
}

/// Serialized form of [`Mdp`]; deserialization runs the structural checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub n_states: usize,
    pub actions_per_state: Vec<usize>,
    /// `transition[s][a]` is a probability vector over all states.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
    pub terminal_success: Vec<usize>,
    pub terminal_failure: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    NonTerminal,
    Success,
    Failure,
}

/// A tabular episodic MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpSpec", into = "MdpSpec")]
pub struct Mdp {
    spec: MdpSpec,
    kinds: Vec<StateKind>,
    non_terminal: Vec<usize>,
    compact: Vec<Option<usize>>,
}

impl Mdp {
    pub fn new(spec: MdpSpec) -> Result<Self> {
        let n = spec.n_states;
        if n == 0 {
            return Err(Error::InvalidStructure("MDP has no states".into()));
        }
        if spec.actions_per_state.len() != n || spec.transition.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "n_states = {n} but actions_per_state has {} entries and transition has {}",
                spec.actions_per_state.len(),
                spec.transition.len()
            )));
        }
        if spec.initial_dist.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial_dist has {} entries, expected {n}",
                spec.initial_dist.len()
            )));
        }

        let mut kinds = vec![StateKind::NonTerminal; n];
        for (set, kind) in [
            (&spec.terminal_success, StateKind::Success),
            (&spec.terminal_failure, StateKind::Failure),
        ] {
            for &s in set {
                if s >= n {
                    return Err(Error::InvalidStructure(format!(
                        "terminal state {s} out of range"
                    )));
                }
                if kinds[s] != StateKind::NonTerminal {
                    return Err(Error::InvalidStructure(format!(
                        "state {s} listed twice among terminal states"
                    )));
                }
                kinds[s] = kind;
            }
        }

        for (s, (&k, kind)) in spec.actions_per_state.iter().zip(&kinds).enumerate() {
            let terminal = *kind != StateKind::NonTerminal;
            if terminal && k != 0 {
                return Err(Error::InvalidStructure(format!(
                    "terminal state {s} has {k} actions"
                )));
            }
            if !terminal && k == 0 {
                return Err(Error::InvalidStructure(format!(
                    "non-terminal state {s} has no actions"
                )));
            }
            if spec.transition[s].len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "state {s} declares {k} actions but has {} transition rows",
                    spec.transition[s].len()
                )));
            }
            for (a, row) in spec.transition[s].iter().enumerate() {
                if row.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "transition row ({s}, {a}) has {} entries, expected {n}",
                        row.len()
                    )));
                }
                check_distribution(|| format!("transition row ({s}, {a})"), row)?;
            }
        }

        check_distribution(|| "initial_dist".to_string(), &spec.initial_dist)?;
        if let Some(s) = (0..n).find(|&s| kinds[s] != StateKind::NonTerminal && spec.initial_dist[s] > 0.0) {
            return Err(Error::InvalidStructure(format!(
                "initial_dist puts mass on terminal state {s}"
            )));
        }

        let non_terminal: Vec<usize> = (0..n).filter(|&s| kinds[s] == StateKind::NonTerminal).collect();
        let mut compact = vec![None; n];
        for (i, &s) in non_terminal.iter().enumerate() {
            compact[s] = Some(i);
        }
        Ok(Self {
            spec,
            kinds,
            non_terminal,
            compact,
        })
    }

    pub fn n_states(&self) -> usize {
        self.spec.n_states
    }

    pub fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    pub fn actions_per_state(&self) -> &[usize] {
        &self.spec.actions_per_state
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.spec.actions_per_state[s]
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.spec.transition[s][a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.spec.initial_dist
    }

    pub fn kind(&self, s: usize) -> StateKind {
        self.kinds[s]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.kinds[s] != StateKind::NonTerminal
    }

    pub fn is_success(&self, s: usize) -> bool {
        self.kinds[s] == StateKind::Success
    }

    /// Non-terminal states in increasing index order.
    pub fn non_terminal_states(&self) -> &[usize] {
        &self.non_terminal
    }

    /// Position of `s` within [`Mdp::non_terminal_states`].
    pub fn compact_index(&self, s: usize) -> Option<usize> {
        self.compact[s]
    }

    /// Same dynamics with a different success/failure split of the terminal states.
    pub fn with_success_set(&self, success: Vec<usize>) -> Result<Self> {
        let mut spec = self.spec.clone();
        let terminals: Vec<usize> = (0..self.n_states()).filter(|&s| self.is_terminal(s)).collect();
        if let Some(s) = success.iter().find(|s| !terminals.contains(s)) {
            return Err(Error::InvalidStructure(format!("state {s} is not terminal")));
        }
        spec.terminal_failure = terminals.into_iter().filter(|s| !success.contains(s)).collect();
        spec.terminal_success = success;
        Self::new(spec)
    }

    /// Checks that `policy` has one row per state with the right number of actions.
    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {} states, MDP has {}",
                policy.n_states(),
                self.n_states()
            )));
        }
        for s in 0..self.n_states() {
            if policy.row(s).len() != self.n_actions(s) {
                return Err(Error::DimensionMismatch(format!(
                    "policy row {s} has {} entries, state has {} actions",
                    policy.row(s).len(),
                    self.n_actions(s)
                )));
            }
        }
        Ok(())
    }

    /// Policy-induced transition matrix restricted to non-terminal states,
    /// indexed by compact position.
    pub(crate) fn sub_stochastic_matrix(&self, policy: &Policy) -> Matrix {
        let m = self.non_terminal.len();
        let mut p = Matrix::zeros(m);
        for (i, &s) in self.non_terminal.iter().enumerate() {
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (j, &t) in self.non_terminal.iter().enumerate() {
                    p[(i, j)] += pa * self.spec.transition[s][a][t];
                }
            }
        }
        p
    }

    /// Probability of landing directly in a success terminal from `(s, a)`.
    pub(crate) fn immediate_success(&self, s: usize, a: usize) -> f64 {
        self.spec
            .terminal_success
            .iter()
            .map(|&t| self.spec.transition[s][a][t])
            .sum()
    }
}

impl TryFrom<MdpSpec> for Mdp {
    type Error = Error;
    fn try_from(spec: MdpSpec) -> Result<Self> {
        Self::new(spec)
    }
}

impl From<Mdp> for MdpSpec {
    fn from(m: Mdp) -> Self {
        m.spec
    }
}

/// Outcome of [`validate_mdp`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Power-iteration steps until the surviving mass fell below 1e-12.
    pub decay_iterations: usize,
    pub surviving_mass: f64,
    /// Smallest behavior-policy success probability over non-terminal states.
    pub min_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValidationOptions {
    /// Iteration cap for the termination check; `None` means `10·n_states + 1000`.
    pub max_decay_iterations: Option<usize>,
}

/// Checks that episodes terminate under `behavior` and that success is
/// reachable with positive probability from every non-terminal state.
pub fn validate_mdp(mdp: &Mdp, behavior: &Policy) -> Result<ValidationReport> {
    validate_mdp_with(mdp, behavior, ValidationOptions::default())
}

pub fn validate_mdp_with(
    mdp: &Mdp,
    behavior: &Policy,
    options: ValidationOptions,
) -> Result<ValidationReport> {
    mdp.check_policy(behavior)?;
    for s in mdp.non_terminal_states() {
        check_distribution(|| format!("policy row {s}"), behavior.row(*s))?;
    }

    let cap = options.max_decay_iterations.unwrap_or(10 * mdp.n_states() + 1000);
    let p = mdp.sub_stochastic_matrix(behavior);
    let mut mass = vec![1.0; p.dim()];
    let mut iterations = 0;
    let mut surviving = mass.iter().fold(0.0_f64, |m, v| m.max(*v));
    while surviving >= TERMINATION_THRESHOLD {
        if iterations == cap {
            return Err(Error::NonTerminatingChain {
                iterations,
                residual: surviving,
            });
        }
        mass = p.mul_vec(&mass);
        iterations += 1;
        surviving = mass.iter().fold(0.0_f64, |m, v| m.max(*v));
    }

    let mut unreachable = success_unreachable_states(mdp, behavior);
    let values = dp::value_bundle(mdp, behavior)?;
    for &s in mdp.non_terminal_states() {
        if values.v[s] <= 0.0 && !unreachable.contains(&s) {
            unreachable.push(s);
        }
    }
    if !unreachable.is_empty() {
        unreachable.sort_unstable();
        return Err(Error::SuccessUnreachable(unreachable));
    }
    let min_value = mdp
        .non_terminal_states()
        .iter()
        .map(|&s| values.v[s])
        .fold(f64::INFINITY, f64::min);

    Ok(ValidationReport {
        decay_iterations: iterations,
        surviving_mass: surviving,
        min_value,
    })
}

/// Non-terminal states with no positive-probability path to a success terminal.
fn success_unreachable_states(mdp: &Mdp, policy: &Policy) -> Vec<usize> {
    let n = mdp.n_states();
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &s in mdp.non_terminal_states() {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa > 0.0 {
                for (t, &pt) in mdp.transition(s, a).iter().enumerate() {
                    if pt > 0.0 {
                        predecessors[t].push(s);
                    }
                }
            }
        }
    }
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<usize> = mdp.spec().terminal_success.iter().copied().collect();
    for &t in &queue {
        reaches[t] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &s in &predecessors[t] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    mdp.non_terminal_states()
        .iter()
        .copied()
        .filter(|&s| !reaches[s])
        .collect()
}

/// One-step bandit: state 0 pulls an arm, state 1 is the success terminal and
/// state 2 the failure terminal.
pub fn make_bandit(success_probs: &[f64], behavior_weights: &[f64]) -> Result<(Mdp, Policy)> {
    if success_probs.len() != behavior_weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} success probabilities but {} behavior weights",
            success_probs.len(),
            behavior_weights.len()
        )));
    }
    if success_probs.is_empty() {
        return Err(Error::DimensionMismatch("bandit needs at least one arm".into()));
    }
    if let Some(&bad) = success_probs
        .iter()
        .find(|p| !p.is_finite() || !(0.0..=1.0).contains(*p))
    {
        return Err(Error::InvalidProbability {
            what: "success probability".into(),
            value: bad,
        });
    }
    let k = success_probs.len();
    let spec = MdpSpec {
        n_states: 3,
        actions_per_state: vec![k, 0, 0],
        transition: vec![
            success_probs.iter().map(|&p| vec![0.0, p, 1.0 - p]).collect(),
            vec![],
            vec![],
        ],
        initial_dist: vec![1.0, 0.0, 0.0],
        terminal_success: vec![1],
        terminal_failure: vec![2],
    };
    let mdp = Mdp::new(spec)?;
    let policy = Policy::new(vec![behavior_weights.to_vec(), vec![], vec![]])?;
    Ok((mdp, policy))
}

/// On-disk MDP document: the MDP fields plus an optional behavior policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_states: usize,
    pub actions_per_state: Vec<usize>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
    pub terminal_success: Vec<usize>,
    pub terminal_failure: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn new(mdp: &Mdp, behavior: Option<&Policy>) -> Self {
        let spec = mdp.spec().clone();
        Self {
            n_states: spec.n_states,
            actions_per_state: spec.actions_per_state,
            transition: spec.transition,
            initial_dist: spec.initial_dist,
            terminal_success: spec.terminal_success,
            terminal_failure: spec.terminal_failure,
            behavior: behavior.map(|p| p.rows().to_vec()),
        }
    }

    /// Parses a JSON document, reporting the line of any syntax or schema error.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("MDP file serializes");
        out.push('\n');
        out
    }

    /// Builds the MDP and, when present, the embedded behavior policy.
    pub fn build(&self) -> Result<(Mdp, Option<Policy>)> {
        let mdp = Mdp::new(MdpSpec {
            n_states: self.n_states,
            actions_per_state: self.actions_per_state.clone(),
            transition: self.transition.clone(),
            initial_dist: self.initial_dist.clone(),
            terminal_success: self.terminal_success.clone(),
            terminal_failure: self.terminal_failure.clone(),
        })?;
        let behavior = match &self.behavior {
            Some(rows) => {
                let p = Policy::new(rows.clone())?;
                mdp.check_policy(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok((mdp, behavior))
    }
}
