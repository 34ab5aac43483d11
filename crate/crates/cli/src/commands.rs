//! One function per subcommand. Each returns the rendered output and whether
//! its verification (if any) passed.

use std::fs;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use sc_lab::identities::{all_reports, Tolerances};
use sc_lab::proxy_rewards::{default_thetas, sweep_csv, threshold_sweep, BetaBanditConfig};
use sc_lab::sampling::{empirical_policy, filter_successes, offline_bound_check, sample_trajectories};
use sc_lab::trust_region::{rare_action_tolerance, verify_optimality};
use sc_lab::{validate_mdp, ConditioningAnalysis, DivergenceKind, Mdp, MdpFile, Policy};

use crate::output::{float, json_document, Metadata};

pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, passed: true }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// MDP document (JSON). A missing `behavior` field means the uniform policy.
    #[arg(long)]
    pub input: PathBuf,
}

/// A validated MDP with its behavior policy and the raw bytes it came from.
struct Loaded {
    mdp: Mdp,
    behavior: Policy,
    bytes: Vec<u8>,
}

fn load(args: &InputArgs) -> Result<Loaded> {
    let path = &args.input;
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let file =
        MdpFile::from_json(text).with_context(|| format!("invalid MDP document {}", path.display()))?;
    let (mdp, behavior) = file
        .build()
        .with_context(|| format!("invalid MDP in {}", path.display()))?;
    let behavior = behavior.unwrap_or_else(|| Policy::uniform(&mdp));
    validate_mdp(&mdp, &behavior).with_context(|| format!("MDP in {} fails validation", path.display()))?;
    Ok(Loaded { mdp, behavior, bytes })
}

fn config<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Outcome> {
    let loaded = load(&args.input)?;
    let analysis = ConditioningAnalysis::compute(&loaded.mdp, &loaded.behavior)?;
    let rho = analysis.behavior_values.rho;
    let rho_plus = analysis.conditioned_values.rho;
    let meta = Metadata::new("analyze", config(args), Some(&loaded.bytes));
    let body = json!({
        "behavior": loaded.behavior,
        "rho": rho,
        "rho_plus": rho_plus,
        "improvement": rho_plus - rho,
        "analysis": analysis,
    });
    Ok(Outcome::ok(json_document(&meta, &body)?))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IdentitiesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// One tolerance for every check; per-check defaults otherwise.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Replace π₊ by a perturbed policy so that the suites must fail.
    #[arg(long, hide = true)]
    pub corrupt_pi_plus: bool,
}

/// Moves half of each row's mass onto its least likely action.
fn corrupt(policy: &Policy) -> Policy {
    let rows = policy
        .rows()
        .iter()
        .map(|row| {
            if row.len() < 2 {
                return row.clone();
            }
            let (low, _) = row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("row is nonempty");
            let mut out: Vec<f64> = row.iter().map(|p| 0.5 * p).collect();
            out[low] += 0.5;
            out
        })
        .collect();
    Policy::new(rows).expect("mixture of distributions")
}

pub fn identities(args: &IdentitiesArgs) -> Result<Outcome> {
    let loaded = load(&args.input)?;
    let (mdp, behavior) = (&loaded.mdp, &loaded.behavior);
    let tol = match args.tol {
        Some(t) => {
            ensure!(
                t >= 0.0 && t.is_finite(),
                "--tol must be nonnegative and finite, got {t}"
            );
            Tolerances::uniform(t)
        }
        None => Tolerances::default(),
    };
    let analysis = if args.corrupt_pi_plus {
        let honest = ConditioningAnalysis::compute(mdp, behavior)?;
        ConditioningAnalysis::with_conditioned(mdp, behavior, corrupt(&honest.conditioned))?
    } else {
        ConditioningAnalysis::compute(mdp, behavior)?
    };
    let reports = all_reports(&analysis, mdp, behavior, &tol)?;
    let passed = reports.iter().all(|r| r.passed);
    let mut cfg = config(args);
    cfg["tolerances"] = serde_json::to_value(tol)?;
    let meta = Metadata::new("identities", cfg, Some(&loaded.bytes));
    let text = json_document(&meta, &json!({ "passed": passed, "reports": reports }))?;
    Ok(Outcome { text, passed })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrustRegionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Random feasible policies drawn by the optimality oracle.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Slack on the oracle gap and on the binding constraint.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

pub fn trust_region(args: &TrustRegionArgs) -> Result<Outcome> {
    let loaded = load(&args.input)?;
    let report = verify_optimality(&loaded.mdp, &loaded.behavior, args.n, args.seed, args.tol)?;
    let meta = Metadata::new("trust-region", config(args), Some(&loaded.bytes));
    let passed = report.passed;
    Ok(Outcome {
        text: json_document(&meta, &report)?,
        passed,
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ToleranceSweepArgs {
    /// Comma-separated rare-action probabilities.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])]
    pub deltas: Vec<f64>,
    /// Divergence budget.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Number of common actions.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

pub fn tolerance_sweep(args: &ToleranceSweepArgs) -> Result<Outcome> {
    ensure!(!args.deltas.is_empty(), "--deltas is empty");
    let meta = Metadata::new("tolerance-sweep", config(args), None);
    let mut text = meta.comment_lines();
    text.push_str("delta,p_chi2,p_kl,p_chi2/sqrt(delta),p_kl*log(1/delta)\n");
    for &delta in &args.deltas {
        let chi2 = rare_action_tolerance(delta, args.k, args.epsilon, DivergenceKind::Chi2)?;
        let kl = rare_action_tolerance(delta, args.k, args.epsilon, DivergenceKind::ForwardKl)?;
        let row = [delta, chi2, kl, chi2 / delta.sqrt(), kl * (1.0 / delta).ln()];
        text.push_str(&row.map(float).join(","));
        text.push('\n');
    }
    Ok(Outcome::ok(text))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Number of episodes.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn sample(args: &SampleArgs) -> Result<Outcome> {
    let loaded = load(&args.input)?;
    let trajs = sample_trajectories(&loaded.mdp, &loaded.behavior, args.n, args.seed, None)?;
    let meta = Metadata::new("sample", config(args), Some(&loaded.bytes));
    let body = trajs.to_text();
    // keep the format tag on the first line
    let (tag, rest) = body.split_once('\n').expect("trajectory text has a header");
    Ok(Outcome::ok(format!("{tag}\n{}{rest}", meta.comment_lines())))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Episodes sampled from the behavior policy.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additive smoothing for the empirical policy fitted to the successes.
    #[arg(long, default_value_t = 0.5)]
    pub smoothing: f64,
}

pub fn bound_check(args: &BoundCheckArgs) -> Result<Outcome> {
    let loaded = load(&args.input)?;
    let (mdp, behavior) = (&loaded.mdp, &loaded.behavior);
    let trajs = sample_trajectories(mdp, behavior, args.n, args.seed, None)?;
    let successes = filter_successes(&trajs);
    let fitted = empirical_policy(&successes, args.smoothing, mdp, behavior)
        .context("cannot fit a policy to the successful episodes")?;
    let report = offline_bound_check(mdp, behavior, &fitted.policy)?;
    let meta = Metadata::new("bound-check", config(args), Some(&loaded.bytes));
    let passed = report.holds;
    let body = json!({
        "episodes": trajs.len(),
        "successes": successes.len(),
        "unvisited_states": fitted.unvisited,
        "candidate": fitted.policy,
        "report": report,
    });
    Ok(Outcome {
        text: json_document(&meta, &body)?,
        passed,
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdSweepArgs {
    /// Comma-separated thresholds in [0, 1); defaults to 0.00, 0.01, …, 0.99, 0.999.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    /// Seed for the moderate arms' shape parameters.
    #[arg(long, default_value_t = BetaBanditConfig::default().seed)]
    pub seed: u64,
}

pub fn threshold_sweep_cmd(args: &ThresholdSweepArgs) -> Result<Outcome> {
    let thetas = args.thetas.clone().unwrap_or_else(default_thetas);
    let bandit = BetaBanditConfig {
        seed: args.seed,
        ..BetaBanditConfig::default()
    };
    let rows = threshold_sweep(&bandit, &thetas)?;
    let mut cfg = config(args);
    cfg["thetas"] = json!(thetas);
    cfg["bandit"] = serde_json::to_value(&bandit)?;
    let meta = Metadata::new("threshold-sweep", cfg, None);
    Ok(Outcome::ok(format!(
        "{}{}",
        meta.comment_lines(),
        sweep_csv(&rows)
    )))
}
