//! Exact analysis of success conditioning on tabular episodic MDPs.
//!
//! Given an MDP whose episodes end in a success or failure terminal and a
//! behavior policy π₀, the crate computes success probabilities, occupancies,
//! the success-conditioned policy π₊ and its action-influence, checks the
//! identities relating them, and provides Monte Carlo and proxy-reward
//! tooling around the same objects.
//!
//! ```
//! use sc_lab::{make_bandit, ConditioningAnalysis};
//!
//! let (mdp, pi0) = make_bandit(&[0.495, 0.505], &[0.5, 0.5]).unwrap();
//! let a = ConditioningAnalysis::compute(&mdp, &pi0).unwrap();
//! assert!((a.conditioned_values.rho - 0.50005).abs() < 1e-12);
//! assert!((a.influence.at(0) - 1e-4).abs() < 1e-12);
//! ```

pub mod dp;
pub mod error;
mod float_repr;
pub mod generate;
pub mod identities;
pub mod linalg;
pub mod mdp;
pub mod proxy_rewards;
pub mod sampling;
pub mod special;
pub mod trust_region;

pub use dp::{
    action_influence, occupancy, occupancy_pair, success_conditioned_policy, value_bundle,
    ConditioningAnalysis, InfluenceProfile, OccupancyPair, ValueBundle,
};
pub use error::{Error, Result};
pub use identities::{IdentityReport, Tolerances};
pub use mdp::{make_bandit, validate_mdp, Mdp, MdpFile, MdpSpec, Policy};
pub use trust_region::DivergenceKind;
