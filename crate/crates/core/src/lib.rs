//! Exact desk-scale analysis of finite decentralized POMDPs under an
//! n-step delayed-sharing information pattern.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the finite system (kernels, costs, horizon, delay) and its validation.
//! - [`info`]: common/private splits of joint histories and reachable realizations.
//! - [`filter`]: the private posterior over (state, other agents' private data).
//! - [`strategy`]: deterministic per-agent strategy tables.
//! - [`dp`]: person-by-person dynamic programming and best-response sweeps.
//! - [`oracle`]: brute-force trajectory enumeration used as ground truth.
//! - [`falsify`]: numerical certificates built on the two routes above.
//! - [`cli`]: batch front end producing JSON reports.
//!
//! Agents are indexed from 0.

pub mod cli;
pub mod dp;
pub mod error;
pub mod falsify;
pub mod filter;
pub mod info;
pub mod model;
pub mod oracle;
pub mod strategy;

pub use dp::{cost_via_beliefs, pbp_sweep, solve_best_response, verify_value_dominance, ValueTable};
pub use error::{Error, Result};
pub use falsify::GapReport;
pub use filter::{Belief, OtherSpace};
pub use info::{CommonInfo, InfoRealization, JointHistory, OtherPrivate, PrivateInfo};
pub use model::{canonical_instance, validate_model, ModelSpec, Violation};
pub use strategy::{AgentStrategy, StrategyProfile};

/// Max-abs tolerance used when comparing two probability or value computations.
pub const TOL_COMPARE: f64 = 1e-10;
/// Minimum decrease that counts as a strict improvement in best-response sweeps.
pub const TOL_IMPROVE: f64 = 1e-12;
