//! Generic mixed-observability POMDP machinery: model, belief filter,
//! exact expectimax planner, point-based α-vector solver and Monte Carlo
//! policy evaluation.

pub mod belief;
pub mod evaluate;
pub mod exact;
pub mod model;
pub mod pbvi;
pub mod policy;

use thiserror::Error;

pub use belief::{belief_update, Belief, BeliefKey};
pub use evaluate::{policy_value, PolicyValue};
pub use exact::{exact_plan, ExactOptions, ExactPlan};
pub use model::{Horizon, MixedObservabilityModel, ModelSpec, Transition};
pub use pbvi::{pbvi_solve, BeliefSampling, PbviOptions, PbviReport, SolveStatus};
pub use policy::{policy_action, Policy, PolicyKind, PolicyMetadata};

/// Two values closer than this are treated as tied, and the lower action
/// index wins.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PomdpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("belief has {found} weights, model has {expected} hidden states")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown visible state {0}")]
    UnknownVisibleState(usize),
    #[error("action {action} is not enabled in visible state {visible}")]
    ActionNotEnabled { visible: usize, action: usize },
    #[error("observation has zero likelihood under the current belief")]
    ZeroLikelihood,
    #[error("belief tree exceeded the node budget of {0}")]
    BudgetExceeded(usize),
    #[error("exact planning requires a finite horizon")]
    InfiniteHorizon,
    #[error("point-based solving with an unbounded horizon requires discount < 1")]
    UndiscountedInfiniteHorizon,
    #[error("finite-horizon model is not time-encoded: {0}")]
    NonStationaryHorizon(String),
    #[error("no lookup-tree entry for visible state {0} at this belief")]
    UnreachableBelief(usize),
    #[error("visible state {0} is terminal")]
    TerminalState(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("policy document: {0}")]
    PolicyFormat(String),
}
