use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown canonical instance: {0}")]
    UnknownInstance(String),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("malformed strategy: {0}")]
    MalformedStrategy(String),

    #[error("unreachable observation {obs} for agent {agent} at t={t}")]
    UnreachableObservation { agent: usize, t: usize, obs: usize },

    #[error("unreachable continuation (action {action}, next observation {obs}) for agent {agent} at t={t}")]
    UnreachableContinuation {
        agent: usize,
        t: usize,
        action: usize,
        obs: usize,
    },

    #[error("unreachable realization: {0}")]
    UnreachableRealization(String),

    #[error("unreachable conditioning event")]
    UnreachableEvent,

    #[error("incomplete opponent strategy: agent {agent} has no action at t={t} for {key}")]
    IncompleteStrategy { agent: usize, t: usize, key: String },

    #[error("inconsistent time indices: {0}")]
    InconsistentTime(String),

    #[error("missing promoted element: {0}")]
    MissingPromoted(String),

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
