//! Explicit-state checking of mutual exclusion algorithms: composition with
//! register processes, exploration, properties and counterexamples.

pub mod explore;
pub mod properties;
pub mod system;
pub mod timeline;

use thiserror::Error;

use crate::action::ThreadId;
use crate::algorithms::AlgorithmError;
use crate::register::RegisterError;

pub use explore::{explore, StateGraph};
pub use properties::{
    check_mutex, check_reach, check_reach_all, check_reach_divergence, Counterexample, EdgeList, Lts, Outcome,
    Property,
};
pub use system::{Label, System, SystemConfig};
pub use timeline::{render_timeline, Timeline};

/// States explored before giving up, unless overridden.
pub const DEFAULT_STATE_LIMIT: usize = 50_000_000;

/// Environment variable overriding [`DEFAULT_STATE_LIMIT`].
pub const STATE_LIMIT_VAR: &str = "REGMC_STATE_LIMIT";

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("no register named `{0}`")]
    UnknownRegister(String),
    #[error("bad register assignment: {0}")]
    Assignment(String),
    #[error("thread {thread}: {message}")]
    Runtime { thread: ThreadId, message: String },
    #[error("limit exceeded: {0}")]
    Limit(String),
    #[error("bad state limit `{0}`")]
    BadLimit(String),
    #[error("cannot draw timeline: {0}")]
    Timeline(String),
}

/// The state limit from [`STATE_LIMIT_VAR`], or the default.
pub fn state_limit_from_env() -> Result<usize, CheckError> {
    match std::env::var(STATE_LIMIT_VAR) {
        Ok(v) => v.trim().replace('_', "").parse().map_err(|_| CheckError::BadLimit(v)),
        Err(_) => Ok(DEFAULT_STATE_LIMIT),
    }
}

/// Builds and explores the system described by `config`.
pub fn explore_config(config: SystemConfig, limit: usize) -> Result<StateGraph, CheckError> {
    explore(System::new(config)?, limit)
}
