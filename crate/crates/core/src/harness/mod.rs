//! Tutor agents, the scripted user, and the session and experiment runners.
//!
//! Agents sit behind [`TutorAgent`] and are created by name through an
//! [`AgentRegistry`]. The built-in names are `oracle`,
//! `fault:confirmation_seeker`, `fault:ambiguity_misreader`,
//! `fault:case_brittle`, `fault:random:<p>` and `endpoint:<config.toml>`.

mod endpoint;
mod experiment;
mod fault;
mod oracle;
mod registry;
mod session;
mod stats;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conformance::Turn;
use crate::fsm::{FsmSpec, StateId};
use crate::protocol::ProtocolSpec;
use crate::render::FormalityLevel;

pub use endpoint::{ChatEndpointConfig, ConfigError, EndpointAgent, PromptPlacement};
pub use experiment::{
    run_experiment, run_id, AbortedRun, ConditionOutcome, ExperimentCondition, ExperimentError, RunRecord,
};
pub use fault::{FaultAgent, FaultKind, FaultProfile};
pub use oracle::{OracleAgent, EASY_QUESTIONS, HARD_QUESTIONS};
pub use registry::{AgentFactory, AgentRegistry, RegistryError};
pub use session::{
    run_session, scripted_user_step, SessionContext, SessionError, SessionRecord, UserUtterance, FALLBACK_ANSWER,
};
pub use stats::{summarize, ConditionSummary, FiveNumber, SummaryError};

/// Whether an agent instance may serve several sessions at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Affinity {
    Concurrent,
    SingleSession,
}

/// Everything an agent sees when producing its next turn.
#[derive(Debug, Clone, Copy)]
pub struct TutorContext<'a> {
    pub protocol: &'a ProtocolSpec,
    pub fsm: &'a FsmSpec,
    pub level: FormalityLevel,
    /// The protocol rendered at `level`.
    pub prompt: &'a str,
    pub history: &'a [Turn],
    pub state: StateId,
    pub seed: u64,
}

impl TutorContext<'_> {
    /// Index of the turn being produced.
    pub fn turn_index(&self) -> u32 {
        self.history.len() as u32 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TutorReply {
    pub text: String,
    pub next_state: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

pub trait TutorAgent: Send + Sync {
    fn name(&self) -> &str;

    fn affinity(&self) -> Affinity {
        Affinity::Concurrent
    }

    fn respond(&self, ctx: &TutorContext<'_>) -> Result<TutorReply, AgentError>;
}

/// Independent 64-bit seed for stream `index` under `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}
