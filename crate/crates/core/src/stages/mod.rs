//! The four pipeline stages. Each stage drives one or more agent sessions,
//! parses their structured final messages and enforces its own mechanical
//! rules on top of what the agents claim.

pub mod analyzer;
pub mod checker;
pub mod envelope;
pub mod evolution;
pub mod generator;
pub mod templates;

use std::io;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::runtime::{
    AgentSession, AgentSessionConfig, BackendError, Role, SessionError, SharedBackend,
    DEFAULT_MAX_TURNS, DEFAULT_OUTPUT_LIMIT, DEFAULT_TOOL_TIMEOUT,
};
use crate::toolkit::NetworkPolicy;

pub use templates::Templates;

/// Infrastructure failures. A stage error aborts the run; it is never a
/// verdict.
#[derive(Debug, Error)]
pub enum StageError {
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("session failure: {0}")]
    Session(SessionError),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

impl From<SessionError> for StageError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Backend(b) => StageError::Backend(b),
            other => StageError::Session(other),
        }
    }
}

impl From<crate::kb::KbError> for StageError {
    fn from(e: crate::kb::KbError) -> Self {
        StageError::Other(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_turns: usize,
    pub tool_timeout: Duration,
    pub output_limit: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            tool_timeout: DEFAULT_TOOL_TIMEOUT,
            output_limit: DEFAULT_OUTPUT_LIMIT,
        }
    }
}

/// Settings shared by every stage of one report.
#[derive(Debug, Clone)]
pub struct StageEnv {
    pub report_id: String,
    pub limits: Limits,
    pub templates: Templates,
    pub network: NetworkPolicy,
    /// Trajectories are persisted here as `<session id>.jsonl`.
    pub trajectory_dir: Option<PathBuf>,
    /// Environment label recorded in evidence fingerprints.
    pub image: String,
    /// Operator notes on building and running the project.
    pub setup_notes: String,
}

impl StageEnv {
    pub fn new(report_id: impl Into<String>) -> Self {
        Self {
            report_id: report_id.into(),
            limits: Limits::default(),
            templates: Templates::default(),
            network: NetworkPolicy::Disabled,
            trajectory_dir: None,
            image: "local".into(),
            setup_notes: String::new(),
        }
    }

    pub fn session_id(&self, role: Role, suffix: Option<usize>) -> String {
        match suffix {
            Some(n) => format!("{}-{}-{n}", self.report_id, role),
            None => format!("{}-{}", self.report_id, role),
        }
    }

    pub(crate) fn setup(&self) -> &str {
        if self.setup_notes.trim().is_empty() {
            "(none)"
        } else {
            &self.setup_notes
        }
    }

    pub(crate) fn open_session(
        &self,
        role: Role,
        system_prompt: &str,
        tools: &[&str],
        backend: &SharedBackend,
        suffix: Option<usize>,
    ) -> Result<AgentSession, StageError> {
        let mut config = AgentSessionConfig::new(role, system_prompt, tools);
        config.max_turns = self.limits.max_turns;
        config.per_tool_timeout = self.limits.tool_timeout;
        config.output_truncation_limit = self.limits.output_limit;
        let id = self.session_id(role, suffix);
        let persist = self
            .trajectory_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.jsonl")));
        Ok(AgentSession::new(
            config,
            backend.clone(),
            id,
            persist.as_deref(),
        )?)
    }
}
