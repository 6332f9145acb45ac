use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("scripted transcript {transcript} exhausted after {consumed} turns")]
    ScriptExhausted { transcript: String, consumed: usize },
    #[error(
        "scripted transcript {transcript} turn {turn}: expected input containing {expected:?}"
    )]
    ScriptMismatch {
        transcript: String,
        turn: usize,
        expected: String,
    },
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

/// Argument description for one tool, as advertised to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    /// (name, description, required)
    pub params: &'static [(&'static str, &'static str, bool)],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub tool: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

/// What the model produced in one turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTurn {
    #[serde(default)]
    pub thinking: Option<String>,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, rename = "final")]
    pub final_message: Option<String>,
}

pub struct ModelRequest<'a> {
    pub role: &'a str,
    pub system_prompt: &'a str,
    pub trajectory: &'a Trajectory,
    /// Model-facing text of every step since the model's previous turn:
    /// the phase prompt and/or tool results (already truncated).
    pub new_input: &'a str,
    pub tools: &'a [ToolSpec],
    pub output_limit: usize,
}

pub trait Backend: Send {
    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<ModelTurn, BackendError>;
}

/// Backends are shared between sessions of the same role, so a scripted
/// transcript cursor advances across every session that uses it.
pub type SharedBackend = Arc<Mutex<dyn Backend>>;

pub fn shared<B: Backend + 'static>(backend: B) -> SharedBackend {
    Arc::new(Mutex::new(backend))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Scripted,
    HttpChat,
}

pub const DEFAULT_API_KEY_ENV: &str = "VOUCH_API_KEY";

/// Where a role's model lives.
///
/// For `scripted`, `location` is a transcript path; `{report_id}` in it is
/// substituted per report. For `http-chat`, `location` is the endpoint URL
/// of a chat-completions API and `model` names the model; the credential is
/// read from the environment variable `api_key_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRef {
    pub kind: BackendKind,
    pub location: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

impl BackendRef {
    pub fn scripted(path: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            location: path.into(),
            model: None,
            api_key_env: None,
        }
    }

    pub fn resolved_location(&self, report_id: &str) -> String {
        self.location.replace("{report_id}", report_id)
    }

    /// Opens the backend. Relative transcript paths resolve against `base`.
    pub fn open(&self, report_id: &str, base: &Path) -> Result<SharedBackend, BackendError> {
        let location = self.resolved_location(report_id);
        match self.kind {
            BackendKind::Scripted => {
                let path = base.join(&location);
                Ok(shared(super::scripted::ScriptedBackend::load(&path)?))
            }
            BackendKind::HttpChat => {
                let env = self
                    .api_key_env
                    .clone()
                    .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string());
                let key = std::env::var(&env).map_err(|_| {
                    BackendError::Unavailable(format!("credential variable {env} is not set"))
                })?;
                let model = self.model.clone().ok_or_else(|| {
                    BackendError::Unavailable("http-chat backend needs a model".into())
                })?;
                Ok(shared(super::http::HttpChatBackend::new(
                    location, model, key,
                )))
            }
        }
    }
}
