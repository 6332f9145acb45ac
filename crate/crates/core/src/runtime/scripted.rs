//! Deterministic backend that replays a fixed transcript.
//!
//! Transcript format (JSON):
//!
//! ```json
//! { "turns": [
//!     { "expect": "Phase 1", "thinking": "look around",
//!       "tool_calls": [ { "tool": "bash", "args": { "cmd": "ls" } } ] },
//!     { "final": "done" }
//! ] }
//! ```
//!
//! Turns are consumed strictly in order. When `expect` is present it must
//! be a substring of the model-facing input of that turn, otherwise the
//! session fails.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendError, ModelRequest, ModelTurn};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
    #[serde(flatten)]
    pub turn: ModelTurn,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<ScriptedTurn>,
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    transcript: Transcript,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, transcript: Transcript) -> Self {
        Self {
            name: name.into(),
            transcript,
            cursor: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| {
            BackendError::Unavailable(format!("cannot read transcript {}: {e}", path.display()))
        })?;
        let transcript: Transcript = serde_json::from_str(&text).map_err(|e| {
            BackendError::Unavailable(format!("bad transcript {}: {e}", path.display()))
        })?;
        Ok(Self::new(path.display().to_string(), transcript))
    }

    /// Turns consumed so far.
    pub fn consumed(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.transcript.turns.len() - self.cursor
    }
}

impl Backend for ScriptedBackend {
    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        let Some(next) = self.transcript.turns.get(self.cursor) else {
            return Err(BackendError::ScriptExhausted {
                transcript: self.name.clone(),
                consumed: self.cursor,
            });
        };
        if let Some(expected) = &next.expect {
            if !request.new_input.contains(expected.as_str()) {
                return Err(BackendError::ScriptMismatch {
                    transcript: self.name.clone(),
                    turn: self.cursor,
                    expected: expected.clone(),
                });
            }
        }
        self.cursor += 1;
        Ok(next.turn.clone())
    }
}
