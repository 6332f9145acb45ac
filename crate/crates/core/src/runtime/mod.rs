//! Agent runtime: a loop of model turns and tool executions that records a
//! complete trajectory.
//!
//! A session is driven by a [`Backend`]. Each backend call is one turn; the
//! turn may carry thinking, tool calls (executed sequentially through a
//! [`ToolHost`]) and a final message that closes the current phase. Further
//! phases are entered with [`AgentSession::continue_session`], which keeps
//! the whole context.

mod backend;
pub mod http;
mod index;
pub mod scripted;
mod session;
mod trajectory;

use thiserror::Error;

pub use backend::{
    shared, Backend, BackendError, BackendKind, BackendRef, ModelRequest, ModelTurn, SharedBackend,
    ToolCallRequest, ToolSpec, DEFAULT_API_KEY_ENV,
};
pub use index::{fetch_step, render_index, IndexEntry, IndexedView, StepDetail, DIGEST_MAX_CHARS};
pub use scripted::{ScriptedBackend, ScriptedTurn, Transcript};
pub use session::{
    AgentSession, AgentSessionConfig, Role, ToolHost, ToolReply, DEFAULT_MAX_TURNS,
    DEFAULT_OUTPUT_LIMIT, DEFAULT_TOOL_TIMEOUT, INTERACTIVE_TOOLS, REGISTERED_TOOLS,
};
pub use trajectory::{Step, StepRecord, Trajectory};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    Backend(#[from] BackendError),
    #[error("turn limit of {limit} exceeded")]
    TurnLimitExceeded { limit: usize },
    #[error("session has no final message for the current phase")]
    SessionClosed,
    #[error("session already started")]
    AlreadyStarted,
    #[error("invalid session config: {0}")]
    ConfigInvalid(String),
    #[error("step index {index} out of range for trajectory of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

const ELISION: &str = "\n[... {} bytes elided ...]\n";

/// Keeps the head and tail halves of `text` within `limit` bytes, joined by
/// an elision marker. Text within the limit is returned unchanged.
pub fn truncate_middle(text: &str, limit: usize) -> String {
    if text.len() <= limit {
        return text.to_string();
    }
    let mut head_end = limit / 2;
    while !text.is_char_boundary(head_end) {
        head_end -= 1;
    }
    let mut tail_start = text.len() - (limit - limit / 2);
    while !text.is_char_boundary(tail_start) {
        tail_start += 1;
    }
    let elided = tail_start - head_end;
    format!(
        "{}{}{}",
        &text[..head_end],
        ELISION.replace("{}", &elided.to_string()),
        &text[tail_start..]
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_head_and_tail() {
        assert_eq!(truncate_middle("short", 10), "short");
        let s = format!("{}{}{}", "H".repeat(50), "m".repeat(1000), "T".repeat(50));
        let t = truncate_middle(&s, 100);
        assert!(t.starts_with(&"H".repeat(50)));
        assert!(t.ends_with(&"T".repeat(50)));
        assert!(t.contains("[... 1000 bytes elided ...]"));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "é".repeat(100);
        let t = truncate_middle(&s, 51);
        assert!(t.len() < s.len());
    }
}
