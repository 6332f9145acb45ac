//! Compact, index-addressed view of a trajectory. An agent reads the view
//! first and fetches full steps on demand.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::trajectory::{Step, StepRecord, Trajectory};
use super::SessionError;

pub const DIGEST_MAX_CHARS: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub index: usize,
    pub kind: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedView {
    pub entries: Vec<IndexEntry>,
    pub total: usize,
}

impl fmt::Display for IndexedView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} steps", self.total)?;
        for e in &self.entries {
            writeln!(f, "[{}] {}", e.index, e.digest)?;
        }
        Ok(())
    }
}

/// Full, untruncated content of one stored step.
pub type StepDetail = StepRecord;

fn first_line(s: &str) -> &str {
    s.lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim()
}

fn clip(s: &str, max_chars: usize) -> String {
    if s.chars().count() <= max_chars {
        return s.to_string();
    }
    let mut out: String = s.chars().take(max_chars.saturating_sub(1)).collect();
    out.push('…');
    out
}

fn digest(step: &Step) -> String {
    let raw = match step {
        Step::Thinking { text } => format!("thinking: {}", first_line(text)),
        Step::PhasePrompt { text } => format!("prompt: {}", first_line(text)),
        Step::FinalMessage { text } => format!("final: {}", first_line(text)),
        Step::ToolCall { tool, args } => {
            let main = [
                "cmd", "path", "pattern", "url", "index", "query", "title", "entry",
            ]
            .iter()
            .find_map(|k| args.get(*k))
            .map(|v| first_line(v).to_string())
            .unwrap_or_default();
            format!("call {tool}: {main}")
        }
        Step::ToolResult {
            output,
            exit_code,
            truncated,
        } => format!(
            "result exit={exit_code} {}B{}: {}",
            output.len(),
            if *truncated { " (truncated)" } else { "" },
            first_line(output)
        ),
    };
    clip(&raw, DIGEST_MAX_CHARS)
}

pub fn render_index(trajectory: &Trajectory) -> IndexedView {
    IndexedView {
        entries: trajectory
            .steps
            .iter()
            .map(|r| IndexEntry {
                index: r.index,
                kind: r.step.kind().to_string(),
                digest: digest(&r.step),
            })
            .collect(),
        total: trajectory.len(),
    }
}

pub fn fetch_step(trajectory: &Trajectory, index: usize) -> Result<StepDetail, SessionError> {
    trajectory
        .steps
        .get(index)
        .cloned()
        .ok_or(SessionError::IndexOutOfRange {
            index,
            len: trajectory.len(),
        })
}
