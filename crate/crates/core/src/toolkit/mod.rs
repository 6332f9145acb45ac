//! Sandboxed tools: shell execution, file editing, code search and a
//! policy-gated web fetch, all rooted at a workspace.
//!
//! Path arguments of `edit` and `search` are confined: after symlink
//! resolution they must lie under the workspace (writes) or under the
//! workspace or the KB root (reads). `bash` runs with the workspace as cwd
//! in its own process group; isolation beyond that is the job of the
//! container the pipeline runs in.

mod bash;
mod confine;
mod edit;
mod search;
mod web;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CommandRecord;
use crate::runtime::{ToolCallRequest, ToolHost, ToolReply, ToolSpec};

pub use bash::{exec_bash, CAPTURE_CAP, TIMEOUT_EXIT_CODE};
pub use confine::{confine, Access};
pub use edit::{edit_file, EditOp};
pub use search::{search, SearchHit, SearchResult};
pub use web::{web_fetch, FETCH_CAP};

/// Environment variable carrying the network policy to child processes and
/// overriding the configured policy.
pub const NETWORK_ENV: &str = "VOUCH_NETWORK";

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("path {0} escapes the workspace")]
    PathEscapesWorkspace(String),
    #[error("target text not found in {0}")]
    TargetNotFound(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("network access is disabled")]
    NetworkDisabled,
    #[error("fetch failed: {0}")]
    FetchFailure(String),
    #[error("timed out after {after:?}")]
    Timeout {
        after: Duration,
        partial: Box<ToolOutput>,
    },
    #[error("cannot spawn: {0}")]
    SpawnFailure(String),
    #[error("workspace is read-only for this session")]
    ReadOnly,
    #[error("missing argument {0}")]
    MissingArgument(&'static str),
    #[error("invalid argument {name}: {message}")]
    InvalidArgument { name: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub duration_ms: u64,
    pub truncated: bool,
}

impl ToolOutput {
    pub fn text(stdout: impl Into<String>) -> Self {
        Self {
            stdout: stdout.into(),
            ..Default::default()
        }
    }

    /// Single text block shown to the model.
    pub fn render(&self) -> String {
        let mut out = self.stdout.clone();
        if !self.stderr.is_empty() {
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("[stderr]\n");
            out.push_str(&self.stderr);
        }
        if self.truncated {
            out.push_str("\n[output capped]");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPolicy {
    #[default]
    Disabled,
    Enabled,
}

impl NetworkPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkPolicy::Disabled => "disabled",
            NetworkPolicy::Enabled => "enabled",
        }
    }

    /// Reads [`NETWORK_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(NETWORK_ENV).ok().and_then(|v| v.parse().ok())
    }
}

impl FromStr for NetworkPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "enabled" | "on" | "1" | "true" => Ok(Self::Enabled),
            "disabled" | "off" | "0" | "false" => Ok(Self::Disabled),
            other => Err(format!("unknown network policy {other:?}")),
        }
    }
}

impl fmt::Display for NetworkPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ToolContext {
    pub workspace: PathBuf,
    /// Additional read-only root.
    pub kb_root: Option<PathBuf>,
    pub network: NetworkPolicy,
    /// Only `view` edits are allowed.
    pub read_only: bool,
}

impl ToolContext {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Self {
            workspace: workspace.into(),
            kb_root: None,
            network: NetworkPolicy::Disabled,
            read_only: false,
        }
    }

    pub fn read_roots(&self) -> Vec<&Path> {
        let mut roots = vec![self.workspace.as_path()];
        if let Some(kb) = &self.kb_root {
            roots.push(kb);
        }
        roots
    }
}

/// One bash execution, with full captured streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecRecord {
    pub command: String,
    pub exit_code: i32,
    pub duration_ms: u64,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

/// Writes each record's streams to `cmd-NNN.stdout` / `cmd-NNN.stderr`
/// under `dir` (numbering continues after `offset`) and returns the
/// matching command log entries.
pub fn persist_execs(
    dir: &Path,
    records: &[ExecRecord],
    offset: usize,
) -> io::Result<Vec<CommandRecord>> {
    std::fs::create_dir_all(dir)?;
    let mut log = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let n = offset + i + 1;
        let out = format!("cmd-{n:03}.stdout");
        let err = format!("cmd-{n:03}.stderr");
        std::fs::write(dir.join(&out), &r.stdout)?;
        std::fs::write(dir.join(&err), &r.stderr)?;
        log.push(CommandRecord {
            command: r.command.clone(),
            exit_code: r.exit_code,
            duration_ms: r.duration_ms,
            timed_out: r.timed_out,
            stdout: Some(out),
            stderr: Some(err),
        });
    }
    Ok(log)
}

pub const BASH_SPEC: ToolSpec = ToolSpec {
    name: "bash",
    description: "Run a non-interactive shell command with the workspace as working directory.",
    params: &[
        ("cmd", "shell command line", true),
        (
            "timeout_secs",
            "optional timeout, capped by the session limit",
            false,
        ),
    ],
};

pub const EDIT_SPEC: ToolSpec = ToolSpec {
    name: "edit",
    description: "View or modify a file. op is one of view, create, replace, append.",
    params: &[
        ("path", "file path relative to the workspace", true),
        ("op", "view | create | replace | append", true),
        (
            "content",
            "new text (create, append) or replacement text (replace)",
            false,
        ),
        ("old", "text to replace (replace only)", false),
    ],
};

pub const SEARCH_SPEC: ToolSpec = ToolSpec {
    name: "search",
    description: "Search file contents. Hits are ordered by path then line number.",
    params: &[
        ("pattern", "literal text, or a regex when regex=true", true),
        (
            "path",
            "directory or file to search, default the workspace root",
            false,
        ),
        ("regex", "true to treat pattern as a regex", false),
        ("max_hits", "maximum hits to return, default 50", false),
    ],
};

pub const WEB_FETCH_SPEC: ToolSpec = ToolSpec {
    name: "web_fetch",
    description: "Fetch a URL as text, if the network policy allows it.",
    params: &[("url", "http or https URL", true)],
};

pub const FETCH_STEP_SPEC: ToolSpec = ToolSpec {
    name: "fetch_step",
    description: "Return the full content of one trajectory step by index.",
    params: &[("index", "step index from the trajectory view", true)],
};

pub const KB_SEARCH_SPEC: ToolSpec = ToolSpec {
    name: "kb_search",
    description: "Search knowledge entries by keywords.",
    params: &[("query", "space-separated keywords", true)],
};

pub const CREATE_KNOWLEDGE_SPEC: ToolSpec = ToolSpec {
    name: "create_knowledge",
    description: "Propose a new knowledge entry.",
    params: &[
        ("category", "knowledge category", true),
        ("title", "entry title", true),
        ("keywords", "comma-separated keywords", true),
        ("content", "markdown body", true),
        (
            "provenance",
            "comma-separated trajectory step indices",
            true,
        ),
    ],
};

pub const UPDATE_KNOWLEDGE_SPEC: ToolSpec = ToolSpec {
    name: "update_knowledge",
    description: "Propose new content for an existing knowledge entry.",
    params: &[
        ("entry", "entry reference scope/category/slug", true),
        ("content", "replacement markdown body", true),
        ("keywords", "optional comma-separated keywords", false),
        (
            "provenance",
            "comma-separated trajectory step indices",
            true,
        ),
    ],
};

const ALL_SPECS: [ToolSpec; 8] = [
    BASH_SPEC,
    EDIT_SPEC,
    SEARCH_SPEC,
    WEB_FETCH_SPEC,
    FETCH_STEP_SPEC,
    KB_SEARCH_SPEC,
    CREATE_KNOWLEDGE_SPEC,
    UPDATE_KNOWLEDGE_SPEC,
];

/// Specs for the named tools, in the given order. Unknown names are skipped.
pub fn specs_for(names: &[&str]) -> Vec<ToolSpec> {
    names
        .iter()
        .filter_map(|n| ALL_SPECS.iter().find(|s| s.name == *n).cloned())
        .collect()
}

pub(crate) fn arg<'a>(call: &'a ToolCallRequest, name: &'static str) -> Result<&'a str, ToolError> {
    call.args
        .get(name)
        .map(String::as_str)
        .ok_or(ToolError::MissingArgument(name))
}

pub(crate) fn opt_arg<'a>(call: &'a ToolCallRequest, name: &str) -> Option<&'a str> {
    call.args
        .get(name)
        .map(String::as_str)
        .filter(|s| !s.is_empty())
}

pub(crate) fn parse_arg<T: FromStr>(
    call: &ToolCallRequest,
    name: &'static str,
) -> Result<Option<T>, ToolError>
where
    T::Err: fmt::Display,
{
    opt_arg(call, name)
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e: T::Err| ToolError::InvalidArgument {
                    name,
                    message: e.to_string(),
                })
        })
        .transpose()
}

/// The generic tool host. Every bash execution is appended to an exec log
/// that stages drain to author evidence command logs.
pub struct Toolkit {
    ctx: ToolContext,
    tools: Vec<&'static str>,
    exec_log: Vec<ExecRecord>,
}

impl Toolkit {
    pub const TOOLS: [&'static str; 4] = ["bash", "edit", "search", "web_fetch"];

    pub fn new(ctx: ToolContext) -> Self {
        Self {
            ctx,
            tools: Self::TOOLS.to_vec(),
            exec_log: Vec::new(),
        }
    }

    pub fn context(&self) -> &ToolContext {
        &self.ctx
    }

    pub fn exec_log(&self) -> &[ExecRecord] {
        &self.exec_log
    }

    pub fn drain_exec_log(&mut self) -> Vec<ExecRecord> {
        std::mem::take(&mut self.exec_log)
    }

    /// Runs `cmd` and records it exactly like an agent call would.
    pub fn run_recorded(&mut self, cmd: &str, timeout: Duration) -> Result<ToolOutput, ToolError> {
        let res = exec_bash(cmd, &self.ctx.workspace, timeout, self.ctx.network);
        let (out, timed_out) = match &res {
            Ok(o) => (o.clone(), false),
            Err(ToolError::Timeout { partial, .. }) => ((**partial).clone(), true),
            Err(_) => return res,
        };
        self.exec_log.push(ExecRecord {
            command: cmd.to_string(),
            exit_code: out.exit_code,
            duration_ms: out.duration_ms,
            timed_out,
            stdout: out.stdout,
            stderr: out.stderr,
        });
        res
    }

    fn dispatch(
        &mut self,
        call: &ToolCallRequest,
        timeout: Duration,
    ) -> Result<ToolOutput, ToolError> {
        match call.tool.as_str() {
            "bash" => {
                let cmd = arg(call, "cmd")?;
                let t = parse_arg::<u64>(call, "timeout_secs")?
                    .map(Duration::from_secs)
                    .filter(|t| !t.is_zero())
                    .map_or(timeout, |t| t.min(timeout));
                self.run_recorded(cmd, t)
            }
            "edit" => {
                let op = EditOp::from_args(call)?;
                edit_file(&self.ctx, arg(call, "path")?, &op)
            }
            "search" => {
                let pattern = arg(call, "pattern")?;
                let scope = opt_arg(call, "path").unwrap_or(".");
                let regex = parse_arg::<bool>(call, "regex")?.unwrap_or(false);
                let max_hits = parse_arg::<usize>(call, "max_hits")?.unwrap_or(50);
                let res = search(&self.ctx, pattern, scope, regex, max_hits)?;
                Ok(ToolOutput::text(res.render()))
            }
            "web_fetch" => web_fetch(arg(call, "url")?, self.ctx.network, FETCH_CAP),
            other => Err(ToolError::InvalidArgument {
                name: "tool",
                message: format!("{other} is not provided by this host"),
            }),
        }
    }
}

impl ToolHost for Toolkit {
    fn specs(&self) -> Vec<ToolSpec> {
        specs_for(&self.tools)
    }

    fn invoke(&mut self, call: &ToolCallRequest, timeout: Duration) -> ToolReply {
        match self.dispatch(call, timeout) {
            Ok(out) => ToolReply {
                output: out.render(),
                exit_code: out.exit_code,
            },
            Err(ToolError::Timeout { after, partial }) => ToolReply {
                output: format!(
                    "{}\n[timed out after {}s]",
                    partial.render(),
                    after.as_secs()
                ),
                exit_code: TIMEOUT_EXIT_CODE,
            },
            Err(e) => ToolReply::error(format!("error: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(tool: &str, args: &[(&str, &str)]) -> ToolCallRequest {
        ToolCallRequest {
            tool: tool.into(),
            args: args
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    #[test]
    fn host_records_bash_and_reports_errors_as_replies() {
        let ws = tempfile::tempdir().unwrap();
        let mut tk = Toolkit::new(ToolContext::new(ws.path()));
        let r = tk.invoke(
            &call("bash", &[("cmd", "echo hi; echo oops >&2; exit 3")]),
            Duration::from_secs(5),
        );
        assert_eq!(r.exit_code, 3);
        assert!(r.output.contains("hi") && r.output.contains("[stderr]\noops"));
        let r = tk.invoke(
            &call(
                "edit",
                &[("path", "../x"), ("op", "create"), ("content", "")],
            ),
            Duration::from_secs(5),
        );
        assert_eq!(r.exit_code, 1);
        assert!(r.output.contains("escapes"));
        let log = tk.drain_exec_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].stderr, "oops\n");
        assert!(tk.exec_log().is_empty());
    }

    #[test]
    fn persisted_execs_are_numbered_files() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ExecRecord {
            command: "x".into(),
            exit_code: 1,
            duration_ms: 2,
            timed_out: false,
            stdout: "o".into(),
            stderr: "e".into(),
        };
        let log = persist_execs(dir.path(), &[rec.clone(), rec], 3).unwrap();
        assert_eq!(log[1].stderr.as_deref(), Some("cmd-005.stderr"));
        assert_eq!(
            std::fs::read_to_string(dir.path().join("cmd-004.stdout")).unwrap(),
            "o"
        );
    }

    #[test]
    fn policy_parses() {
        assert_eq!(
            "ENABLED".parse::<NetworkPolicy>(),
            Ok(NetworkPolicy::Enabled)
        );
        assert_eq!("off".parse::<NetworkPolicy>(), Ok(NetworkPolicy::Disabled));
        assert!("maybe".parse::<NetworkPolicy>().is_err());
    }
}
