use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{ModelRequest, SharedBackend, ToolCallRequest, ToolSpec};
use super::trajectory::{Step, Trajectory};
use super::{truncate_middle, SessionError};

pub const DEFAULT_MAX_TURNS: usize = 60;
pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_OUTPUT_LIMIT: usize = 64 * 1024;

/// Every tool a session may allowlist.
pub const REGISTERED_TOOLS: &[&str] = &[
    "bash",
    "edit",
    "search",
    "web_fetch",
    "fetch_step",
    "kb_search",
    "create_knowledge",
    "update_knowledge",
];

/// Tools that would block on a human. Never allowlisted.
pub const INTERACTIVE_TOOLS: &[&str] = &["ask_user", "AskUserQuestion"];

/// Exit code recorded for a denied tool call.
const DENIED_EXIT: i32 = 126;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Analyzer,
    Generator,
    Checker,
    Extractor,
    Filter,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Analyzer,
        Role::Generator,
        Role::Checker,
        Role::Extractor,
        Role::Filter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Analyzer => "analyzer",
            Role::Generator => "generator",
            Role::Checker => "checker",
            Role::Extractor => "extractor",
            Role::Filter => "filter",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct AgentSessionConfig {
    pub role: Role,
    pub system_prompt: String,
    pub tool_allowlist: Vec<String>,
    /// Per phase.
    pub max_turns: usize,
    pub per_tool_timeout: Duration,
    /// Bytes of a tool result shown to the model.
    pub output_truncation_limit: usize,
}

impl AgentSessionConfig {
    pub fn new(role: Role, system_prompt: impl Into<String>, tools: &[&str]) -> Self {
        Self {
            role,
            system_prompt: system_prompt.into(),
            tool_allowlist: tools.iter().map(|t| t.to_string()).collect(),
            max_turns: DEFAULT_MAX_TURNS,
            per_tool_timeout: DEFAULT_TOOL_TIMEOUT,
            output_truncation_limit: DEFAULT_OUTPUT_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.max_turns < 1 {
            return Err(SessionError::ConfigInvalid(
                "max_turns must be at least 1".into(),
            ));
        }
        if self.per_tool_timeout.is_zero() {
            return Err(SessionError::ConfigInvalid(
                "per_tool_timeout must be positive".into(),
            ));
        }
        if self.output_truncation_limit == 0 {
            return Err(SessionError::ConfigInvalid(
                "output_truncation_limit must be positive".into(),
            ));
        }
        for tool in &self.tool_allowlist {
            if INTERACTIVE_TOOLS.contains(&tool.as_str()) {
                return Err(SessionError::ConfigInvalid(format!(
                    "interactive tool {tool} cannot be allowlisted"
                )));
            }
            if !REGISTERED_TOOLS.contains(&tool.as_str()) {
                return Err(SessionError::ConfigInvalid(format!("unknown tool {tool}")));
            }
        }
        Ok(())
    }

    pub fn allows(&self, tool: &str) -> bool {
        self.tool_allowlist.iter().any(|t| t == tool)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolReply {
    pub output: String,
    pub exit_code: i32,
}

impl ToolReply {
    pub fn ok(output: impl Into<String>) -> Self {
        Self {
            output: output.into(),
            exit_code: 0,
        }
    }

    pub fn error(output: impl Into<String>) -> Self {
        Self {
            output: output.into(),
            exit_code: 1,
        }
    }
}

/// Executes tool calls on behalf of a session. Failures are replies, not
/// errors: the model sees them and the session continues.
pub trait ToolHost {
    fn specs(&self) -> Vec<ToolSpec>;
    fn invoke(&mut self, call: &ToolCallRequest, timeout: Duration) -> ToolReply;
}

pub struct AgentSession {
    config: AgentSessionConfig,
    backend: SharedBackend,
    trajectory: Trajectory,
    phase_final: Option<String>,
    started: bool,
    prompts: Vec<String>,
}

impl AgentSession {
    pub fn new(
        config: AgentSessionConfig,
        backend: SharedBackend,
        session_id: impl Into<String>,
        persist: Option<&Path>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let mut trajectory = Trajectory::new(session_id, config.role.as_str());
        if let Some(path) = persist {
            trajectory.persist_to(path).map_err(|e| {
                SessionError::ConfigInvalid(format!(
                    "cannot persist trajectory to {}: {e}",
                    path.display()
                ))
            })?;
        }
        Ok(Self {
            config,
            backend,
            trajectory,
            phase_final: None,
            started: false,
            prompts: Vec::new(),
        })
    }

    pub fn config(&self) -> &AgentSessionConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    /// System prompt plus every model-facing input sent so far.
    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    /// Runs the first phase to its final message.
    pub fn run(&mut self, prompt: &str, host: &mut dyn ToolHost) -> Result<String, SessionError> {
        if self.started {
            return Err(SessionError::AlreadyStarted);
        }
        self.started = true;
        self.prompts.push(self.config.system_prompt.clone());
        self.phase(prompt, host)
    }

    /// Appends a phase prompt and resumes the loop with the full context.
    pub fn continue_session(
        &mut self,
        prompt: &str,
        host: &mut dyn ToolHost,
    ) -> Result<String, SessionError> {
        if !self.started || self.phase_final.is_none() {
            return Err(SessionError::SessionClosed);
        }
        self.phase(prompt, host)
    }

    fn phase(&mut self, prompt: &str, host: &mut dyn ToolHost) -> Result<String, SessionError> {
        self.phase_final = None;
        self.trajectory.push(Step::PhasePrompt {
            text: prompt.to_string(),
        });
        let tools: Vec<ToolSpec> = host
            .specs()
            .into_iter()
            .filter(|s| self.config.allows(s.name))
            .collect();
        let mut input = prompt.to_string();

        for _ in 0..self.config.max_turns {
            self.prompts.push(input.clone());
            let turn = {
                let request = ModelRequest {
                    role: self.config.role.as_str(),
                    system_prompt: &self.config.system_prompt,
                    trajectory: &self.trajectory,
                    new_input: &input,
                    tools: &tools,
                    output_limit: self.config.output_truncation_limit,
                };
                let mut backend = self.backend.lock().unwrap_or_else(|p| p.into_inner());
                backend.complete(&request)?
            };

            if let Some(text) = turn.thinking.filter(|t| !t.is_empty()) {
                self.trajectory.push(Step::Thinking { text });
            }
            input.clear();
            for call in &turn.tool_calls {
                self.trajectory.push(Step::ToolCall {
                    tool: call.tool.clone(),
                    args: call.args.clone(),
                });
                let reply = if self.config.allows(&call.tool) {
                    host.invoke(call, self.config.per_tool_timeout)
                } else {
                    ToolReply {
                        output: format!(
                            "error: ToolDenied({}): tool is not available in this session",
                            call.tool
                        ),
                        exit_code: DENIED_EXIT,
                    }
                };
                let limit = self.config.output_truncation_limit;
                let truncated = reply.output.len() > limit;
                if !input.is_empty() {
                    input.push('\n');
                }
                input.push_str(&format!(
                    "[{} exit={}]\n{}",
                    call.tool,
                    reply.exit_code,
                    truncate_middle(&reply.output, limit)
                ));
                self.trajectory.push(Step::ToolResult {
                    output: reply.output,
                    exit_code: reply.exit_code,
                    truncated,
                });
            }
            if let Some(text) = turn.final_message {
                self.trajectory
                    .push(Step::FinalMessage { text: text.clone() });
                self.phase_final = Some(text.clone());
                return Ok(text);
            }
        }
        self.trajectory.incomplete = true;
        Err(SessionError::TurnLimitExceeded {
            limit: self.config.max_turns,
        })
    }
}
