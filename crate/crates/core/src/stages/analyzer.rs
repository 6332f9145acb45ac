//! Stage 1: static fact-checking of a report. The analyzer works in
//! read-only mode, has no KB access and ends with a decision envelope.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::envelope;
use super::templates::render;
use super::{StageEnv, StageError};
use crate::model::BugReport;
use crate::runtime::{truncate_middle, Role, SessionError, SharedBackend, Trajectory};
use crate::toolkit::{ToolContext, Toolkit};
use crate::workspace::tree_hash;

/// Upper bound on the rendered mechanism summary handed to the generator.
pub const MECHANISM_CAP: usize = 6000;

pub const TOOLS: [&str; 4] = ["bash", "edit", "search", "web_fetch"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanism {
    pub root_cause: String,
    pub consequence: String,
    pub oracle: String,
}

impl Mechanism {
    pub fn is_complete(&self) -> bool {
        [&self.root_cause, &self.consequence, &self.oracle]
            .iter()
            .all(|s| !s.trim().is_empty())
    }

    /// Compact text for the generator prompt, at most `cap` bytes plus an
    /// elision marker.
    pub fn summary(&self, cap: usize) -> String {
        let text = format!(
            "Root cause: {}\nConsequence: {}\nOracle: {}",
            self.root_cause.trim(),
            self.consequence.trim(),
            self.oracle.trim()
        );
        truncate_middle(&text, cap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCheck {
    pub claim: String,
    pub verdict: String,
    #[serde(default)]
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Proceed,
    Reject { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub decision: Decision,
    pub mechanism: Option<Mechanism>,
    pub facts_checked: Vec<FactCheck>,
    /// The workspace hash changed during analysis.
    pub workspace_mutated: bool,
}

impl AnalysisOutcome {
    fn reject(reason: impl Into<String>) -> Self {
        Self {
            decision: Decision::Reject {
                reason: reason.into(),
            },
            mechanism: None,
            facts_checked: vec![],
            workspace_mutated: false,
        }
    }

    pub fn proceeds(&self) -> bool {
        self.decision == Decision::Proceed
    }
}

#[derive(Deserialize)]
struct Envelope {
    decision: String,
    #[serde(default)]
    reason: String,
    #[serde(default)]
    mechanism: Option<Mechanism>,
    #[serde(default)]
    facts_checked: Vec<FactCheck>,
}

fn interpret(message: &str) -> Result<AnalysisOutcome, String> {
    let env: Envelope = envelope::parse(message)?;
    let decision = match env.decision.trim() {
        "proceed" => Decision::Proceed,
        "reject" => {
            if env.reason.trim().is_empty() {
                return Err("reject without a reason".into());
            }
            Decision::Reject { reason: env.reason }
        }
        other => return Err(format!("unknown decision {other:?}")),
    };
    if decision == Decision::Proceed && !env.mechanism.as_ref().is_some_and(Mechanism::is_complete)
    {
        return Err("proceed needs root_cause, consequence and oracle".into());
    }
    Ok(AnalysisOutcome {
        decision,
        mechanism: env.mechanism,
        facts_checked: env.facts_checked,
        workspace_mutated: false,
    })
}

/// Runs the analyzer on `workspace`. Unparseable final messages get one
/// retry, then become a `ParseFailure` rejection; hitting the turn limit
/// rejects as inconclusive.
pub fn analyze(
    report: &BugReport,
    workspace: &Path,
    env: &StageEnv,
    backend: &SharedBackend,
) -> Result<(AnalysisOutcome, Trajectory), StageError> {
    let before = tree_hash(workspace)?;
    let mut ctx = ToolContext::new(workspace);
    ctx.read_only = true;
    ctx.network = env.network;
    let mut tools = Toolkit::new(ctx);
    let t = &env.templates;
    let mut session =
        env.open_session(Role::Analyzer, &t.analyzer_system, &TOOLS, backend, None)?;
    let prompt = render(
        &t.analyzer_task,
        &[
            ("project", &report.project),
            ("setup", env.setup()),
            ("report", &report.to_markdown()),
        ],
    );

    let mut outcome = match session.run(&prompt, &mut tools) {
        Ok(msg) => match interpret(&msg) {
            Ok(o) => o,
            Err(err) => {
                let retry = render(&t.analyzer_retry, &[("error", &err)]);
                match session.continue_session(&retry, &mut tools) {
                    Ok(msg) => interpret(&msg)
                        .unwrap_or_else(|e| AnalysisOutcome::reject(format!("ParseFailure: {e}"))),
                    Err(SessionError::TurnLimitExceeded { .. }) => {
                        AnalysisOutcome::reject("analysis inconclusive")
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        },
        Err(SessionError::TurnLimitExceeded { .. }) => {
            AnalysisOutcome::reject("analysis inconclusive")
        }
        Err(e) => return Err(e.into()),
    };
    outcome.workspace_mutated = tree_hash(workspace)? != before;
    if outcome.workspace_mutated {
        log::warn!("analyzer for {} modified its workspace copy", report.id);
    }
    Ok((outcome, session.into_trajectory()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proceed_needs_full_mechanism() {
        let ok = "```json\n{\"decision\":\"proceed\",\"mechanism\":{\"root_cause\":\"a\",\"consequence\":\"b\",\"oracle\":\"c\"}}\n```";
        assert!(interpret(ok).unwrap().proceeds());
        let missing = "```json\n{\"decision\":\"proceed\",\"mechanism\":{\"root_cause\":\"a\",\"consequence\":\"b\",\"oracle\":\"\"}}\n```";
        assert!(interpret(missing).is_err());
        let rej = "```json\n{\"decision\":\"reject\",\"reason\":\"semantics changed\"}\n```";
        assert_eq!(
            interpret(rej).unwrap().decision,
            Decision::Reject {
                reason: "semantics changed".into()
            }
        );
        assert!(interpret("```json\n{\"decision\":\"reject\"}\n```").is_err());
    }

    #[test]
    fn summary_is_capped() {
        let m = Mechanism {
            root_cause: "x".repeat(10_000),
            consequence: "c".into(),
            oracle: "o".into(),
        };
        assert!(m.summary(500).len() < 600);
    }
}
