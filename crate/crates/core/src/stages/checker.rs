//! Stage 3: independent checking in one session of three phases.
//!
//! 1. [`CheckerRun::derive_signal`]: the agent turns the report, PoC files
//!    and generator evidence files into a [`SignalSpec`].
//! 2. [`CheckerRun::reexecute`]: the stage runs the entrypoint in a fresh
//!    workspace (pristine tree plus `poc/`), then the agent may run more.
//!    Every execution lands in a checker-owned evidence dir outside the
//!    workspace.
//! 3. [`CheckerRun::adjudicate`]: matchers are evaluated on those files
//!    first; the agent only judges realism and relatedness and can never
//!    turn an unmatched signal into a valid verdict.
//!
//! The generator trajectory is never shown to the checker.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::envelope;
use super::templates::render;
use super::{StageEnv, StageError};
use crate::model::{BugReport, EnvFingerprint, EvidenceBundle, PoCArtifact};
use crate::runtime::{
    truncate_middle, AgentSession, Role, SessionError, SharedBackend, Trajectory,
};
use crate::signal::{self, Comparator, Matcher, MatcherResult, SignalSpec};
use crate::toolkit::{persist_execs, ToolContext, Toolkit};
use crate::workspace::{copy_tree, list_files, tree_hash};

pub const TOOLS: [&str; 3] = ["bash", "edit", "search"];
pub const TRACES_DIR: &str = "traces";

/// Bytes of each PoC or evidence file quoted in the phase 1 prompt.
const FILE_QUOTE_CAP: usize = 8 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    SignalAbsent,
    MimicStandalone,
    InternalApiOrUnrealistic,
    UnrelatedError,
    EvidenceMismatch,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::SignalAbsent => "signal-absent",
            ReasonCode::MimicStandalone => "mimic-standalone",
            ReasonCode::InternalApiOrUnrealistic => "internal-api-or-unrealistic",
            ReasonCode::UnrelatedError => "unrelated-error",
            ReasonCode::EvidenceMismatch => "evidence-mismatch",
        }
    }

    fn from_criterion(s: &str) -> Self {
        match s.trim() {
            "mimic-standalone" => ReasonCode::MimicStandalone,
            "unrelated-error" => ReasonCode::UnrelatedError,
            _ => ReasonCode::InternalApiOrUnrealistic,
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Realism {
    Pass,
    Fail { criterion: ReasonCode },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum CheckDecision {
    Valid,
    Invalid { reason: ReasonCode, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub decision: CheckDecision,
    pub signal: Option<SignalSpec>,
    pub fresh_evidence: Option<EvidenceBundle>,
    pub matcher_results: Vec<MatcherResult>,
    pub realism: Option<Realism>,
    /// Fresh workspace equalled pristine tree plus PoC files before any
    /// execution.
    pub fresh_start_verified: bool,
}

impl CheckOutcome {
    pub fn is_valid(&self) -> bool {
        self.decision == CheckDecision::Valid
    }

    /// `code: detail` for invalid outcomes.
    pub fn reason(&self) -> Option<String> {
        match &self.decision {
            CheckDecision::Valid => None,
            CheckDecision::Invalid { reason, detail } => Some(format!("{reason}: {detail}")),
        }
    }
}

#[derive(Deserialize)]
struct RealismEnvelope {
    realism: String,
    #[serde(default)]
    criterion: String,
    #[serde(default = "yes")]
    related: bool,
    #[serde(default)]
    detail: String,
}

fn yes() -> bool {
    true
}

fn quote_files(root: &Path, skip: &[&str]) -> std::io::Result<String> {
    let mut out = String::new();
    for rel in list_files(root)? {
        let name = rel.to_string_lossy();
        if skip.contains(&name.as_ref()) {
            continue;
        }
        let bytes = fs::read(root.join(&rel))?;
        let text = String::from_utf8_lossy(&bytes);
        out.push_str(&format!(
            "### {name}\n```\n{}\n```\n",
            truncate_middle(text.trim_end(), FILE_QUOTE_CAP)
        ));
    }
    if out.is_empty() {
        out.push_str("(none)\n");
    }
    Ok(out)
}

/// Copies the pristine tree plus the PoC files into `fresh` and verifies
/// the result hashes like a reference copy built independently.
pub fn prepare_fresh_workspace(
    pristine: &Path,
    poc: &PoCArtifact,
    fresh: &Path,
) -> Result<bool, StageError> {
    if fresh.exists() {
        fs::remove_dir_all(fresh)?;
    }
    copy_tree(pristine, fresh)?;
    let dest = fresh.join(super::generator::POC_DIR);
    fs::create_dir_all(&dest)?;
    for f in &poc.files {
        let to = dest.join(f);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::copy(poc.root_dir.join(f), to)?;
    }

    let reference = tempfile_dir(fresh)?;
    copy_tree(pristine, &reference)?;
    copy_tree(&poc.root_dir, &reference.join(super::generator::POC_DIR))?;
    let same = tree_hash(&reference)? == tree_hash(fresh)?;
    fs::remove_dir_all(&reference)?;
    Ok(same)
}

fn tempfile_dir(near: &Path) -> std::io::Result<PathBuf> {
    let parent = near.parent().unwrap_or(Path::new("."));
    let dir = parent.join(format!(
        ".{}.ref-{}",
        near.file_name().unwrap_or_default().to_string_lossy(),
        std::process::id()
    ));
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    Ok(dir)
}

/// Trace-diff paths are workspace-relative in the agent's spec; after
/// re-execution the files are copied under `traces/` of the evidence dir
/// and the signal spec is rewritten to point there.
fn capture_traces(spec: &SignalSpec, workspace: &Path, evidence: &Path) -> SignalSpec {
    let mut out = spec.clone();
    for m in &mut out.matchers {
        if let Matcher::TraceDiff { a, b, .. } = m {
            for p in [a, b] {
                let rel = p.trim_start_matches("./").to_string();
                let dest = format!("{TRACES_DIR}/{rel}");
                let src = crate::toolkit::confine(&rel, &[workspace], crate::toolkit::Access::Read);
                if let Ok(src) = src {
                    if src.is_file() {
                        let to = evidence.join(&dest);
                        if let Some(parent) = to.parent() {
                            let _ = fs::create_dir_all(parent);
                        }
                        if let Err(e) = fs::copy(&src, &to) {
                            log::warn!("cannot capture trace {rel}: {e}");
                        }
                    }
                }
                *p = dest;
            }
        }
    }
    out
}

fn describe_results(results: &[MatcherResult], spec: &SignalSpec) -> String {
    let mut out = String::new();
    for r in results {
        let what = match &spec.matchers[r.index] {
            Matcher::StderrRegex { pattern } => format!("stderr matches /{pattern}/"),
            Matcher::StdoutRegex { pattern } => format!("stdout matches /{pattern}/"),
            Matcher::NonzeroExitWithPattern { pattern } => {
                format!("non-zero exit with output matching /{pattern}/")
            }
            Matcher::TraceDiff { a, b, comparator } => match comparator {
                Comparator::ByteDiff => format!("{a} differs from {b}"),
                Comparator::NumericThreshold { threshold } => {
                    format!("{a} and {b} differ by more than {threshold}")
                }
            },
        };
        out.push_str(&format!(
            "- matcher {} ({what}): {} ({})\n",
            r.index,
            if r.satisfied {
                "SATISFIED"
            } else {
                "not satisfied"
            },
            r.detail
        ));
    }
    out
}

/// One checker session over a fresh workspace.
pub struct CheckerRun {
    session: AgentSession,
    tools: Toolkit,
    workspace: PathBuf,
    evidence_dir: PathBuf,
    image: String,
    pub fresh_start_verified: bool,
}

impl CheckerRun {
    /// `fresh` becomes the checker workspace; `evidence_dir` must lie
    /// outside it.
    pub fn start(
        pristine: &Path,
        poc: &PoCArtifact,
        fresh: &Path,
        evidence_dir: &Path,
        env: &StageEnv,
        backend: &SharedBackend,
    ) -> Result<Self, StageError> {
        let fresh_start_verified = prepare_fresh_workspace(pristine, poc, fresh)?;
        if evidence_dir.exists() {
            fs::remove_dir_all(evidence_dir)?;
        }
        fs::create_dir_all(evidence_dir)?;
        let mut ctx = ToolContext::new(fresh);
        ctx.network = env.network;
        let session = env.open_session(
            Role::Checker,
            &env.templates.checker_system,
            &TOOLS,
            backend,
            None,
        )?;
        Ok(Self {
            session,
            tools: Toolkit::new(ctx),
            workspace: fresh.to_path_buf(),
            evidence_dir: evidence_dir.to_path_buf(),
            image: env.image.clone(),
            fresh_start_verified,
        })
    }

    /// Every model-facing prompt of this session so far.
    pub fn prompts(&self) -> &[String] {
        self.session.prompts()
    }

    /// Phase 1. `Err(detail)` when no valid spec could be parsed.
    pub fn derive_signal(
        &mut self,
        report: &BugReport,
        poc: &PoCArtifact,
        generator_evidence: &EvidenceBundle,
        env: &StageEnv,
    ) -> Result<Result<SignalSpec, String>, StageError> {
        let prompt = render(
            &env.templates.checker_signal,
            &[
                ("report", &report.to_markdown()),
                ("poc_files", &quote_files(&poc.root_dir, &[])?),
                ("entrypoint", &poc.entrypoint.join("\n")),
                (
                    "generator_evidence",
                    &quote_files(&generator_evidence.dir, &[])?,
                ),
            ],
        );
        let msg = match self.session.run(&prompt, &mut self.tools) {
            Ok(m) => m,
            Err(SessionError::TurnLimitExceeded { .. }) => return Ok(Err("turn limit".into())),
            Err(e) => return Err(e.into()),
        };
        let spec: SignalSpec = match envelope::parse(&msg) {
            Ok(s) => s,
            Err(e) => return Ok(Err(e)),
        };
        Ok(spec
            .validate()
            .map(|_| spec.clone())
            .map_err(|e| e.to_string()))
    }

    /// Phase 2. Runs the entrypoint, lets the agent react, and writes all
    /// executions into the checker evidence dir.
    pub fn reexecute(
        &mut self,
        poc: &PoCArtifact,
        signal: &SignalSpec,
        env: &StageEnv,
    ) -> Result<(EvidenceBundle, SignalSpec), StageError> {
        // Only phase 2 executions count as re-execution evidence.
        self.tools.drain_exec_log();
        let mut results = String::new();
        for cmd in &poc.entrypoint {
            let line = match self.tools.run_recorded(cmd, env.limits.tool_timeout) {
                Ok(out) => format!(
                    "$ {cmd}\nexit {}\n[stdout]\n{}\n[stderr]\n{}\n",
                    out.exit_code,
                    truncate_middle(&out.stdout, FILE_QUOTE_CAP),
                    truncate_middle(&out.stderr, FILE_QUOTE_CAP)
                ),
                Err(e) => format!("$ {cmd}\nfailed: {e}\n"),
            };
            results.push_str(&line);
        }
        let prompt = render(&env.templates.checker_reexecute, &[("results", &results)]);
        match self.session.continue_session(&prompt, &mut self.tools) {
            Ok(_) | Err(SessionError::TurnLimitExceeded { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        let execs = self.tools.drain_exec_log();
        let log = persist_execs(&self.evidence_dir, &execs, 0)?;
        let signal = capture_traces(signal, &self.workspace, &self.evidence_dir);
        let fingerprint = EnvFingerprint {
            image: self.image.clone(),
            workspace_hash: tree_hash(&self.workspace)?,
            timestamp_ms: crate::now_ms(),
        };
        let bundle = EvidenceBundle::scan(&self.evidence_dir, log, fingerprint)?;
        bundle.write_command_log()?;
        Ok((bundle, signal))
    }

    /// Phase 3. The mechanical gate decides first.
    pub fn adjudicate(
        &mut self,
        signal: &SignalSpec,
        fresh: &EvidenceBundle,
        env: &StageEnv,
    ) -> Result<(CheckDecision, Vec<MatcherResult>, Option<Realism>), StageError> {
        let results = signal::evaluate(signal, fresh, &fresh.dir);
        let fired = signal::any_satisfied(&results);
        let prompt = render(
            &env.templates.checker_adjudicate,
            &[("matcher_results", &describe_results(&results, signal))],
        );
        let msg = match self.session.continue_session(&prompt, &mut self.tools) {
            Ok(m) => Some(m),
            Err(SessionError::TurnLimitExceeded { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        if !fired {
            let detail = if fresh.is_executed() {
                "no signal matcher fired on the re-execution evidence".to_string()
            } else {
                "nothing was executed".to_string()
            };
            return Ok((
                CheckDecision::Invalid {
                    reason: ReasonCode::SignalAbsent,
                    detail,
                },
                results,
                None,
            ));
        }
        let parsed = msg
            .ok_or_else(|| "turn limit".to_string())
            .and_then(|m| envelope::parse::<RealismEnvelope>(&m));
        let env3 = match parsed {
            Ok(e) => e,
            Err(e) => {
                return Ok((
                    CheckDecision::Invalid {
                        reason: ReasonCode::EvidenceMismatch,
                        detail: format!("unparseable adjudication: {e}"),
                    },
                    results,
                    None,
                ))
            }
        };
        let detail = if env3.detail.trim().is_empty() {
            "no detail given".to_string()
        } else {
            env3.detail.clone()
        };
        let (decision, realism) = match env3.realism.trim() {
            "pass" if env3.related => (CheckDecision::Valid, Realism::Pass),
            "pass" => (
                CheckDecision::Invalid {
                    reason: ReasonCode::UnrelatedError,
                    detail,
                },
                Realism::Pass,
            ),
            _ => {
                let criterion = ReasonCode::from_criterion(&env3.criterion);
                (
                    CheckDecision::Invalid {
                        reason: criterion,
                        detail,
                    },
                    Realism::Fail { criterion },
                )
            }
        };
        Ok((decision, results, Some(realism)))
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.session.into_trajectory()
    }
}

/// Runs all three phases. Returns the outcome, the trajectory and every
/// prompt the checker model received.
#[allow(clippy::too_many_arguments)]
pub fn check(
    report: &BugReport,
    poc: &PoCArtifact,
    generator_evidence: &EvidenceBundle,
    pristine: &Path,
    fresh: &Path,
    evidence_dir: &Path,
    env: &StageEnv,
    backend: &SharedBackend,
) -> Result<(CheckOutcome, Trajectory, Vec<String>), StageError> {
    let mut run = CheckerRun::start(pristine, poc, fresh, evidence_dir, env, backend)?;
    let fresh_start_verified = run.fresh_start_verified;
    let invalid = |reason, detail: String| CheckDecision::Invalid { reason, detail };

    let spec = match run.derive_signal(report, poc, generator_evidence, env)? {
        Ok(s) => s,
        Err(e) => {
            log::info!("checker derived no signal for {}: {e}", report.id);
            let prompts = run.prompts().to_vec();
            let outcome = CheckOutcome {
                decision: invalid(ReasonCode::EvidenceMismatch, "no derivable signal".into()),
                signal: None,
                fresh_evidence: None,
                matcher_results: vec![],
                realism: None,
                fresh_start_verified,
            };
            return Ok((outcome, run.into_trajectory(), prompts));
        }
    };
    let (evidence, spec) = run.reexecute(poc, &spec, env)?;
    let (decision, matcher_results, realism) = run.adjudicate(&spec, &evidence, env)?;
    let prompts = run.prompts().to_vec();
    let outcome = CheckOutcome {
        decision,
        signal: Some(spec),
        fresh_evidence: Some(evidence),
        matcher_results,
        realism,
        fresh_start_verified,
    };
    Ok((outcome, run.into_trajectory(), prompts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_workspace_is_pristine_plus_poc() {
        let d = tempfile::tempdir().unwrap();
        let pristine = d.path().join("pristine");
        fs::create_dir_all(pristine.join("src")).unwrap();
        fs::write(pristine.join("src/a.c"), "int x;").unwrap();
        let gen = d.path().join("gen");
        copy_tree(&pristine, &gen).unwrap();
        fs::write(gen.join("a.out"), "built").unwrap();
        fs::create_dir_all(gen.join("poc")).unwrap();
        fs::write(gen.join("poc/run.sh"), "./a.out").unwrap();
        let poc = PoCArtifact {
            root_dir: gen.join("poc"),
            files: vec!["run.sh".into()],
            entrypoint: vec!["sh poc/run.sh".into()],
            expected_signal: None,
            notes: String::new(),
        };
        let fresh = d.path().join("fresh");
        assert!(prepare_fresh_workspace(&pristine, &poc, &fresh).unwrap());
        assert!(fresh.join("poc/run.sh").is_file());
        assert!(!fresh.join("a.out").exists());
        assert_eq!(list_files(&fresh).unwrap().len(), 2);
    }

    #[test]
    fn trace_paths_rewritten_and_copied() {
        let d = tempfile::tempdir().unwrap();
        let ws = d.path().join("ws");
        let ev = d.path().join("ev");
        fs::create_dir_all(ws.join("out")).unwrap();
        fs::create_dir_all(&ev).unwrap();
        fs::write(ws.join("out/expected.txt"), "1").unwrap();
        fs::write(ws.join("out/actual.txt"), "2").unwrap();
        let spec = SignalSpec {
            description: "d".into(),
            matchers: vec![Matcher::TraceDiff {
                a: "out/expected.txt".into(),
                b: "./out/actual.txt".into(),
                comparator: Comparator::ByteDiff,
            }],
            provenance: vec![],
        };
        let out = capture_traces(&spec, &ws, &ev);
        let Matcher::TraceDiff { a, b, .. } = &out.matchers[0] else {
            unreachable!()
        };
        assert_eq!(
            (a.as_str(), b.as_str()),
            ("traces/out/expected.txt", "traces/out/actual.txt")
        );
        assert_eq!(fs::read_to_string(ev.join(a)).unwrap(), "1");
        assert_eq!(fs::read_to_string(ev.join(b)).unwrap(), "2");
    }
}
