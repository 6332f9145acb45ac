//! Stage 2: PoC synthesis in two phases of one session.
//!
//! Phase 1 iterates until the agent extracts a PoC into `poc/` or gives
//! up. Phase 2 re-runs it; every bash execution of that phase is written by
//! the stage into `evidence/` (streams plus `commands.json`). A phase 2
//! without any execution is downgraded to a give-up, whatever the agent
//! claims.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analyzer::{Mechanism, MECHANISM_CAP};
use super::envelope;
use super::templates::render;
use super::{StageEnv, StageError};
use crate::kb::{EntryRef, KbSnapshot, KnowledgeBase};
use crate::model::{BugReport, EnvFingerprint, EvidenceBundle, PoCArtifact};
use crate::runtime::{Role, SessionError, SharedBackend, Trajectory};
use crate::toolkit::{persist_execs, ToolContext, Toolkit};
use crate::workspace::{list_files, tree_hash};

pub const POC_DIR: &str = "poc";
pub const EVIDENCE_DIR: &str = "evidence";
pub const TOOLS: [&str; 4] = ["bash", "edit", "search", "web_fetch"];

pub const NO_EVIDENCE: &str = "no execution evidence";
pub const TURN_LIMIT: &str = "turn limit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbRating {
    pub entry: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum GenerationResult {
    Produced {
        poc: PoCArtifact,
        evidence: EvidenceBundle,
    },
    GaveUp {
        explanation: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub result: GenerationResult,
    pub kb_ratings: Vec<KbRating>,
    /// Step indices of the phase prompts.
    pub phase_boundaries: Vec<usize>,
}

impl GenerationOutcome {
    pub fn produced(&self) -> bool {
        matches!(self.result, GenerationResult::Produced { .. })
    }
}

#[derive(Deserialize)]
struct Envelope {
    result: String,
    #[serde(default)]
    explanation: String,
    #[serde(default)]
    entrypoint: Vec<String>,
    #[serde(default)]
    notes: String,
    #[serde(default)]
    ratings: Vec<KbRating>,
}

fn parse_envelope(message: &str) -> Option<Envelope> {
    match envelope::parse::<Envelope>(message) {
        Ok(e) => Some(e),
        Err(err) => {
            log::info!("unparseable generator envelope: {err}");
            None
        }
    }
}

fn gave_up(
    explanation: impl Into<String>,
    ratings: Vec<KbRating>,
    t: &Trajectory,
) -> GenerationOutcome {
    let explanation = explanation.into();
    GenerationOutcome {
        result: GenerationResult::GaveUp {
            explanation: if explanation.trim().is_empty() {
                "gave up without explanation".into()
            } else {
                explanation
            },
        },
        kb_ratings: ratings,
        phase_boundaries: t.phase_boundaries(),
    }
}

/// Runs the generator in `workspace`, a private copy of the pristine tree.
/// `kb_root` is readable by the agent's tools.
pub fn generate(
    report: &BugReport,
    mechanism: &Mechanism,
    snapshot: &KbSnapshot,
    workspace: &Path,
    kb_root: Option<&Path>,
    env: &StageEnv,
    backend: &SharedBackend,
) -> Result<(GenerationOutcome, Trajectory), StageError> {
    let poc_dir = workspace.join(POC_DIR);
    let evidence_dir = workspace.join(EVIDENCE_DIR);
    fs::create_dir_all(&poc_dir)?;
    fs::create_dir_all(&evidence_dir)?;

    let mut ctx = ToolContext::new(workspace);
    ctx.kb_root = kb_root.map(PathBuf::from);
    ctx.network = env.network;
    let mut tools = Toolkit::new(ctx);
    let t = &env.templates;
    let mut session =
        env.open_session(Role::Generator, &t.generator_system, &TOOLS, backend, None)?;

    let phase1 = render(
        &t.generator_phase1,
        &[
            ("project", &report.project),
            ("setup", env.setup()),
            ("mechanism", &mechanism.summary(MECHANISM_CAP)),
            ("report", &report.to_markdown()),
            ("snapshot", &snapshot.render()),
            ("poc_dir", POC_DIR),
        ],
    );
    let msg = match session.run(&phase1, &mut tools) {
        Ok(m) => m,
        Err(SessionError::TurnLimitExceeded { .. }) => {
            let t = session.into_trajectory();
            return Ok((gave_up(TURN_LIMIT, vec![], &t), t));
        }
        Err(e) => return Err(e.into()),
    };
    let Some(env1) = parse_envelope(&msg) else {
        let t = session.into_trajectory();
        return Ok((gave_up("unparseable phase 1 report", vec![], &t), t));
    };
    if env1.result.trim() != "poc_ready" {
        let t = session.into_trajectory();
        return Ok((gave_up(env1.explanation, env1.ratings, &t), t));
    }

    // Phase 1 executions are exploration, not evidence.
    tools.drain_exec_log();
    let phase2 = render(
        &t.generator_phase2,
        &[("poc_dir", POC_DIR), ("evidence_dir", EVIDENCE_DIR)],
    );
    let msg = match session.continue_session(&phase2, &mut tools) {
        Ok(m) => m,
        Err(SessionError::TurnLimitExceeded { .. }) => {
            let t = session.into_trajectory();
            return Ok((gave_up(TURN_LIMIT, env1.ratings, &t), t));
        }
        Err(e) => return Err(e.into()),
    };
    let execs = tools.drain_exec_log();
    let trajectory = session.into_trajectory();
    let env2 = parse_envelope(&msg);
    let ratings = env2
        .as_ref()
        .map(|e| e.ratings.clone())
        .unwrap_or(env1.ratings);

    if execs.is_empty() {
        return Ok((gave_up(NO_EVIDENCE, ratings, &trajectory), trajectory));
    }
    // The stage owns the command log; whatever the agent wrote under these
    // names is overwritten.
    let log = persist_execs(&evidence_dir, &execs, 0)?;

    let Some(env2) = env2 else {
        return Ok((
            gave_up("unparseable phase 2 report", ratings, &trajectory),
            trajectory,
        ));
    };
    if env2.result.trim() != "produced" {
        return Ok((gave_up(env2.explanation, ratings, &trajectory), trajectory));
    }
    let entrypoint: Vec<String> = env2
        .entrypoint
        .into_iter()
        .filter(|c| !c.trim().is_empty())
        .collect();
    let files: Vec<String> = list_files(&poc_dir)?
        .into_iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    if entrypoint.is_empty() || files.is_empty() {
        return Ok((
            gave_up(
                "no PoC entrypoint or empty poc directory",
                ratings,
                &trajectory,
            ),
            trajectory,
        ));
    }

    let fingerprint = EnvFingerprint {
        image: env.image.clone(),
        workspace_hash: tree_hash(workspace)?,
        timestamp_ms: crate::now_ms(),
    };
    let evidence = EvidenceBundle::scan(&evidence_dir, log, fingerprint)?;
    evidence.write_command_log()?;
    let poc = PoCArtifact {
        root_dir: poc_dir,
        files,
        entrypoint,
        expected_signal: None,
        notes: env2.notes,
    };
    let outcome = GenerationOutcome {
        result: GenerationResult::Produced { poc, evidence },
        kb_ratings: ratings,
        phase_boundaries: trajectory.phase_boundaries(),
    };
    Ok((outcome, trajectory))
}

/// Appends each rating to the KB. Malformed, out-of-range and unknown-entry
/// ratings are skipped with a log line. Returns the number applied.
pub fn apply_ratings(ratings: &[KbRating], kb: &KnowledgeBase, session_id: &str) -> usize {
    let mut applied = 0;
    for r in ratings {
        let entry: EntryRef = match r.entry.parse() {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping rating for {:?}: {e}", r.entry);
                continue;
            }
        };
        match kb.rate_entry(&entry, r.score, session_id) {
            Ok(_) => applied += 1,
            Err(e) => log::warn!("skipping rating {} for {}: {e}", r.score, r.entry),
        }
    }
    applied
}
