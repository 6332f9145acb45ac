use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::signal::SignalSpec;

/// File name of the runtime-authored command log inside an evidence dir.
pub const COMMAND_LOG_FILE: &str = "commands.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionStage {
    Analysis,
    Generation,
    Checking,
}

impl RejectionStage {
    pub const ALL: [RejectionStage; 3] = [Self::Analysis, Self::Generation, Self::Checking];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Analysis => "analysis",
            Self::Generation => "generation",
            Self::Checking => "checking",
        }
    }
}

impl fmt::Display for RejectionStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFile {
    pub label: String,
    /// Relative to the evidence directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub exit_code: i32,
    pub duration_ms: u64,
    #[serde(default)]
    pub timed_out: bool,
    /// Captured streams, relative to the evidence directory.
    #[serde(default)]
    pub stdout: Option<String>,
    #[serde(default)]
    pub stderr: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvFingerprint {
    pub image: String,
    pub workspace_hash: String,
    pub timestamp_ms: u64,
}

/// Execution traces plus the command log that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub dir: PathBuf,
    pub traces: Vec<TraceFile>,
    pub command_log: Vec<CommandRecord>,
    pub env_fingerprint: EnvFingerprint,
}

impl EvidenceBundle {
    /// Builds a bundle from a directory: every file except the command log
    /// becomes a trace, labelled by its relative path.
    pub fn scan(
        dir: &Path,
        command_log: Vec<CommandRecord>,
        env_fingerprint: EnvFingerprint,
    ) -> io::Result<Self> {
        let traces = crate::workspace::list_files(dir)?
            .into_iter()
            .map(|p| p.to_string_lossy().into_owned())
            .filter(|p| p != COMMAND_LOG_FILE)
            .map(|p| TraceFile {
                label: p.clone(),
                path: p,
            })
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            traces,
            command_log,
            env_fingerprint,
        })
    }

    pub fn write_command_log(&self) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let json = serde_json::to_string_pretty(&self.command_log)?;
        fs::write(self.dir.join(COMMAND_LOG_FILE), json)
    }

    /// Executed bundles carry at least one command record.
    pub fn is_executed(&self) -> bool {
        !self.command_log.is_empty()
    }

    /// Every listed trace path exists under `dir`.
    pub fn traces_exist(&self) -> bool {
        self.traces.iter().all(|t| self.dir.join(&t.path).is_file())
    }

    pub fn with_dir(mut self, dir: PathBuf) -> Self {
        self.dir = dir;
        self
    }
}

/// An executable artifact that triggers the reported defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoCArtifact {
    pub root_dir: PathBuf,
    /// Relative to `root_dir`.
    pub files: Vec<String>,
    /// Shell commands, run in order from the workspace root.
    pub entrypoint: Vec<String>,
    /// The checker-derived signal, attached once checking completes.
    #[serde(default)]
    pub expected_signal: Option<SignalSpec>,
    #[serde(default)]
    pub notes: String,
}

impl PoCArtifact {
    pub fn is_well_formed(&self) -> bool {
        !self.entrypoint.is_empty()
            && self.root_dir.is_dir()
            && self.files.iter().all(|f| self.root_dir.join(f).exists())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Validated,
    Rejected,
}

/// Validator output: a validated PoC or a faithful rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Verdict {
    Validated {
        poc: PoCArtifact,
        generator_evidence: EvidenceBundle,
        checker_evidence: Option<EvidenceBundle>,
    },
    Rejected {
        stage: RejectionStage,
        reason: String,
    },
}

impl Verdict {
    pub fn rejected(stage: RejectionStage, reason: impl Into<String>) -> Self {
        Verdict::Rejected {
            stage,
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> VerdictKind {
        match self {
            Verdict::Validated { .. } => VerdictKind::Validated,
            Verdict::Rejected { .. } => VerdictKind::Rejected,
        }
    }

    pub fn rejection_stage(&self) -> Option<RejectionStage> {
        match self {
            Verdict::Rejected { stage, .. } => Some(*stage),
            Verdict::Validated { .. } => None,
        }
    }

    pub fn is_validated(&self) -> bool {
        matches!(self, Verdict::Validated { .. })
    }
}
