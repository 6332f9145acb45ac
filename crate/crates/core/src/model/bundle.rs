//! Output bundle layout:
//!
//! ```text
//! <out_root>/<report id>/
//!   verdict.json
//!   report.md
//!   trajectories/<session id>.jsonl
//!   poc/                  (validated only)
//!   evidence-generator/   (validated only)
//!   evidence-checker/     (validated, and checking rejections)
//!   run.json              (stage states, written by the pipeline)
//! ```
//!
//! Paths inside `verdict.json` are relative to the bundle directory so a
//! bundle can be moved and re-checked on its own.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::BugReport;
use super::verdict::{EvidenceBundle, RejectionStage, Verdict, VerdictKind};
use crate::runtime::Trajectory;
use crate::signal::{self, MatcherResult};
use crate::workspace::copy_tree;

pub const VERDICT_FILE: &str = "verdict.json";
pub const REPORT_FILE: &str = "report.md";
pub const POC_DIR: &str = "poc";
pub const GENERATOR_EVIDENCE_DIR: &str = "evidence-generator";
pub const CHECKER_EVIDENCE_DIR: &str = "evidence-checker";
pub const TRAJECTORIES_DIR: &str = "trajectories";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("bundle serialization failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent verdict: {0}")]
    InconsistentVerdict(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePaths {
    pub report: String,
    pub trajectories: String,
    pub poc: Option<String>,
    pub evidence_generator: Option<String>,
    pub evidence_checker: Option<String>,
}

/// The on-disk `verdict.json` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub report_id: String,
    pub kind: VerdictKind,
    pub stage: Option<RejectionStage>,
    pub reason: Option<String>,
    pub paths: BundlePaths,
    pub timings: Vec<StageTiming>,
    pub verdict: Verdict,
}

/// Absolute locations of a written bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub report_id: String,
    pub verdict_kind: VerdictKind,
    pub root: PathBuf,
    pub verdict_file: PathBuf,
    pub report: PathBuf,
    pub trajectories: PathBuf,
    pub poc: Option<PathBuf>,
    pub evidence_generator: Option<PathBuf>,
    pub evidence_checker: Option<PathBuf>,
    pub timings: Vec<StageTiming>,
}

impl BundleManifest {
    pub fn all_paths_exist(&self) -> bool {
        [
            &self.root,
            &self.verdict_file,
            &self.report,
            &self.trajectories,
        ]
        .iter()
        .all(|p| p.exists())
            && [&self.poc, &self.evidence_generator, &self.evidence_checker]
                .iter()
                .all(|p| p.as_ref().is_none_or(|p| p.exists()))
    }
}

fn check_consistency(verdict: &Verdict) -> Result<(), BundleError> {
    match verdict {
        Verdict::Rejected { reason, .. } => {
            if reason.trim().is_empty() {
                return Err(BundleError::InconsistentVerdict(
                    "rejection without a reason".into(),
                ));
            }
        }
        Verdict::Validated {
            poc,
            checker_evidence,
            ..
        } => {
            let Some(checker) = checker_evidence else {
                return Err(BundleError::InconsistentVerdict(
                    "validated verdict without checker evidence".into(),
                ));
            };
            if !checker.is_executed() {
                return Err(BundleError::InconsistentVerdict(
                    "checker evidence has an empty command log".into(),
                ));
            }
            let Some(spec) = &poc.expected_signal else {
                return Err(BundleError::InconsistentVerdict(
                    "validated PoC carries no signal spec".into(),
                ));
            };
            let results = signal::evaluate(spec, checker, &checker.dir);
            if !signal::any_satisfied(&results) {
                return Err(BundleError::InconsistentVerdict(
                    "no signal matcher fires on checker evidence".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Writes the output bundle for one report. Rewriting with identical inputs
/// produces a byte-identical `verdict.json`.
pub fn write_bundle(
    verdict: &Verdict,
    report: &BugReport,
    trajectories: &[Trajectory],
    timings: &[StageTiming],
    out_root: &Path,
) -> Result<BundleManifest, BundleError> {
    check_consistency(verdict)?;
    fs::create_dir_all(out_root)?;
    let final_dir = out_root.join(&report.id);
    let tmp = out_root.join(format!(".{}.tmp-{}", report.id, std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(tmp.join(TRAJECTORIES_DIR))?;
    fs::write(tmp.join(REPORT_FILE), report.to_markdown())?;
    for t in trajectories {
        fs::write(
            tmp.join(TRAJECTORIES_DIR)
                .join(format!("{}.jsonl", t.session_id)),
            t.to_jsonl(),
        )?;
    }

    let mut paths = BundlePaths {
        report: REPORT_FILE.into(),
        trajectories: TRAJECTORIES_DIR.into(),
        poc: None,
        evidence_generator: None,
        evidence_checker: None,
    };
    let stored = match verdict {
        Verdict::Rejected { .. } => verdict.clone(),
        Verdict::Validated {
            poc,
            generator_evidence,
            checker_evidence,
        } => {
            let checker = checker_evidence.as_ref().expect("checked above");
            copy_tree(&poc.root_dir, &tmp.join(POC_DIR))?;
            copy_tree(&generator_evidence.dir, &tmp.join(GENERATOR_EVIDENCE_DIR))?;
            copy_tree(&checker.dir, &tmp.join(CHECKER_EVIDENCE_DIR))?;
            paths.poc = Some(POC_DIR.into());
            paths.evidence_generator = Some(GENERATOR_EVIDENCE_DIR.into());
            paths.evidence_checker = Some(CHECKER_EVIDENCE_DIR.into());
            let mut poc = poc.clone();
            poc.root_dir = PathBuf::from(POC_DIR);
            Verdict::Validated {
                poc,
                generator_evidence: generator_evidence
                    .clone()
                    .with_dir(GENERATOR_EVIDENCE_DIR.into()),
                checker_evidence: Some(checker.clone().with_dir(CHECKER_EVIDENCE_DIR.into())),
            }
        }
    };
    let (stage, reason) = match &stored {
        Verdict::Rejected { stage, reason } => (Some(*stage), Some(reason.clone())),
        Verdict::Validated { .. } => (None, None),
    };
    let file = VerdictFile {
        report_id: report.id.clone(),
        kind: verdict.kind(),
        stage,
        reason,
        paths,
        timings: timings.to_vec(),
        verdict: stored,
    };
    fs::write(tmp.join(VERDICT_FILE), serde_json::to_string_pretty(&file)?)?;

    if final_dir.exists() {
        fs::remove_dir_all(&final_dir)?;
    }
    fs::rename(&tmp, &final_dir)?;
    Ok(manifest_for(&final_dir, &file))
}

fn manifest_for(root: &Path, file: &VerdictFile) -> BundleManifest {
    let abs = |p: &Option<String>| p.as_ref().map(|p| root.join(p));
    BundleManifest {
        report_id: file.report_id.clone(),
        verdict_kind: file.kind,
        root: root.to_path_buf(),
        verdict_file: root.join(VERDICT_FILE),
        report: root.join(&file.paths.report),
        trajectories: root.join(&file.paths.trajectories),
        poc: abs(&file.paths.poc),
        evidence_generator: abs(&file.paths.evidence_generator),
        evidence_checker: abs(&file.paths.evidence_checker),
        timings: file.timings.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub root: PathBuf,
    pub file: VerdictFile,
    pub manifest: BundleManifest,
}

pub fn load_bundle(root: &Path) -> Result<LoadedBundle, BundleError> {
    let text = fs::read_to_string(root.join(VERDICT_FILE))?;
    let file: VerdictFile = serde_json::from_str(&text)?;
    let manifest = manifest_for(root, &file);
    Ok(LoadedBundle {
        root: root.to_path_buf(),
        file,
        manifest,
    })
}

/// Result of re-checking a bundle from its files alone.
#[derive(Debug, Clone)]
pub struct RecheckReport {
    pub kind: VerdictKind,
    pub checker_command_log_len: usize,
    pub matcher_results: Vec<MatcherResult>,
}

impl RecheckReport {
    /// A validated bundle holds up when its checker command log is present
    /// and at least one matcher fires on checker-owned files. Rejections hold
    /// trivially.
    pub fn holds(&self) -> bool {
        match self.kind {
            VerdictKind::Rejected => true,
            VerdictKind::Validated => {
                self.checker_command_log_len > 0 && signal::any_satisfied(&self.matcher_results)
            }
        }
    }
}

/// Re-evaluates a bundle mechanically. The checker command log is re-read
/// from `evidence-checker/commands.json`, not from `verdict.json`.
pub fn recheck_bundle(root: &Path) -> Result<RecheckReport, BundleError> {
    let loaded = load_bundle(root)?;
    let kind = loaded.file.kind;
    let Verdict::Validated {
        poc,
        checker_evidence,
        ..
    } = &loaded.file.verdict
    else {
        return Ok(RecheckReport {
            kind,
            checker_command_log_len: 0,
            matcher_results: vec![],
        });
    };
    let Some(checker) = checker_evidence else {
        return Ok(RecheckReport {
            kind,
            checker_command_log_len: 0,
            matcher_results: vec![],
        });
    };
    let dir = root.join(&checker.dir);
    let log_text = match fs::read_to_string(dir.join(super::COMMAND_LOG_FILE)) {
        Ok(t) => t,
        Err(_) => {
            return Ok(RecheckReport {
                kind,
                checker_command_log_len: 0,
                matcher_results: vec![],
            })
        }
    };
    let command_log = serde_json::from_str(&log_text)?;
    let on_disk = EvidenceBundle {
        dir: dir.clone(),
        traces: checker.traces.clone(),
        command_log,
        env_fingerprint: checker.env_fingerprint.clone(),
    };
    let matcher_results = poc
        .expected_signal
        .as_ref()
        .map(|s| signal::evaluate(s, &on_disk, &dir))
        .unwrap_or_default();
    Ok(RecheckReport {
        kind,
        checker_command_log_len: on_disk.command_log.len(),
        matcher_results,
    })
}
