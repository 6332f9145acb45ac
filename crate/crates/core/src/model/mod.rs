//! Shared data model: reports, verdicts, PoC artifacts, evidence and output
//! bundles.

mod bundle;
mod report;
mod summary;
mod verdict;

pub use bundle::{
    load_bundle, recheck_bundle, write_bundle, BundleError, BundleManifest, LoadedBundle,
    RecheckReport, StageTiming, VerdictFile, CHECKER_EVIDENCE_DIR, GENERATOR_EVIDENCE_DIR,
    TRAJECTORIES_DIR, VERDICT_FILE,
};
pub use report::{load_report, parse_report, BugReport, ReportError};
pub use summary::{verdict_summary, StageCounts};
pub use verdict::{
    CommandRecord, EnvFingerprint, EvidenceBundle, PoCArtifact, RejectionStage, TraceFile, Verdict,
    VerdictKind, COMMAND_LOG_FILE,
};
