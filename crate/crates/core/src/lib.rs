//! Validation pipeline that turns candidate bug reports into independently
//! re-verified proof-of-concept bundles, or rejects them.
//!
//! A report flows through four stages:
//!
//! 1. [`stages::analyzer`] fact-checks the report against the code base and
//!    either rejects it or summarises the bug mechanism.
//! 2. [`stages::generator`] iterates on a PoC in a workspace copy, then
//!    re-runs it in a second phase while the runtime records evidence.
//! 3. [`stages::checker`] re-executes the PoC in a fresh workspace with no
//!    access to the generator's context, evaluates machine-checkable signal
//!    matchers, and adjudicates realism.
//! 4. [`stages::evolution`] mines the generator trajectory for reusable
//!    knowledge and commits filtered items to the [`kb`].
//!
//! Every agent runs in the [`runtime`], which records a complete
//! [`runtime::Trajectory`] and dispatches tool calls to the sandboxed
//! [`toolkit`]. The [`pipeline`] module wires the stages together and writes
//! output bundles.

pub mod kb;
pub mod model;
pub mod pipeline;
pub mod runtime;
pub mod signal;
pub mod stages;
pub mod toolkit;
pub mod workspace;

pub use kb::{Category, KnowledgeBase, KnowledgeEntry, Scope};
pub use model::{
    verdict_summary, BugReport, BundleManifest, EvidenceBundle, PoCArtifact, RejectionStage,
    StageCounts, Verdict,
};
pub use pipeline::{run_batch, run_pipeline, BatchSummary, PipelineConfig, PipelineRun};
pub use runtime::{Step, Trajectory};
pub use signal::{Matcher, SignalSpec};

/// Milliseconds since the Unix epoch.
pub(crate) fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
