//! Orchestration: one report through analysis, generation, checking and
//! knowledge evolution, and batches of reports in parallel.
//!
//! Every stage works on its own copy of the pristine tree inside a per-run
//! scratch directory. Infrastructure failures abort the run; an aborted
//! run writes `run.json` but never a verdict.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use config::{
    ConfigError, LimitsConfig, PipelineConfig, ProjectConfig, StageOverride, MAX_PARALLELISM,
    SCHEMA_HELP, TOOL_TIMEOUT_ENV,
};

use crate::kb::{KbStats, KnowledgeBase};
use crate::model::CHECKER_EVIDENCE_DIR;
use crate::model::{
    load_report, verdict_summary, write_bundle, BugReport, BundleManifest, RejectionStage,
    StageCounts, StageTiming, Verdict,
};
use crate::runtime::{Role, SharedBackend, Trajectory};
use crate::signal::{MatcherResult, SignalSpec};
use crate::stages::analyzer::{analyze, Decision};
use crate::stages::checker::check;
use crate::stages::evolution::{evolve, EvolutionSummary, Extractor};
use crate::stages::generator::{apply_ratings, generate, GenerationResult};
use crate::stages::{StageEnv, StageError, Templates};
use crate::workspace::copy_tree;

pub const RUN_FILE: &str = "run.json";
const CHECKER_EVIDENCE: &str = "checker-evidence";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Analysis,
    Generation,
    Checking,
    Evolution,
}

impl StageName {
    pub const ALL: [StageName; 4] = [
        StageName::Analysis,
        StageName::Generation,
        StageName::Checking,
        StageName::Evolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Analysis => "analysis",
            StageName::Generation => "generation",
            StageName::Checking => "checking",
            StageName::Evolution => "evolution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum StageState {
    Pending,
    Running { started_ms: u64 },
    Done { started_ms: u64, finished_ms: u64 },
    Skipped { cause: StageName },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum RunOutcome {
    Verdict {
        verdict: Verdict,
    },
    /// Infrastructure failure; never a verdict.
    Aborted {
        stage: StageName,
        error: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRun {
    pub report_id: String,
    pub project: String,
    pub stages: Vec<(StageName, StageState)>,
    pub outcome: RunOutcome,
    pub bundle: Option<BundleManifest>,
    pub run_file: Option<PathBuf>,
    /// Ratings applied plus entries committed.
    pub kb_mutations: usize,
    pub ratings_applied: usize,
    pub evolution: Option<EvolutionSummary>,
    pub check: Option<CheckRecord>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    /// Every model-facing input of the checker session.
    #[serde(skip)]
    pub checker_prompts: Vec<String>,
    /// Per-run scratch directory; it no longer exists unless `keep_scratch`.
    pub scratch: Option<PathBuf>,
}

impl PipelineRun {
    fn new(report: &BugReport) -> Self {
        Self {
            report_id: report.id.clone(),
            project: report.project.clone(),
            stages: StageName::ALL
                .iter()
                .map(|&s| (s, StageState::Pending))
                .collect(),
            outcome: RunOutcome::Aborted {
                stage: StageName::Analysis,
                error: "not started".into(),
            },
            bundle: None,
            run_file: None,
            kb_mutations: 0,
            ratings_applied: 0,
            evolution: None,
            check: None,
            trajectories: vec![],
            checker_prompts: vec![],
            scratch: None,
        }
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        match &self.outcome {
            RunOutcome::Verdict { verdict } => Some(verdict),
            RunOutcome::Aborted { .. } => None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self.outcome, RunOutcome::Aborted { .. })
    }

    pub fn state(&self, stage: StageName) -> StageState {
        self.stages
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, st)| *st)
            .unwrap_or(StageState::Pending)
    }

    fn set(&mut self, stage: StageName, state: StageState) {
        if let Some(slot) = self.stages.iter_mut().find(|(s, _)| *s == stage) {
            slot.1 = state;
        }
    }

    fn start(&mut self, stage: StageName) {
        self.set(
            stage,
            StageState::Running {
                started_ms: crate::now_ms(),
            },
        );
    }

    fn finish(&mut self, stage: StageName) {
        let started_ms = match self.state(stage) {
            StageState::Running { started_ms } => started_ms,
            _ => crate::now_ms(),
        };
        self.set(
            stage,
            StageState::Done {
                started_ms,
                finished_ms: crate::now_ms(),
            },
        );
    }

    fn skip(&mut self, stages: &[StageName], cause: StageName) {
        for &s in stages {
            self.set(s, StageState::Skipped { cause });
        }
    }

    fn timings(&self) -> Vec<StageTiming> {
        self.stages
            .iter()
            .filter_map(|(s, st)| match *st {
                StageState::Done {
                    started_ms,
                    finished_ms,
                } => Some(StageTiming {
                    stage: s.as_str().into(),
                    started_ms,
                    finished_ms,
                }),
                _ => None,
            })
            .collect()
    }

    /// Checks the stage state machine against the outcome.
    pub fn check_state_machine(&self) -> Result<(), String> {
        use StageState::*;
        let a = self.state(StageName::Analysis);
        let g = self.state(StageName::Generation);
        let c = self.state(StageName::Checking);
        let e = self.state(StageName::Evolution);
        let done = |s: StageState| matches!(s, Done { .. });
        if done(g) && !done(a) {
            return Err("generation ran without analysis".into());
        }
        if done(c) && !done(g) {
            return Err("checking ran without generation".into());
        }
        if done(e) && !done(g) {
            return Err("evolution ran without a generator trajectory".into());
        }
        match self.verdict().and_then(Verdict::rejection_stage) {
            Some(RejectionStage::Analysis) => {
                if g != (Skipped {
                    cause: StageName::Analysis,
                }) || c
                    != (Skipped {
                        cause: StageName::Analysis,
                    })
                {
                    return Err("analysis rejection must skip later stages".into());
                }
            }
            Some(RejectionStage::Generation) => {
                if c != (Skipped {
                    cause: StageName::Generation,
                }) || !done(e)
                {
                    return Err("generation rejection must skip checking and still evolve".into());
                }
            }
            Some(RejectionStage::Checking) | None
                if self.verdict().is_some() && (!done(c) || !done(e)) =>
            {
                return Err("checked runs must finish checking and evolution".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// What the checker derived and observed. Kept for rejections too, so a
/// checking rejection can be audited from its bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub signal: Option<SignalSpec>,
    pub matcher_results: Vec<MatcherResult>,
    pub reason: Option<String>,
    pub fresh_start_verified: bool,
    /// Checker evidence inside the bundle, once written.
    pub evidence: Option<PathBuf>,
}

struct RunCtx<'a> {
    report: &'a BugReport,
    config: &'a PipelineConfig,
    templates: &'a Templates,
    scratch: PathBuf,
    setup_notes: String,
    image: String,
}

impl RunCtx<'_> {
    fn env(&self, role: Role) -> StageEnv {
        let mut env = StageEnv::new(&self.report.id);
        env.limits = self.config.limits_for(role);
        env.templates = self.templates.clone();
        env.network = self.config.network;
        env.trajectory_dir = Some(self.scratch.join("trajectories"));
        env.image = self.image.clone();
        env.setup_notes = self.setup_notes.clone();
        env
    }

    fn backend(&self, role: Role) -> Result<SharedBackend, StageError> {
        let r = self
            .config
            .backends
            .get(&role)
            .ok_or_else(|| StageError::Other(format!("no backend for {role}")))?;
        Ok(r.open(&self.report.id, &self.config.base_dir)?)
    }

    fn copy_pristine(&self, name: &str) -> Result<PathBuf, StageError> {
        let project = &self.config.projects[&self.report.project];
        let dst = self.scratch.join(name);
        copy_tree(&project.pristine, &dst)?;
        Ok(dst)
    }
}

fn load_templates(config: &PipelineConfig) -> Result<Templates, StageError> {
    Ok(match &config.templates_dir {
        Some(d) => Templates::load(d)?,
        None => Templates::default(),
    })
}

/// Runs one report end to end and writes its bundle (or `run.json` only
/// when aborted) under `<output_root>/<report id>/`.
pub fn run_pipeline(report: &BugReport, config: &PipelineConfig) -> PipelineRun {
    let mut run = PipelineRun::new(report);
    let bundle_dir = config.output_root.join(&report.id);
    let scratch = match make_scratch(config, &report.id) {
        Ok(s) => s,
        Err(e) => {
            run.outcome = RunOutcome::Aborted {
                stage: StageName::Analysis,
                error: format!("scratch directory: {e}"),
            };
            write_run_file(&mut run, &bundle_dir);
            return run;
        }
    };
    run.scratch = Some(scratch.path().to_path_buf());
    let result = drive(report, config, &mut run, scratch.path());
    match result {
        Ok(verdict) => {
            run.outcome = RunOutcome::Verdict { verdict };
            let verdict = run.verdict().expect("just set").clone();
            match write_bundle(
                &verdict,
                report,
                &run.trajectories,
                &run.timings(),
                &config.output_root,
            ) {
                Ok(m) => {
                    let copied = attach_checker_evidence(&mut run, &m, scratch.path());
                    if let Err(e) = copied {
                        log::warn!("cannot keep checker evidence of {}: {e}", report.id);
                    }
                    run.bundle = Some(m);
                }
                Err(e) => {
                    run.outcome = RunOutcome::Aborted {
                        stage: StageName::Evolution,
                        error: format!("bundle write failed: {e}"),
                    };
                }
            }
        }
        Err((stage, e)) => {
            log::error!("run {} aborted during {}: {e}", report.id, stage.as_str());
            run.set(stage, StageState::Pending);
            run.outcome = RunOutcome::Aborted {
                stage,
                error: e.to_string(),
            };
            // Partial trajectories are kept for diagnosis.
            let persisted = scratch.path().join("trajectories");
            let _ = fs::remove_dir_all(&bundle_dir);
            if persisted.is_dir() {
                let _ = copy_tree(&persisted, &bundle_dir.join("trajectories"));
            }
        }
    }
    write_run_file(&mut run, &bundle_dir);
    if config.keep_scratch {
        let kept = scratch.keep();
        log::info!("scratch for {} kept at {}", report.id, kept.display());
    }
    run
}

fn attach_checker_evidence(
    run: &mut PipelineRun,
    bundle: &BundleManifest,
    scratch: &Path,
) -> std::io::Result<()> {
    let Some(check) = run.check.as_mut() else {
        return Ok(());
    };
    if let Some(ev) = &bundle.evidence_checker {
        check.evidence = Some(ev.clone());
        return Ok(());
    }
    let src = scratch.join(CHECKER_EVIDENCE);
    if src.is_dir() {
        let dst = bundle.root.join(CHECKER_EVIDENCE_DIR);
        copy_tree(&src, &dst)?;
        check.evidence = Some(dst);
    }
    Ok(())
}

fn make_scratch(config: &PipelineConfig, id: &str) -> std::io::Result<tempfile::TempDir> {
    let mut b = tempfile::Builder::new();
    let prefix = format!("vouch-{id}-");
    b.prefix(&prefix);
    match &config.scratch_root {
        Some(root) => b.tempdir_in(root),
        None => b.tempdir(),
    }
}

fn write_run_file(run: &mut PipelineRun, bundle_dir: &Path) {
    let path = bundle_dir.join(RUN_FILE);
    let res = fs::create_dir_all(bundle_dir).and_then(|_| {
        let text = serde_json::to_string_pretty(&*run).map_err(std::io::Error::other)?;
        fs::write(&path, text)
    });
    match res {
        Ok(()) => run.run_file = Some(path),
        Err(e) => log::error!("cannot write {}: {e}", path.display()),
    }
}

type Abort = (StageName, StageError);

fn drive(
    report: &BugReport,
    config: &PipelineConfig,
    run: &mut PipelineRun,
    scratch: &Path,
) -> Result<Verdict, Abort> {
    let at = |stage: StageName| move |e: StageError| (stage, e);
    let project = config.projects.get(&report.project).ok_or_else(|| {
        (
            StageName::Analysis,
            StageError::Other(format!("project {} is not configured", report.project)),
        )
    })?;
    let setup_notes = match &project.setup_notes {
        Some(p) => fs::read_to_string(p).map_err(|e| at(StageName::Analysis)(e.into()))?,
        None => String::new(),
    };
    let templates = load_templates(config).map_err(at(StageName::Analysis))?;
    let kb = KnowledgeBase::init(&config.kb_root).map_err(|e| at(StageName::Analysis)(e.into()))?;
    let ctx = RunCtx {
        report,
        config,
        templates: &templates,
        scratch: scratch.to_path_buf(),
        setup_notes,
        image: project.image.clone(),
    };

    // Analysis.
    run.start(StageName::Analysis);
    let (analysis, traj) = {
        let ws = ctx
            .copy_pristine("analysis")
            .map_err(at(StageName::Analysis))?;
        let backend = ctx
            .backend(Role::Analyzer)
            .map_err(at(StageName::Analysis))?;
        analyze(report, &ws, &ctx.env(Role::Analyzer), &backend).map_err(at(StageName::Analysis))?
    };
    run.trajectories.push(traj);
    run.finish(StageName::Analysis);
    let mechanism = match (analysis.decision, analysis.mechanism) {
        (Decision::Reject { reason }, _) => {
            run.skip(
                &[
                    StageName::Generation,
                    StageName::Checking,
                    StageName::Evolution,
                ],
                StageName::Analysis,
            );
            return Ok(Verdict::rejected(RejectionStage::Analysis, reason));
        }
        (Decision::Proceed, Some(m)) => m,
        (Decision::Proceed, None) => {
            return Err((
                StageName::Analysis,
                StageError::Other("proceed decision without a mechanism".into()),
            ))
        }
    };

    // Generation.
    run.start(StageName::Generation);
    let snapshot = kb
        .snapshot(&report.project, config.limits.snapshot_k)
        .map_err(|e| at(StageName::Generation)(e.into()))?;
    let gen_ws = ctx
        .copy_pristine("generation")
        .map_err(at(StageName::Generation))?;
    let (generation, gen_traj) = {
        let backend = ctx
            .backend(Role::Generator)
            .map_err(at(StageName::Generation))?;
        generate(
            report,
            &mechanism,
            &snapshot,
            &gen_ws,
            Some(kb.root()),
            &ctx.env(Role::Generator),
            &backend,
        )
        .map_err(at(StageName::Generation))?
    };
    run.ratings_applied = apply_ratings(&generation.kb_ratings, &kb, &gen_traj.session_id);
    run.trajectories.push(gen_traj.clone());
    run.finish(StageName::Generation);

    // Checking.
    let verdict = match generation.result {
        GenerationResult::GaveUp { explanation } => {
            run.skip(&[StageName::Checking], StageName::Generation);
            Verdict::rejected(RejectionStage::Generation, explanation)
        }
        GenerationResult::Produced { poc, evidence } => {
            run.start(StageName::Checking);
            let backend = ctx
                .backend(Role::Checker)
                .map_err(at(StageName::Checking))?;
            let (outcome, traj, prompts) = check(
                report,
                &poc,
                &evidence,
                &project.pristine,
                &scratch.join("checking"),
                &scratch.join(CHECKER_EVIDENCE),
                &ctx.env(Role::Checker),
                &backend,
            )
            .map_err(at(StageName::Checking))?;
            run.trajectories.push(traj);
            run.checker_prompts = prompts;
            run.check = Some(CheckRecord {
                signal: outcome.signal.clone(),
                matcher_results: outcome.matcher_results.clone(),
                reason: outcome.reason(),
                fresh_start_verified: outcome.fresh_start_verified,
                evidence: None,
            });
            run.finish(StageName::Checking);
            if outcome.is_valid() {
                let mut poc = poc;
                poc.expected_signal = outcome.signal.clone();
                Verdict::Validated {
                    poc,
                    generator_evidence: evidence,
                    checker_evidence: outcome.fresh_evidence,
                }
            } else {
                Verdict::rejected(
                    RejectionStage::Checking,
                    outcome.reason().unwrap_or_default(),
                )
            }
        }
    };

    // Evolution runs whenever a generator trajectory exists.
    run.start(StageName::Evolution);
    let summary = {
        let snapshot = kb
            .snapshot(&report.project, config.limits.snapshot_k)
            .map_err(|e| at(StageName::Evolution)(e.into()))?;
        let ext_backend = ctx
            .backend(Role::Extractor)
            .map_err(at(StageName::Evolution))?;
        let filter_backend = ctx
            .backend(Role::Filter)
            .map_err(at(StageName::Evolution))?;
        let (mut extractor, candidates) = Extractor::start(
            &gen_traj,
            &kb,
            &report.project,
            &snapshot,
            &ctx.env(Role::Extractor),
            &ext_backend,
        )
        .map_err(at(StageName::Evolution))?;
        let summary = evolve(
            candidates,
            &kb,
            &mut extractor,
            &ctx.env(Role::Filter),
            &filter_backend,
            config.limits.max_retries,
        )
        .map_err(at(StageName::Evolution))?;
        run.trajectories.push(extractor.into_trajectory());
        summary
    };
    run.trajectories
        .extend(summary.filter_trajectories.iter().cloned());
    run.kb_mutations = run.ratings_applied + summary.committed.len();
    run.evolution = Some(summary);
    run.finish(StageName::Evolution);
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub path: PathBuf,
    pub report_id: Option<String>,
    /// `validated`, `rejected`, `aborted` or `unreadable`.
    pub status: String,
    pub stage: Option<RejectionStage>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KbGrowth {
    pub created: usize,
    pub updated: usize,
    pub ratings_applied: usize,
    pub before: Option<KbStats>,
    pub after: Option<KbStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub entries: Vec<BatchEntry>,
    pub counts: StageCounts,
    pub aborted: usize,
    pub unreadable: usize,
    pub kb: KbGrowth,
}

impl BatchSummary {
    pub fn render(&self) -> String {
        let mut s = format!(
            "reports: {} ({} aborted, {} unreadable)\n{}\n",
            self.entries.len(),
            self.aborted,
            self.unreadable,
            self.counts
        );
        s.push_str(&format!(
            "kb: {} created, {} updated, {} ratings applied\n",
            self.kb.created, self.kb.updated, self.kb.ratings_applied
        ));
        if let Some(after) = &self.kb.after {
            s.push_str(&after.to_string());
        }
        s
    }
}

/// Runs every report with up to `config.parallelism` in flight. Failures
/// of single reports are recorded and never stop the batch.
pub fn run_batch(
    paths: &[PathBuf],
    config: &PipelineConfig,
) -> (BatchSummary, Vec<Option<PipelineRun>>) {
    if paths.is_empty() {
        return (BatchSummary::default(), vec![]);
    }
    let kb_stats = || {
        KnowledgeBase::init(&config.kb_root)
            .and_then(|kb| kb.stats())
            .map_err(|e| log::warn!("kb stats unavailable: {e}"))
            .ok()
    };
    let before = kb_stats();

    // Loaded up front so duplicate ids are detected before anything runs.
    let mut seen = std::collections::BTreeSet::new();
    let loaded: Vec<Result<BugReport, String>> = paths
        .iter()
        .map(|p| {
            let r = load_report(p).map_err(|e| e.to_string())?;
            if !seen.insert(r.id.clone()) {
                return Err(format!("duplicate report id {}", r.id));
            }
            Ok(r)
        })
        .collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<PipelineRun>>> = Mutex::new(vec![None; paths.len()]);
    let workers = config
        .parallelism
        .clamp(1, MAX_PARALLELISM)
        .min(paths.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= loaded.len() {
                    break;
                }
                if let Ok(report) = &loaded[i] {
                    let run = run_pipeline(report, config);
                    results.lock().expect("results lock")[i] = Some(run);
                }
            });
        }
    });
    let runs = results.into_inner().expect("results lock");

    let mut summary = BatchSummary::default();
    let mut verdicts = Vec::new();
    for ((path, load), run) in paths.iter().zip(&loaded).zip(&runs) {
        let entry = match (load, run) {
            (Err(e), _) => {
                summary.unreadable += 1;
                BatchEntry {
                    path: path.clone(),
                    report_id: None,
                    status: "unreadable".into(),
                    stage: None,
                    detail: Some(e.clone()),
                }
            }
            (Ok(r), Some(run)) => {
                if let Some(ev) = &run.evolution {
                    summary.kb.created += ev.created();
                    summary.kb.updated += ev.updated();
                }
                summary.kb.ratings_applied += run.ratings_applied;
                match &run.outcome {
                    RunOutcome::Verdict { verdict } => {
                        verdicts.push(verdict.clone());
                        BatchEntry {
                            path: path.clone(),
                            report_id: Some(r.id.clone()),
                            status: format!("{:?}", verdict.kind()).to_lowercase(),
                            stage: verdict.rejection_stage(),
                            detail: match verdict {
                                Verdict::Rejected { reason, .. } => Some(reason.clone()),
                                Verdict::Validated { .. } => None,
                            },
                        }
                    }
                    RunOutcome::Aborted { stage, error } => {
                        summary.aborted += 1;
                        BatchEntry {
                            path: path.clone(),
                            report_id: Some(r.id.clone()),
                            status: "aborted".into(),
                            stage: None,
                            detail: Some(format!("{}: {error}", stage.as_str())),
                        }
                    }
                }
            }
            (Ok(r), None) => {
                summary.aborted += 1;
                BatchEntry {
                    path: path.clone(),
                    report_id: Some(r.id.clone()),
                    status: "aborted".into(),
                    stage: None,
                    detail: Some("worker produced no result".into()),
                }
            }
        };
        summary.entries.push(entry);
    }
    summary.counts = verdict_summary(&verdicts);
    summary.kb.before = before;
    summary.kb.after = kb_stats();
    (summary, runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch_is_empty() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir(d.path().join("src")).unwrap();
        let mut text = String::from(
            "kb_root = \"kb\"\noutput_root = \"out\"\n[projects.p]\npristine = \"src\"\n",
        );
        for r in Role::ALL {
            text.push_str(&format!(
                "[backends.{r}]\nkind = \"scripted\"\nlocation = \"x.json\"\n"
            ));
        }
        let cfg = PipelineConfig::parse(&text, d.path()).unwrap();
        let (summary, runs) = run_batch(&[], &cfg);
        assert_eq!(summary, BatchSummary::default());
        assert!(runs.is_empty());
        assert!(!d.path().join("out").exists());
    }

    #[test]
    fn unknown_project_aborts() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir(d.path().join("src")).unwrap();
        let mut text = String::from(
            "kb_root = \"kb\"\noutput_root = \"out\"\n[projects.p]\npristine = \"src\"\n",
        );
        for r in Role::ALL {
            text.push_str(&format!(
                "[backends.{r}]\nkind = \"scripted\"\nlocation = \"x.json\"\n"
            ));
        }
        let cfg = PipelineConfig::parse(&text, d.path()).unwrap();
        let report =
            crate::model::parse_report("---\nid: r1\nproject: other\ntitle: t\n---\nbody\n")
                .unwrap();
        let run = run_pipeline(&report, &cfg);
        assert!(run.is_aborted());
        assert!(run.verdict().is_none());
        assert!(d.path().join("out/r1/run.json").is_file());
        assert!(!d.path().join("out/r1/verdict.json").exists());
    }
}
