//! Knowledge evolution: an extractor agent mines the generator trajectory
//! through an index view and proposes entries via custom tools; a filter
//! agent reviews each proposal; rejected proposals go back to the
//! extractor for at most `max_retries` revisions.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::envelope;
use super::templates::render;
use super::{StageEnv, StageError};
use crate::kb::{Category, EntryRef, KbError, KbSnapshot, KnowledgeBase, Scope};
use crate::runtime::{
    fetch_step, render_index, AgentSession, Role, SessionError, SharedBackend, ToolCallRequest,
    ToolHost, ToolReply, ToolSpec, Trajectory,
};
use crate::toolkit::{arg, opt_arg, specs_for, ToolError};

pub const DEFAULT_MAX_RETRIES: usize = 2;
pub const TOOLS: [&str; 4] = [
    "fetch_step",
    "kb_search",
    "create_knowledge",
    "update_knowledge",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CandidateAction {
    Create,
    Update { target: EntryRef },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCandidate {
    pub action: CandidateAction,
    pub scope: Scope,
    pub category: Category,
    pub title: String,
    pub keywords: Vec<String>,
    pub content: String,
    /// Generator trajectory step indices.
    pub provenance: Vec<usize>,
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum FilterResult {
    Accept,
    Feedback { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub entry: EntryRef,
    pub created: bool,
    pub version: u32,
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub title: String,
    pub attempt: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub committed: Vec<CommitRecord>,
    /// Revisions requested from the extractor.
    pub revised: usize,
    pub dropped: Vec<Dropped>,
    pub filter_calls: usize,
    #[serde(skip)]
    pub filter_trajectories: Vec<Trajectory>,
}

impl EvolutionSummary {
    pub fn created(&self) -> usize {
        self.committed.iter().filter(|c| c.created).count()
    }

    pub fn updated(&self) -> usize {
        self.committed.iter().filter(|c| !c.created).count()
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_provenance(s: &str, len: usize) -> Result<Vec<usize>, String> {
    let idx: Vec<usize> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| format!("bad step index {t:?}"))
        })
        .collect::<Result<_, _>>()?;
    if idx.is_empty() {
        return Err("provenance needs at least one step index".into());
    }
    if let Some(bad) = idx.iter().find(|&&i| i >= len) {
        return Err(format!(
            "step {bad} does not exist (trajectory has {len} steps)"
        ));
    }
    Ok(idx)
}

/// Tool host of the extractor. Create and update calls are intercepted
/// into candidates; the KB itself is only read here.
pub struct ExtractorHost<'a> {
    generator: &'a Trajectory,
    kb: &'a KnowledgeBase,
    project: String,
    pub candidates: Vec<KnowledgeCandidate>,
}

impl<'a> ExtractorHost<'a> {
    pub fn new(generator: &'a Trajectory, kb: &'a KnowledgeBase, project: &str) -> Self {
        Self {
            generator,
            kb,
            project: project.to_string(),
            candidates: Vec::new(),
        }
    }

    fn dispatch(&mut self, call: &ToolCallRequest) -> Result<String, String> {
        let e = |err: ToolError| err.to_string();
        match call.tool.as_str() {
            "fetch_step" => {
                let idx: usize = arg(call, "index")
                    .map_err(e)?
                    .trim()
                    .parse()
                    .map_err(|_| "index must be a number".to_string())?;
                let step = fetch_step(self.generator, idx).map_err(|x| x.to_string())?;
                serde_json::to_string_pretty(&step).map_err(|x| x.to_string())
            }
            "kb_search" => {
                let q = arg(call, "query").map_err(e)?;
                let terms: Vec<&str> = q.split_whitespace().collect();
                let hits = self
                    .kb
                    .query(&self.project, &terms)
                    .map_err(|x| x.to_string())?;
                if hits.is_empty() {
                    return Ok("no entries".into());
                }
                Ok(hits
                    .iter()
                    .map(|h| {
                        format!(
                            "{} | {} | [{}] | v{}\n{}\n",
                            h.entry_ref(),
                            h.title,
                            h.keywords.join(", "),
                            h.version,
                            h.content
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n"))
            }
            "create_knowledge" => {
                let category: Category = arg(call, "category")
                    .map_err(e)?
                    .parse()
                    .map_err(|x: KbError| x.to_string())?;
                let title = arg(call, "title").map_err(e)?.trim().to_string();
                if crate::kb::slugify(&title).is_empty() {
                    return Err("title must contain letters or digits".into());
                }
                let provenance =
                    parse_provenance(arg(call, "provenance").map_err(e)?, self.generator.len())?;
                self.candidates.push(KnowledgeCandidate {
                    action: CandidateAction::Create,
                    scope: Scope::for_category(&self.project, category),
                    category,
                    title,
                    keywords: split_list(arg(call, "keywords").map_err(e)?),
                    content: arg(call, "content").map_err(e)?.to_string(),
                    provenance,
                    attempt: 1,
                });
                Ok(format!("recorded proposal #{}", self.candidates.len()))
            }
            "update_knowledge" => {
                let target: EntryRef = arg(call, "entry")
                    .map_err(e)?
                    .parse()
                    .map_err(|x: KbError| x.to_string())?;
                if !target.scope.visible_to(&self.project) {
                    return Err(format!("entry {target} belongs to another project"));
                }
                let current = self.kb.load(&target).map_err(|x| x.to_string())?;
                let provenance =
                    parse_provenance(arg(call, "provenance").map_err(e)?, self.generator.len())?;
                let keywords = opt_arg(call, "keywords")
                    .map(split_list)
                    .unwrap_or(current.keywords);
                self.candidates.push(KnowledgeCandidate {
                    action: CandidateAction::Update {
                        target: target.clone(),
                    },
                    scope: target.scope.clone(),
                    category: target.category,
                    title: current.title,
                    keywords,
                    content: arg(call, "content").map_err(e)?.to_string(),
                    provenance,
                    attempt: 1,
                });
                Ok(format!("recorded proposal #{}", self.candidates.len()))
            }
            other => Err(format!("{other} is not provided by this host")),
        }
    }
}

impl ToolHost for ExtractorHost<'_> {
    fn specs(&self) -> Vec<ToolSpec> {
        specs_for(&TOOLS)
    }

    fn invoke(&mut self, call: &ToolCallRequest, _timeout: Duration) -> ToolReply {
        match self.dispatch(call) {
            Ok(out) => ToolReply::ok(out),
            Err(e) => ToolReply::error(format!("error: {e}")),
        }
    }
}

/// Produces a revised candidate after filter feedback, or gives up.
pub trait CandidateReviser {
    fn revise(
        &mut self,
        candidate: &KnowledgeCandidate,
        feedback: &str,
    ) -> Option<KnowledgeCandidate>;
}

/// A live extractor session. Revisions continue the same session.
pub struct Extractor<'a> {
    session: AgentSession,
    host: ExtractorHost<'a>,
    template: String,
    closed: bool,
}

impl<'a> Extractor<'a> {
    /// Runs the extraction pass and returns the session for revisions along
    /// with the initial candidates. A turn limit yields no candidates.
    pub fn start(
        generator: &'a Trajectory,
        kb: &'a KnowledgeBase,
        project: &str,
        snapshot: &KbSnapshot,
        env: &StageEnv,
        backend: &SharedBackend,
    ) -> Result<(Self, Vec<KnowledgeCandidate>), StageError> {
        let t = &env.templates;
        let mut session =
            env.open_session(Role::Extractor, &t.extractor_system, &TOOLS, backend, None)?;
        let mut host = ExtractorHost::new(generator, kb, project);
        let prompt = render(
            &t.extractor_task,
            &[
                ("project", project),
                ("snapshot", &snapshot.render()),
                ("index", &render_index(generator).to_string()),
            ],
        );
        let (candidates, closed) = match session.run(&prompt, &mut host) {
            Ok(_) => (std::mem::take(&mut host.candidates), false),
            Err(SessionError::TurnLimitExceeded { limit }) => {
                log::warn!("extractor hit its turn limit of {limit}; no candidates kept");
                host.candidates.clear();
                (vec![], true)
            }
            Err(e) => return Err(e.into()),
        };
        Ok((
            Self {
                session,
                host,
                template: t.extractor_revise.clone(),
                closed,
            },
            candidates,
        ))
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.session.into_trajectory()
    }
}

impl CandidateReviser for Extractor<'_> {
    fn revise(
        &mut self,
        candidate: &KnowledgeCandidate,
        feedback: &str,
    ) -> Option<KnowledgeCandidate> {
        if self.closed {
            return None;
        }
        let prompt = render(
            &self.template,
            &[
                ("title", &candidate.title),
                ("attempt", &candidate.attempt.to_string()),
                ("feedback", feedback),
            ],
        );
        match self.session.continue_session(&prompt, &mut self.host) {
            Ok(_) => {}
            Err(e) => {
                log::warn!("extractor revision failed: {e}");
                self.closed = true;
                return None;
            }
        }
        let fresh = std::mem::take(&mut self.host.candidates);
        fresh.into_iter().next().map(|mut c| {
            c.attempt = candidate.attempt + 1;
            c
        })
    }
}

#[derive(Deserialize)]
struct FilterEnvelope {
    decision: String,
    #[serde(default)]
    feedback: String,
}

pub const UNPARSEABLE_FEEDBACK: &str = "unparseable review, restate the proposal";

/// Reviews one candidate in a fresh filter session.
pub fn filter(
    candidate: &KnowledgeCandidate,
    env: &StageEnv,
    backend: &SharedBackend,
    call_no: usize,
) -> Result<(FilterResult, Trajectory), StageError> {
    let t = &env.templates;
    let mut session =
        env.open_session(Role::Filter, &t.filter_system, &[], backend, Some(call_no))?;
    let action = match &candidate.action {
        CandidateAction::Create => "create".to_string(),
        CandidateAction::Update { target } => format!("update {target}"),
    };
    let prompt = render(
        &t.filter_task,
        &[
            ("action", &action),
            ("category", candidate.category.as_str()),
            ("title", &candidate.title),
            ("keywords", &candidate.keywords.join(", ")),
            ("content", &candidate.content),
        ],
    );
    struct NoTools;
    impl ToolHost for NoTools {
        fn specs(&self) -> Vec<ToolSpec> {
            vec![]
        }
        fn invoke(&mut self, call: &ToolCallRequest, _: Duration) -> ToolReply {
            ToolReply::error(format!("error: {} is not available", call.tool))
        }
    }
    let msg = match session.run(&prompt, &mut NoTools) {
        Ok(m) => Some(m),
        Err(SessionError::TurnLimitExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let result = match msg.map(|m| envelope::parse::<FilterEnvelope>(&m)) {
        Some(Ok(e)) if e.decision.trim() == "accept" => FilterResult::Accept,
        Some(Ok(e)) if e.decision.trim() == "feedback" && !e.feedback.trim().is_empty() => {
            FilterResult::Feedback { text: e.feedback }
        }
        _ => FilterResult::Feedback {
            text: UNPARSEABLE_FEEDBACK.into(),
        },
    };
    Ok((result, session.into_trajectory()))
}

fn commit(kb: &KnowledgeBase, c: &KnowledgeCandidate) -> Result<CommitRecord, KbError> {
    match &c.action {
        CandidateAction::Create => {
            let e = kb.create_entry(&c.scope, c.category, &c.title, &c.keywords, &c.content)?;
            Ok(CommitRecord {
                entry: e.entry_ref(),
                created: true,
                version: e.version,
                attempt: c.attempt,
            })
        }
        CandidateAction::Update { target } => {
            let e = kb.update_entry(target, &c.content, Some(&c.keywords))?;
            Ok(CommitRecord {
                entry: e.entry_ref(),
                created: false,
                version: e.version,
                attempt: c.attempt,
            })
        }
    }
}

/// Filters every candidate, revising on feedback, and commits accepted
/// ones. The filter sees each candidate at most `max_retries + 1` times.
pub fn evolve(
    candidates: Vec<KnowledgeCandidate>,
    kb: &KnowledgeBase,
    reviser: &mut dyn CandidateReviser,
    env: &StageEnv,
    filter_backend: &SharedBackend,
    max_retries: usize,
) -> Result<EvolutionSummary, StageError> {
    let mut summary = EvolutionSummary::default();
    for mut cand in candidates {
        loop {
            summary.filter_calls += 1;
            let (verdict, traj) = filter(&cand, env, filter_backend, summary.filter_calls)?;
            summary.filter_trajectories.push(traj);
            match verdict {
                FilterResult::Accept => {
                    match commit(kb, &cand) {
                        Ok(rec) => summary.committed.push(rec),
                        Err(e) => summary.dropped.push(Dropped {
                            title: cand.title.clone(),
                            attempt: cand.attempt,
                            reason: format!("kb write failed: {e}"),
                        }),
                    }
                    break;
                }
                FilterResult::Feedback { text } => {
                    if cand.attempt > max_retries {
                        summary.dropped.push(Dropped {
                            title: cand.title.clone(),
                            attempt: cand.attempt,
                            reason: format!("retries exhausted: {text}"),
                        });
                        break;
                    }
                    match reviser.revise(&cand, &text) {
                        Some(next) => {
                            summary.revised += 1;
                            cand = next;
                        }
                        None => {
                            summary.dropped.push(Dropped {
                                title: cand.title.clone(),
                                attempt: cand.attempt,
                                reason: format!("abandoned after feedback: {text}"),
                            });
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(summary)
}
