use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One recorded event of an agent session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    Thinking {
        text: String,
    },
    ToolCall {
        tool: String,
        args: BTreeMap<String, String>,
    },
    /// `output` is the full stored text; `truncated` records that the model
    /// was shown a head/tail excerpt.
    ToolResult {
        output: String,
        exit_code: i32,
        truncated: bool,
    },
    PhasePrompt {
        text: String,
    },
    FinalMessage {
        text: String,
    },
}

impl Step {
    pub fn kind(&self) -> &'static str {
        match self {
            Step::Thinking { .. } => "thinking",
            Step::ToolCall { .. } => "tool_call",
            Step::ToolResult { .. } => "tool_result",
            Step::PhasePrompt { .. } => "phase_prompt",
            Step::FinalMessage { .. } => "final_message",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub at_ms: u64,
    #[serde(flatten)]
    pub step: Step,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    session_id: String,
    role: String,
}

/// Ordered record of an agent session. When a persistence path is set every
/// pushed step is appended to it as one JSON line.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub session_id: String,
    pub role: String,
    pub steps: Vec<StepRecord>,
    /// Set when the session stopped on its turn limit.
    #[serde(default)]
    pub incomplete: bool,
    #[serde(skip)]
    persist_path: Option<PathBuf>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.session_id == other.session_id
            && self.role == other.role
            && self.steps == other.steps
            && self.incomplete == other.incomplete
    }
}

impl Trajectory {
    pub fn new(session_id: impl Into<String>, role: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            role: role.into(),
            ..Default::default()
        }
    }

    /// Starts append-only persistence at `path`, truncating any previous
    /// file and writing steps recorded so far.
    pub fn persist_to(&mut self, path: &Path) -> io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_jsonl())?;
        self.persist_path = Some(path.to_path_buf());
        Ok(())
    }

    pub fn persist_path(&self) -> Option<&Path> {
        self.persist_path.as_deref()
    }

    pub fn push(&mut self, step: Step) -> usize {
        let index = self.steps.len();
        let record = StepRecord {
            index,
            at_ms: crate::now_ms(),
            step,
        };
        if let Some(path) = &self.persist_path {
            let line = serde_json::to_string(&record).expect("step serializes");
            let res = OpenOptions::new()
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = res {
                log::warn!("cannot append to trajectory {}: {e}", path.display());
            }
        }
        self.steps.push(record);
        index
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().map(|r| &r.step)
    }

    /// Header line followed by one line per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            session_id: self.session_id.clone(),
            role: self.role.clone(),
        })
        .expect("header serializes");
        out.push('\n');
        for r in &self.steps {
            out.push_str(&serde_json::to_string(r).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(l)?,
            None => {
                return Ok(Self::default());
            }
        };
        let steps = lines
            .map(serde_json::from_str)
            .collect::<Result<Vec<StepRecord>, _>>()?;
        Ok(Self {
            session_id: header.session_id,
            role: header.role,
            steps,
            incomplete: false,
            persist_path: None,
        })
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_jsonl(&text).map_err(io::Error::other)
    }

    /// Indices of the `PhasePrompt` steps.
    pub fn phase_boundaries(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|r| matches!(r.step, Step::PhasePrompt { .. }))
            .map(|r| r.index)
            .collect()
    }

    /// Steps from the `phase`-th phase prompt (0-based) up to the next one.
    pub fn phase_steps(&self, phase: usize) -> &[StepRecord] {
        let b = self.phase_boundaries();
        let Some(&start) = b.get(phase) else {
            return &[];
        };
        let end = b.get(phase + 1).copied().unwrap_or(self.steps.len());
        &self.steps[start..end]
    }

    /// Checks the structural invariants: contiguous indices starting at 0,
    /// every result directly after its call, at most one final message per
    /// phase.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut finals_in_phase = 0;
        for (i, r) in self.steps.iter().enumerate() {
            if r.index != i {
                return Err(format!("step {i} carries index {}", r.index));
            }
            match &r.step {
                Step::PhasePrompt { .. } => finals_in_phase = 0,
                Step::FinalMessage { .. } => {
                    finals_in_phase += 1;
                    if finals_in_phase > 1 {
                        return Err(format!("second final message in phase at step {i}"));
                    }
                }
                Step::ToolResult { .. } => {
                    if i == 0 || !matches!(self.steps[i - 1].step, Step::ToolCall { .. }) {
                        return Err(format!("tool result at {i} does not follow a call"));
                    }
                }
                Step::ToolCall { .. } => {
                    if !matches!(
                        self.steps.get(i + 1).map(|r| &r.step),
                        Some(Step::ToolResult { .. })
                    ) {
                        return Err(format!("tool call at {i} has no result"));
                    }
                }
                Step::Thinking { .. } => {}
            }
        }
        Ok(())
    }

    /// Steps with timestamps dropped and volatile runtime tokens (process
    /// ids, addresses, the given scratch roots) replaced by placeholders, for
    /// replay comparisons.
    pub fn normalized(&self, roots: &[&Path]) -> Vec<Step> {
        let masker = Masker::new(roots);
        self.steps.iter().map(|r| masker.step(&r.step)).collect()
    }
}

struct Masker {
    roots: Vec<String>,
    pid: Regex,
    addr: Regex,
    duration: Regex,
    clock: Regex,
    size: Regex,
}

impl Masker {
    fn new(roots: &[&Path]) -> Self {
        let mut roots: Vec<String> = roots
            .iter()
            .flat_map(|r| {
                let mut v = vec![r.to_string_lossy().into_owned()];
                if let Ok(c) = r.canonicalize() {
                    v.push(c.to_string_lossy().into_owned());
                }
                v
            })
            .collect();
        roots.sort_by_key(|r| std::cmp::Reverse(r.len()));
        Self {
            roots,
            pid: Regex::new(r"==\d+==").unwrap(),
            addr: Regex::new(r"0x[0-9a-fA-F]{4,}").unwrap(),
            duration: Regex::new(r"\b\d+ ms\b").unwrap(),
            clock: Regex::new(r#""(\w+_ms)":\s*\d+"#).unwrap(),
            // Index digest sizes shift with PID width.
            size: Regex::new(r"(result exit=-?\d+ )\d+B").unwrap(),
        }
    }

    fn text(&self, s: &str) -> String {
        let mut out = s.to_string();
        for r in &self.roots {
            if !r.is_empty() {
                out = out.replace(r.as_str(), "<ROOT>");
            }
        }
        let out = self.pid.replace_all(&out, "==<PID>==");
        let out = self.addr.replace_all(&out, "<ADDR>");
        let out = self.duration.replace_all(&out, "<N> ms");
        let out = self.clock.replace_all(&out, "\"$1\": <N>");
        self.size.replace_all(&out, "${1}<N>B").into_owned()
    }

    fn step(&self, s: &Step) -> Step {
        match s {
            Step::Thinking { text } => Step::Thinking {
                text: self.text(text),
            },
            Step::ToolCall { tool, args } => Step::ToolCall {
                tool: tool.clone(),
                args: args
                    .iter()
                    .map(|(k, v)| (k.clone(), self.text(v)))
                    .collect(),
            },
            Step::ToolResult {
                output,
                exit_code,
                truncated,
            } => Step::ToolResult {
                output: self.text(output),
                exit_code: *exit_code,
                truncated: *truncated,
            },
            Step::PhasePrompt { text } => Step::PhasePrompt {
                text: self.text(text),
            },
            Step::FinalMessage { text } => Step::FinalMessage {
                text: self.text(text),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_append_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t/s1.jsonl");
        let mut t = Trajectory::new("s1", "generator");
        t.push(Step::PhasePrompt { text: "go".into() });
        t.persist_to(&path).unwrap();
        t.push(Step::ToolCall {
            tool: "bash".into(),
            args: [("cmd".to_string(), "ls".to_string())].into(),
        });
        t.push(Step::ToolResult {
            output: "a\nb".into(),
            exit_code: 0,
            truncated: false,
        });
        let loaded = Trajectory::load(&path).unwrap();
        assert_eq!(loaded, t);
        assert_eq!(fs::read_to_string(&path).unwrap(), t.to_jsonl());
        assert!(t.check_invariants().is_ok());
    }

    #[test]
    fn invariant_violations_detected() {
        let mut t = Trajectory::new("s", "r");
        t.push(Step::ToolResult {
            output: String::new(),
            exit_code: 0,
            truncated: false,
        });
        assert!(t.check_invariants().is_err());

        let mut t = Trajectory::new("s", "r");
        t.push(Step::PhasePrompt { text: "p".into() });
        t.push(Step::FinalMessage { text: "a".into() });
        t.push(Step::FinalMessage { text: "b".into() });
        assert!(t.check_invariants().is_err());
    }

    #[test]
    fn normalization_masks_volatile_tokens() {
        let mut a = Trajectory::new("s", "r");
        a.push(Step::ToolResult {
            output: "==123==ERROR at 0x502000000020 in /tmp/abc/ws/x.c (12 ms)\n[3] result exit=1 2048B: x".into(),
            exit_code: 1,
            truncated: false,
        });
        let mut b = Trajectory::new("s", "r");
        b.push(Step::ToolResult {
            output: "==977==ERROR at 0x602000000011 in /tmp/zzz/ws/x.c (40 ms)\n[3] result exit=1 2049B: x".into(),
            exit_code: 1,
            truncated: false,
        });
        assert_ne!(a, b);
        assert_eq!(
            a.normalized(&[Path::new("/tmp/abc")]),
            b.normalized(&[Path::new("/tmp/zzz")])
        );
    }
}
