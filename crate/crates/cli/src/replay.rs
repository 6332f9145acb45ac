//! Text rendering of stored trajectories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vouch_core::model::TRAJECTORIES_DIR;
use vouch_core::runtime::{render_index, Step};
use vouch_core::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Full,
    Index,
    Step(usize),
}

/// `path` is a `.jsonl` trajectory or a bundle directory.
pub fn replay(path: &Path, view: View, mask: &[PathBuf]) -> Result<String> {
    let files = trajectory_files(path)?;
    let mut out = String::new();
    for f in &files {
        let t = Trajectory::load(f).with_context(|| format!("loading {}", f.display()))?;
        let _ = writeln!(
            out,
            "=== session {} ({}, {} steps)",
            t.session_id,
            t.role,
            t.len()
        );
        match view {
            View::Index => out.push_str(&render_index(&t).to_string()),
            View::Step(i) => {
                let Some(step) = t.iter().nth(i) else {
                    bail!("step {i} out of range (session has {} steps)", t.len());
                };
                let roots: Vec<&Path> = mask.iter().map(PathBuf::as_path).collect();
                render_steps(&mut out, i, std::iter::once(step.clone()), &roots, &t);
            }
            View::Full => {
                let roots: Vec<&Path> = mask.iter().map(PathBuf::as_path).collect();
                let steps: Vec<Step> = t.iter().cloned().collect();
                render_steps(&mut out, 0, steps.into_iter(), &roots, &t);
            }
        }
    }
    Ok(out)
}

fn render_steps(
    out: &mut String,
    first: usize,
    steps: impl Iterator<Item = Step>,
    roots: &[&Path],
    t: &Trajectory,
) {
    let masked = (!roots.is_empty()).then(|| t.normalized(roots));
    for (offset, step) in steps.enumerate() {
        let i = first + offset;
        let step = masked.as_ref().map_or(step, |m| m[i].clone());
        let _ = writeln!(out, "--- [{i}] {}", step.kind());
        match &step {
            Step::Thinking { text } | Step::PhasePrompt { text } | Step::FinalMessage { text } => {
                out.push_str(text);
            }
            Step::ToolCall { tool, args } => {
                let _ = write!(out, "{tool}");
                for (k, v) in args {
                    let _ = write!(out, "\n  {k}: {v}");
                }
            }
            Step::ToolResult {
                output,
                exit_code,
                truncated,
            } => {
                let _ = writeln!(
                    out,
                    "exit {exit_code}{}",
                    if *truncated {
                        " (model saw an excerpt)"
                    } else {
                        ""
                    }
                );
                out.push_str(output);
            }
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
}

fn trajectory_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join(TRAJECTORIES_DIR).is_dir() {
        path.join(TRAJECTORIES_DIR)
    } else {
        path.to_path_buf()
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    if files.is_empty() {
        bail!("no trajectories under {}", dir.display());
    }
    files.sort();
    Ok(files)
}
