use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::confine::{confine, Access};
use super::{ToolContext, ToolError};

/// Files larger than this are skipped.
const MAX_FILE_BYTES: u64 = 8 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub path: PathBuf,
    /// 1-based.
    pub line_no: usize,
    pub line: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
    /// More than `max_hits` lines matched.
    pub capped: bool,
}

impl SearchResult {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.hits {
            let _ = writeln!(out, "{}:{}: {}", h.path.display(), h.line_no, h.line);
        }
        if self.capped {
            out.push_str("[more matches omitted]\n");
        }
        if self.hits.is_empty() {
            out.push_str("no matches\n");
        }
        out
    }
}

/// Line search under `scope`. Hit paths are relative to the workspace when
/// inside it, else absolute. Symlinks are not followed.
pub fn search(
    ctx: &ToolContext,
    pattern: &str,
    scope: &str,
    regex: bool,
    max_hits: usize,
) -> Result<SearchResult, ToolError> {
    let re = if regex {
        Regex::new(pattern)
    } else {
        Regex::new(&regex::escape(pattern))
    }
    .map_err(|e| ToolError::InvalidPattern(e.to_string()))?;
    let root = confine(scope, &ctx.read_roots(), Access::Read)?;
    let ws = ctx.workspace.canonicalize()?;

    let mut hits = Vec::new();
    let mut capped = false;
    let walker = WalkDir::new(&root).sort_by_file_name().into_iter();
    'files: for entry in walker.filter_map(Result::ok) {
        if !entry.file_type().is_file() {
            continue;
        }
        if entry
            .metadata()
            .map(|m| m.len() > MAX_FILE_BYTES)
            .unwrap_or(true)
        {
            continue;
        }
        let Ok(bytes) = fs::read(entry.path()) else {
            continue;
        };
        if bytes.contains(&0) {
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        let shown = entry
            .path()
            .strip_prefix(&ws)
            .map(PathBuf::from)
            .unwrap_or_else(|_| entry.path().to_path_buf());
        for (i, line) in text.lines().enumerate() {
            if re.is_match(line) {
                if hits.len() == max_hits {
                    capped = true;
                    break 'files;
                }
                hits.push(SearchHit {
                    path: shown.clone(),
                    line_no: i + 1,
                    line: line.to_string(),
                });
            }
        }
    }
    hits.sort_by(|a, b| a.path.cmp(&b.path).then(a.line_no.cmp(&b.line_no)));
    Ok(SearchResult { hits, capped })
}
