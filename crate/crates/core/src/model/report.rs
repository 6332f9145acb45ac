use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is missing required header field `{0}`")]
    MissingField(String),
    #[error("report body is empty")]
    EmptyBody,
    #[error("malformed header line {line}: `{text}`")]
    MalformedHeader { line: usize, text: String },
    #[error("cannot read report {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A candidate bug report: one report describes one suspected defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub project: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub claimed_locations: Vec<String>,
    #[serde(default)]
    pub claimed_bug_class: Option<String>,
    #[serde(default)]
    pub source: String,
    /// Header keys this format does not know about, kept verbatim.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

/// Loads a report file: a `---` delimited `key: value` header followed by a
/// markdown body.
///
/// ```text
/// ---
/// id: r1
/// project: toyc
/// title: Heap over-read in lookup()
/// locations: src/table.c:14, src/main.c:9
/// bug_class: out-of-bounds-read
/// source: reporter-v2
/// ---
/// The lookup function reads one element past ...
/// ```
pub fn load_report(path: &Path) -> Result<BugReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_report(&text)
}

pub fn parse_report(text: &str) -> Result<BugReport, ReportError> {
    let mut lines = text.lines().enumerate();
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut body_start = None;

    match lines.next() {
        Some((_, l)) if l.trim() == "---" => {}
        _ => return Err(ReportError::MissingField("id".into())),
    }
    for (n, line) in lines.by_ref() {
        if line.trim() == "---" {
            body_start = Some(n + 1);
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once(':') else {
            return Err(ReportError::MalformedHeader {
                line: n + 1,
                text: line.to_string(),
            });
        };
        header.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    let Some(body_start) = body_start else {
        return Err(ReportError::MalformedHeader {
            line: text.lines().count(),
            text: "unterminated header".into(),
        });
    };
    let body: String = text.lines().skip(body_start).collect::<Vec<_>>().join("\n");
    let body = body.trim().to_string();

    let mut take = |key: &str| header.remove(key).filter(|v| !v.is_empty());
    let id = take("id").ok_or_else(|| ReportError::MissingField("id".into()))?;
    let project = take("project").ok_or_else(|| ReportError::MissingField("project".into()))?;
    let title = take("title").ok_or_else(|| ReportError::MissingField("title".into()))?;
    let claimed_locations = take("locations")
        .map(|s| {
            s.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let claimed_bug_class = take("bug_class");
    let source = take("source").unwrap_or_default();

    if body.is_empty() {
        return Err(ReportError::EmptyBody);
    }
    Ok(BugReport {
        id,
        project,
        title,
        body,
        claimed_locations,
        claimed_bug_class,
        source,
        extra: header,
    })
}

impl BugReport {
    /// Renders the report back into its file format. `parse_report` of the
    /// output yields an equal report.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("---\n");
        let _ = writeln!(out, "id: {}", self.id);
        let _ = writeln!(out, "project: {}", self.project);
        let _ = writeln!(out, "title: {}", self.title);
        if !self.claimed_locations.is_empty() {
            let _ = writeln!(out, "locations: {}", self.claimed_locations.join(", "));
        }
        if let Some(c) = &self.claimed_bug_class {
            let _ = writeln!(out, "bug_class: {c}");
        }
        if !self.source.is_empty() {
            let _ = writeln!(out, "source: {}", self.source);
        }
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k}: {v}");
        }
        out.push_str("---\n");
        out.push_str(&self.body);
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "---\nid: r1\nproject: toyc\ntitle: Over-read\nlocations: src/a.c:3, src/b.c:9\nbug_class: oob-read\nsource: reporter\nseverity: high\n---\n\nThe body.\nSecond line.\n";

    #[test]
    fn maps_header_fields() {
        let r = parse_report(SAMPLE).unwrap();
        assert_eq!(r.id, "r1");
        assert_eq!(r.project, "toyc");
        assert_eq!(r.claimed_locations, vec!["src/a.c:3", "src/b.c:9"]);
        assert_eq!(r.claimed_bug_class.as_deref(), Some("oob-read"));
        assert_eq!(r.extra.get("severity").map(String::as_str), Some("high"));
        assert_eq!(r.body, "The body.\nSecond line.");
        assert_eq!(parse_report(&r.to_markdown()).unwrap(), r);
    }

    #[test]
    fn missing_project() {
        let err = parse_report("---\nid: r1\ntitle: t\n---\nbody\n").unwrap_err();
        assert!(matches!(err, ReportError::MissingField(f) if f == "project"));
    }

    #[test]
    fn empty_body() {
        let err = parse_report("---\nid: r1\nproject: p\ntitle: t\n---\n\n   \n").unwrap_err();
        assert!(matches!(err, ReportError::EmptyBody));
    }

    #[test]
    fn unreadable() {
        let err = load_report(Path::new("/nonexistent/report.md")).unwrap_err();
        assert!(matches!(err, ReportError::UnreadableFile { .. }));
    }

    #[test]
    fn no_header_block() {
        assert!(matches!(
            parse_report("just text"),
            Err(ReportError::MissingField(_))
        ));
        assert!(matches!(
            parse_report("---\nid: x\nnot a pair\n---\nb"),
            Err(ReportError::MalformedHeader { line: 3, .. })
        ));
    }
}
