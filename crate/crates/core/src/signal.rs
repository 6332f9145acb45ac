//! Machine-checkable bug signals and their mechanical evaluation against an
//! evidence directory.

use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EvidenceBundle;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("signal spec has no matchers")]
    NoMatchers,
    #[error("matcher {index}: invalid regex: {message}")]
    BadRegex { index: usize, message: String },
    #[error("matcher {index}: numeric threshold must be finite and non-negative")]
    BadThreshold { index: usize },
}

/// How two trace files are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Comparator {
    /// Satisfied when the files differ in any byte.
    ByteDiff,
    /// Satisfied when the first number in each file differs by more than
    /// `threshold` in absolute value.
    NumericThreshold { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Matcher {
    StderrRegex {
        pattern: String,
    },
    StdoutRegex {
        pattern: String,
    },
    /// Some recorded command exited non-zero and its stdout or stderr matches.
    NonzeroExitWithPattern {
        pattern: String,
    },
    /// Paths are relative to the evidence directory.
    TraceDiff {
        a: String,
        b: String,
        comparator: Comparator,
    },
}

impl Matcher {
    fn regex(&self) -> Option<&str> {
        match self {
            Matcher::StderrRegex { pattern }
            | Matcher::StdoutRegex { pattern }
            | Matcher::NonzeroExitWithPattern { pattern } => Some(pattern),
            Matcher::TraceDiff { .. } => None,
        }
    }
}

/// The observation whose presence in independently collected evidence
/// proves that a bug manifested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub description: String,
    pub matchers: Vec<Matcher>,
    /// Report or PoC statements that justify the signal.
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.matchers.is_empty() {
            return Err(SignalError::NoMatchers);
        }
        for (index, m) in self.matchers.iter().enumerate() {
            if let Some(p) = m.regex() {
                Regex::new(p).map_err(|e| SignalError::BadRegex {
                    index,
                    message: e.to_string(),
                })?;
            }
            if let Matcher::TraceDiff {
                comparator: Comparator::NumericThreshold { threshold },
                ..
            } = m
            {
                if !threshold.is_finite() || *threshold < 0.0 {
                    return Err(SignalError::BadThreshold { index });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherResult {
    pub index: usize,
    pub satisfied: bool,
    pub detail: String,
}

/// Evaluates every matcher against the files of `evidence`, resolved under
/// `base` (the evidence directory). Only files are consulted, never the
/// claims of whoever produced them.
pub fn evaluate(spec: &SignalSpec, evidence: &EvidenceBundle, base: &Path) -> Vec<MatcherResult> {
    spec.matchers
        .iter()
        .enumerate()
        .map(|(index, m)| {
            let (satisfied, detail) = evaluate_one(m, evidence, base);
            MatcherResult {
                index,
                satisfied,
                detail,
            }
        })
        .collect()
}

/// True when at least one matcher is satisfied.
pub fn any_satisfied(results: &[MatcherResult]) -> bool {
    results.iter().any(|r| r.satisfied)
}

fn read_lossy(path: &Path) -> Option<String> {
    fs::read(path)
        .ok()
        .map(|b| String::from_utf8_lossy(&b).into_owned())
}

fn evaluate_one(m: &Matcher, evidence: &EvidenceBundle, base: &Path) -> (bool, String) {
    match m {
        Matcher::StderrRegex { pattern } | Matcher::StdoutRegex { pattern } => {
            let re = match Regex::new(pattern) {
                Ok(re) => re,
                Err(e) => return (false, format!("invalid regex: {e}")),
            };
            let want_stderr = matches!(m, Matcher::StderrRegex { .. });
            for (i, rec) in evidence.command_log.iter().enumerate() {
                let rel = if want_stderr {
                    &rec.stderr
                } else {
                    &rec.stdout
                };
                let Some(rel) = rel else { continue };
                if let Some(text) = read_lossy(&base.join(rel)) {
                    if let Some(hit) = re.find(&text) {
                        return (
                            true,
                            format!("command {i} `{}`: {}", rec.command, hit.as_str()),
                        );
                    }
                }
            }
            (false, "no recorded output matched".into())
        }
        Matcher::NonzeroExitWithPattern { pattern } => {
            let re = match Regex::new(pattern) {
                Ok(re) => re,
                Err(e) => return (false, format!("invalid regex: {e}")),
            };
            for (i, rec) in evidence.command_log.iter().enumerate() {
                if rec.exit_code == 0 {
                    continue;
                }
                for rel in [&rec.stdout, &rec.stderr].into_iter().flatten() {
                    if let Some(text) = read_lossy(&base.join(rel)) {
                        if let Some(hit) = re.find(&text) {
                            return (
                                true,
                                format!("command {i} exit {}: {}", rec.exit_code, hit.as_str()),
                            );
                        }
                    }
                }
            }
            (false, "no non-zero exit with matching output".into())
        }
        Matcher::TraceDiff { a, b, comparator } => {
            if !is_plain_relative(a) || !is_plain_relative(b) {
                return (
                    false,
                    "trace paths must be relative to the evidence dir".into(),
                );
            }
            let (Ok(ba), Ok(bb)) = (fs::read(base.join(a)), fs::read(base.join(b))) else {
                return (false, format!("trace `{a}` or `{b}` missing"));
            };
            match comparator {
                Comparator::ByteDiff => {
                    let differ = ba != bb;
                    (differ, format!("byte-diff: differ={differ}"))
                }
                Comparator::NumericThreshold { threshold } => {
                    let na = first_number(&String::from_utf8_lossy(&ba));
                    let nb = first_number(&String::from_utf8_lossy(&bb));
                    match (na, nb) {
                        (Some(x), Some(y)) => {
                            let delta = (x - y).abs();
                            (delta > *threshold, format!("|{x} - {y}| = {delta}"))
                        }
                        _ => (false, "trace holds no number".into()),
                    }
                }
            }
        }
    }
}

fn is_plain_relative(p: &str) -> bool {
    let path = Path::new(p);
    !path.is_absolute()
        && path
            .components()
            .all(|c| matches!(c, std::path::Component::Normal(_)))
}

fn first_number(text: &str) -> Option<f64> {
    static NUM: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = NUM.get_or_init(|| Regex::new(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?").unwrap());
    re.find(text).and_then(|m| m.as_str().parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CommandRecord, EnvFingerprint};

    fn bundle_with(dir: &Path, exit: i32, stderr: &str) -> EvidenceBundle {
        fs::write(dir.join("cmd-000.stderr"), stderr).unwrap();
        fs::write(dir.join("cmd-000.stdout"), "").unwrap();
        EvidenceBundle {
            dir: dir.to_path_buf(),
            traces: vec![],
            command_log: vec![CommandRecord {
                command: "./poc".into(),
                exit_code: exit,
                duration_ms: 1,
                timed_out: false,
                stdout: Some("cmd-000.stdout".into()),
                stderr: Some("cmd-000.stderr".into()),
            }],
            env_fingerprint: EnvFingerprint::default(),
        }
    }

    #[test]
    fn validate_rejects_empty_and_bad_regex() {
        let empty = SignalSpec {
            description: "x".into(),
            matchers: vec![],
            provenance: vec![],
        };
        assert_eq!(empty.validate(), Err(SignalError::NoMatchers));
        let bad = SignalSpec {
            description: "x".into(),
            matchers: vec![Matcher::StderrRegex {
                pattern: "(".into(),
            }],
            provenance: vec![],
        };
        assert!(matches!(
            bad.validate(),
            Err(SignalError::BadRegex { index: 0, .. })
        ));
    }

    #[test]
    fn stderr_and_exit_matchers() {
        let d = tempfile::tempdir().unwrap();
        let ev = bundle_with(
            d.path(),
            1,
            "==1==ERROR: AddressSanitizer: heap-buffer-overflow\n",
        );
        let spec = SignalSpec {
            description: "asan".into(),
            matchers: vec![
                Matcher::StderrRegex {
                    pattern: "ERROR: AddressSanitizer".into(),
                },
                Matcher::StdoutRegex {
                    pattern: "AddressSanitizer".into(),
                },
                Matcher::NonzeroExitWithPattern {
                    pattern: "heap-buffer-overflow".into(),
                },
            ],
            provenance: vec![],
        };
        let r = evaluate(&spec, &ev, d.path());
        assert!(r[0].satisfied);
        assert!(!r[1].satisfied);
        assert!(r[2].satisfied);

        let clean = bundle_with(d.path(), 0, "heap-buffer-overflow");
        let r = evaluate(&spec, &clean, d.path());
        assert!(!r[2].satisfied, "exit 0 never satisfies the exit matcher");
    }

    #[test]
    fn trace_diff_comparators() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("expected.txt"), "time: 10.0 ms").unwrap();
        fs::write(d.path().join("actual.txt"), "time: 250.5 ms").unwrap();
        let ev = bundle_with(d.path(), 0, "");
        let mk = |comparator| SignalSpec {
            description: "perf".into(),
            matchers: vec![Matcher::TraceDiff {
                a: "expected.txt".into(),
                b: "actual.txt".into(),
                comparator,
            }],
            provenance: vec![],
        };
        assert!(evaluate(&mk(Comparator::ByteDiff), &ev, d.path())[0].satisfied);
        assert!(
            evaluate(
                &mk(Comparator::NumericThreshold { threshold: 100.0 }),
                &ev,
                d.path()
            )[0]
            .satisfied
        );
        assert!(
            !evaluate(
                &mk(Comparator::NumericThreshold { threshold: 500.0 }),
                &ev,
                d.path()
            )[0]
            .satisfied
        );
        let escape = SignalSpec {
            description: "x".into(),
            matchers: vec![Matcher::TraceDiff {
                a: "../etc/passwd".into(),
                b: "actual.txt".into(),
                comparator: Comparator::ByteDiff,
            }],
            provenance: vec![],
        };
        assert!(!evaluate(&escape, &ev, d.path())[0].satisfied);
    }

    #[test]
    fn serde_shape_is_tagged() {
        let m = Matcher::TraceDiff {
            a: "a".into(),
            b: "b".into(),
            comparator: Comparator::NumericThreshold { threshold: 2.0 },
        };
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["kind"], "trace_diff");
        assert_eq!(v["comparator"]["mode"], "numeric_threshold");
    }
}
