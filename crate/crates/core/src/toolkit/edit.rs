use std::fs::{self, OpenOptions};
use std::io::Write;

use super::confine::{confine, Access};
use super::{arg, opt_arg, ToolContext, ToolError, ToolOutput};
use crate::runtime::ToolCallRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditOp {
    View,
    Create {
        content: String,
    },
    /// Replaces the first occurrence of `old`.
    Replace {
        old: String,
        new: String,
    },
    Append {
        content: String,
    },
}

impl EditOp {
    pub(crate) fn from_args(call: &ToolCallRequest) -> Result<Self, ToolError> {
        let content = || opt_arg(call, "content").unwrap_or("").to_string();
        match arg(call, "op")? {
            "view" => Ok(EditOp::View),
            "create" => Ok(EditOp::Create { content: content() }),
            "append" => Ok(EditOp::Append { content: content() }),
            "replace" => Ok(EditOp::Replace {
                old: arg(call, "old")?.to_string(),
                new: content(),
            }),
            other => Err(ToolError::InvalidArgument {
                name: "op",
                message: format!("unknown op {other:?}"),
            }),
        }
    }

    fn writes(&self) -> bool {
        !matches!(self, EditOp::View)
    }
}

/// Applies `op` to `path`. `view` may read under the KB root too and lists
/// directories; every other op writes under the workspace only.
pub fn edit_file(ctx: &ToolContext, path: &str, op: &EditOp) -> Result<ToolOutput, ToolError> {
    if op.writes() && ctx.read_only {
        return Err(ToolError::ReadOnly);
    }
    let access = if op.writes() {
        Access::Write
    } else {
        Access::Read
    };
    let target = confine(path, &ctx.read_roots(), access)?;
    match op {
        EditOp::View => {
            if target.is_dir() {
                let mut names: Vec<String> = fs::read_dir(&target)?
                    .filter_map(Result::ok)
                    .map(|e| {
                        let mut n = e.file_name().to_string_lossy().into_owned();
                        if e.path().is_dir() {
                            n.push('/');
                        }
                        n
                    })
                    .collect();
                names.sort();
                Ok(ToolOutput::text(names.join("\n")))
            } else {
                let bytes = fs::read(&target)?;
                Ok(ToolOutput::text(
                    String::from_utf8_lossy(&bytes).into_owned(),
                ))
            }
        }
        EditOp::Create { content } => {
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&target, content)?;
            Ok(ToolOutput::text(format!(
                "created {path} ({} bytes)",
                content.len()
            )))
        }
        EditOp::Replace { old, new } => {
            let text = fs::read_to_string(&target)?;
            if old.is_empty() || !text.contains(old.as_str()) {
                return Err(ToolError::TargetNotFound(path.to_string()));
            }
            fs::write(&target, text.replacen(old.as_str(), new, 1))?;
            Ok(ToolOutput::text(format!("replaced text in {path}")))
        }
        EditOp::Append { content } => {
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(&target)?;
            f.write_all(content.as_bytes())?;
            Ok(ToolOutput::text(format!(
                "appended {} bytes to {path}",
                content.len()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> (tempfile::TempDir, ToolContext) {
        let ws = tempfile::tempdir().unwrap();
        let c = ToolContext::new(ws.path());
        (ws, c)
    }

    #[test]
    fn create_is_byte_identical() {
        let (ws, c) = ctx();
        let body = "int main(void) { return 0; }\n\u{00e9}";
        edit_file(
            &c,
            "poc/main.c",
            &EditOp::Create {
                content: body.into(),
            },
        )
        .unwrap();
        assert_eq!(
            fs::read(ws.path().join("poc/main.c")).unwrap(),
            body.as_bytes()
        );
    }

    #[test]
    fn escape_rejected() {
        let (_ws, c) = ctx();
        let r = edit_file(
            &c,
            "../../etc/x",
            &EditOp::Create {
                content: String::new(),
            },
        );
        assert!(matches!(r, Err(ToolError::PathEscapesWorkspace(_))));
    }

    #[test]
    fn replace_and_append() {
        let (ws, c) = ctx();
        fs::write(ws.path().join("f"), "a b a").unwrap();
        edit_file(
            &c,
            "f",
            &EditOp::Replace {
                old: "a".into(),
                new: "x".into(),
            },
        )
        .unwrap();
        edit_file(
            &c,
            "f",
            &EditOp::Append {
                content: "!".into(),
            },
        )
        .unwrap();
        assert_eq!(fs::read_to_string(ws.path().join("f")).unwrap(), "x b a!");
        let r = edit_file(
            &c,
            "f",
            &EditOp::Replace {
                old: "zzz".into(),
                new: "y".into(),
            },
        );
        assert!(matches!(r, Err(ToolError::TargetNotFound(_))));
    }

    #[test]
    fn read_only_mode_allows_view_only() {
        let (ws, mut c) = ctx();
        fs::write(ws.path().join("f"), "data").unwrap();
        c.read_only = true;
        assert_eq!(edit_file(&c, "f", &EditOp::View).unwrap().stdout, "data");
        assert!(matches!(
            edit_file(
                &c,
                "g",
                &EditOp::Create {
                    content: "x".into()
                }
            ),
            Err(ToolError::ReadOnly)
        ));
        assert!(!ws.path().join("g").exists());
    }

    #[test]
    fn view_lists_directories() {
        let (ws, c) = ctx();
        fs::create_dir(ws.path().join("sub")).unwrap();
        fs::write(ws.path().join("a.txt"), "").unwrap();
        assert_eq!(
            edit_file(&c, ".", &EditOp::View).unwrap().stdout,
            "a.txt\nsub/"
        );
    }
}
