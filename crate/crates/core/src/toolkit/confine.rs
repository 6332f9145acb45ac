use std::io;
use std::path::{Component, Path, PathBuf};

use super::ToolError;

const MAX_LINK_DEPTH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

/// Resolves `path` like `realpath -m`: every existing symlink along the way
/// is followed, missing components are appended lexically.
fn resolve(path: &Path, depth: usize) -> io::Result<PathBuf> {
    if depth > MAX_LINK_DEPTH {
        return Err(io::Error::other("too many levels of symbolic links"));
    }
    let mut cur = PathBuf::from("/");
    let mut missing = false;
    for comp in path.components() {
        match comp {
            Component::Prefix(_) | Component::RootDir => cur = PathBuf::from("/"),
            Component::CurDir => {}
            Component::ParentDir => {
                cur.pop();
            }
            Component::Normal(name) => {
                let next = cur.join(name);
                if missing {
                    cur = next;
                    continue;
                }
                match std::fs::symlink_metadata(&next) {
                    Ok(m) if m.file_type().is_symlink() => {
                        let target = std::fs::read_link(&next)?;
                        cur = resolve(&cur.join(target), depth + 1)?;
                    }
                    Ok(_) => cur = next,
                    Err(e) if e.kind() == io::ErrorKind::NotFound => {
                        missing = true;
                        cur = next;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(cur)
}

/// Resolves a tool path argument against `roots[0]` and checks that the
/// result lies under an allowed root: the first root for writes, any root
/// for reads. Absolute paths are accepted only if they resolve inside.
pub fn confine(path: &str, roots: &[&Path], access: Access) -> Result<PathBuf, ToolError> {
    let escape = || ToolError::PathEscapesWorkspace(path.to_string());
    let Some(first) = roots.first() else {
        return Err(escape());
    };
    if path.contains('\0') {
        return Err(escape());
    }
    let base = first.canonicalize()?;
    let joined = base.join(path);
    let resolved = resolve(&joined, 0).map_err(|_| escape())?;
    let allowed: &[&Path] = match access {
        Access::Write => &roots[..1],
        Access::Read => roots,
    };
    for root in allowed {
        let Ok(root) = root.canonicalize() else {
            continue;
        };
        if resolved.starts_with(&root) {
            return Ok(resolved);
        }
    }
    Err(escape())
}
