//! Workspace provisioning: tree copies and content hashes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

/// Recursively copies `src` into `dst`, preserving symlinks as symlinks and
/// file permissions. `dst` is created if missing; existing files are
/// overwritten.
pub fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in WalkDir::new(src).min_depth(1).follow_links(false) {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry.path().strip_prefix(src).map_err(io::Error::other)?;
        let target = dst.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&target)?;
        } else if ft.is_symlink() {
            let link = fs::read_link(entry.path())?;
            if target.symlink_metadata().is_ok() {
                fs::remove_file(&target)?;
            }
            std::os::unix::fs::symlink(link, &target)?;
        } else {
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Relative paths of every regular file and symlink under `root`, sorted.
pub fn list_files(root: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    for entry in WalkDir::new(root).min_depth(1).follow_links(false) {
        let entry = entry.map_err(io::Error::other)?;
        if entry.file_type().is_dir() {
            continue;
        }
        out.push(
            entry
                .path()
                .strip_prefix(root)
                .map_err(io::Error::other)?
                .to_path_buf(),
        );
    }
    out.sort();
    Ok(out)
}

/// Content hash of a directory tree: sha256 over sorted (relative path,
/// kind, content) triples. Directories contribute only through the files
/// they contain, so an empty directory does not change the hash.
pub fn tree_hash(root: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    for rel in list_files(root)? {
        let full = root.join(&rel);
        let meta = fs::symlink_metadata(&full)?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        if meta.file_type().is_symlink() {
            hasher.update(b"L");
            hasher.update(fs::read_link(&full)?.to_string_lossy().as_bytes());
        } else {
            hasher.update(b"F");
            hasher.update(fs::read(&full)?);
        }
        hasher.update([0u8]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of a byte slice, hex encoded.
pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
