//! Directory-backed knowledge base.
//!
//! Layout: `<root>/<scope>/<category>/<slug>.md`, where scope is a project
//! id or `_shared`. Each entry is markdown with a TOML front matter block
//! (`+++` fences) holding title, keywords, version, last update and the
//! full rating history. Superseded versions are kept under
//! `<category>/.archive/<slug>.v<N>.md`.
//!
//! Mutations take an exclusive advisory lock on `<root>/.kb.lock` and write
//! through a temporary file plus rename; reads take no lock.

mod entry;
mod lock;
mod snapshot;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use entry::{slugify, EntryRef, KnowledgeEntry, Rating, MAX_SCORE, MIN_SCORE};
pub use snapshot::{KbSnapshot, SnapshotItem, DEFAULT_SNAPSHOT_K};

use lock::KbLock;

pub const SHARED_SCOPE: &str = "_shared";
const LOCK_FILE: &str = ".kb.lock";
const ARCHIVE_DIR: &str = ".archive";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("kb i/o: {0}")]
    Io(#[from] io::Error),
    #[error("invalid category {0:?}")]
    InvalidCategory(String),
    #[error("invalid scope {0:?}")]
    InvalidScope(String),
    #[error("entry {0} already exists")]
    DuplicateSlug(String),
    #[error("entry {0} not found")]
    EntryNotFound(String),
    #[error("rating {0} outside [-10, 10]")]
    RatingOutOfRange(f64),
    #[error("title {0:?} yields an empty slug")]
    InvalidTitle(String),
    #[error("entry {entry}: {message}")]
    Parse { entry: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    CommandLineTools,
    BuildSystem,
    InternalTools,
    TestFrameworks,
    Code,
    PocFormat,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::CommandLineTools,
        Category::BuildSystem,
        Category::InternalTools,
        Category::TestFrameworks,
        Category::Code,
        Category::PocFormat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::CommandLineTools => "command-line-tools",
            Category::BuildSystem => "build-system",
            Category::InternalTools => "internal-tools",
            Category::TestFrameworks => "test-frameworks",
            Category::Code => "code",
            Category::PocFormat => "poc-format",
        }
    }

    /// Only command-line tool knowledge transfers between projects.
    pub fn is_shared(self) -> bool {
        self == Category::CommandLineTools
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| KbError::InvalidCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Shared,
    Project(String),
}

impl Scope {
    /// Scope an entry of `category` lands in when created for `project`.
    pub fn for_category(project: &str, category: Category) -> Scope {
        if category.is_shared() {
            Scope::Shared
        } else {
            Scope::Project(project.to_string())
        }
    }

    pub fn dir_name(&self) -> &str {
        match self {
            Scope::Shared => SHARED_SCOPE,
            Scope::Project(p) => p,
        }
    }

    pub fn from_dir_name(name: &str) -> Result<Self, KbError> {
        if name == SHARED_SCOPE {
            return Ok(Scope::Shared);
        }
        let valid = !name.is_empty()
            && !name.starts_with('.')
            && !name.starts_with('_')
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if valid {
            Ok(Scope::Project(name.to_string()))
        } else {
            Err(KbError::InvalidScope(name.to_string()))
        }
    }

    pub fn visible_to(&self, project: &str) -> bool {
        match self {
            Scope::Shared => true,
            Scope::Project(p) => p == project,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    pub entries: usize,
    pub ratings: usize,
    /// Mean over every stored rating.
    pub mean_rating: Option<f64>,
    /// Average change of per-version mean rating from one version to the
    /// next, over entries with ratings on both sides of an update.
    pub mean_delta_per_update: Option<f64>,
}

impl fmt::Display for KbStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entries: {}", self.entries)?;
        writeln!(f, "ratings: {}", self.ratings)?;
        match self.mean_rating {
            Some(m) => writeln!(f, "mean rating: {m:.3}")?,
            None => writeln!(f, "mean rating: unrated")?,
        }
        match self.mean_delta_per_update {
            Some(d) => writeln!(f, "mean rating delta per update: {d:+.3}"),
            None => writeln!(f, "mean rating delta per update: n/a"),
        }
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn write_atomic(path: &Path, text: &str) -> io::Result<()> {
    let dir = path.parent().expect("entry path has a parent");
    fs::create_dir_all(dir)?;
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{n}",
        path.file_name().unwrap().to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

fn check_score(score: f64) -> Result<(), KbError> {
    if score.is_finite() && (MIN_SCORE..=MAX_SCORE).contains(&score) {
        Ok(())
    } else {
        Err(KbError::RatingOutOfRange(score))
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    root: PathBuf,
}

impl KnowledgeBase {
    /// Creates the skeleton (root, shared scope, lock file) if missing.
    /// Existing entries are left untouched.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, KbError> {
        let root = root.into();
        fs::create_dir_all(root.join(SHARED_SCOPE))?;
        let lock = root.join(LOCK_FILE);
        if !lock.exists() {
            fs::write(&lock, "")?;
        }
        Ok(Self { root })
    }

    /// Opens an existing KB without touching the disk.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, KbError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(KbError::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("no knowledge base at {}", root.display()),
            )));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, r: &EntryRef) -> PathBuf {
        self.root.join(r.rel_path())
    }

    fn lock(&self) -> Result<KbLock, KbError> {
        Ok(KbLock::acquire(&self.root.join(LOCK_FILE))?)
    }

    pub fn load(&self, r: &EntryRef) -> Result<KnowledgeEntry, KbError> {
        let text = match fs::read_to_string(self.path_of(r)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(KbError::EntryNotFound(r.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        KnowledgeEntry::parse(r, &text)
    }

    pub fn exists(&self, r: &EntryRef) -> bool {
        self.path_of(r).is_file()
    }

    /// Every entry, ordered by reference.
    pub fn all_entries(&self) -> Result<Vec<KnowledgeEntry>, KbError> {
        let mut refs = Vec::new();
        for scope_dir in fs::read_dir(&self.root)? {
            let scope_dir = scope_dir?;
            if !scope_dir.file_type()?.is_dir() {
                continue;
            }
            let name = scope_dir.file_name().to_string_lossy().into_owned();
            let Ok(scope) = Scope::from_dir_name(&name) else {
                continue;
            };
            for category in Category::ALL {
                let dir = scope_dir.path().join(category.as_str());
                let Ok(files) = fs::read_dir(&dir) else {
                    continue;
                };
                for f in files {
                    let f = f?;
                    let fname = f.file_name().to_string_lossy().into_owned();
                    if fname.starts_with('.') || !f.file_type()?.is_file() {
                        continue;
                    }
                    if let Some(slug) = fname.strip_suffix(".md") {
                        refs.push(EntryRef::new(scope.clone(), category, slug));
                    }
                }
            }
        }
        refs.sort();
        refs.iter().map(|r| self.load(r)).collect()
    }

    /// Entries of the project's scope plus the shared scope.
    pub fn visible_entries(&self, project: &str) -> Result<Vec<KnowledgeEntry>, KbError> {
        Ok(self
            .all_entries()?
            .into_iter()
            .filter(|e| e.scope.visible_to(project))
            .collect())
    }

    /// Creates a version-1 entry. Command-line tool entries always land in
    /// the shared scope; other categories need a project scope.
    pub fn create_entry(
        &self,
        scope: &Scope,
        category: Category,
        title: &str,
        keywords: &[String],
        content: &str,
    ) -> Result<KnowledgeEntry, KbError> {
        let scope = match (scope, category.is_shared()) {
            (_, true) => Scope::Shared,
            (Scope::Shared, false) => return Err(KbError::InvalidScope(SHARED_SCOPE.into())),
            (s, false) => s.clone(),
        };
        let slug = slugify(title);
        if slug.is_empty() {
            return Err(KbError::InvalidTitle(title.to_string()));
        }
        let r = EntryRef::new(scope, category, slug);
        let _guard = self.lock()?;
        if self.exists(&r) {
            return Err(KbError::DuplicateSlug(r.to_string()));
        }
        let entry = KnowledgeEntry {
            scope: r.scope.clone(),
            category,
            slug: r.slug.clone(),
            title: title.trim().to_string(),
            keywords: keywords.to_vec(),
            content: content.to_string(),
            version: 1,
            updated_ms: crate::now_ms(),
            ratings: Vec::new(),
        };
        write_atomic(&self.path_of(&r), &entry.to_markdown())?;
        Ok(entry)
    }

    /// Replaces the content (and optionally keywords), bumping the version
    /// by one and archiving the previous file. Ratings are kept.
    pub fn update_entry(
        &self,
        r: &EntryRef,
        content: &str,
        keywords: Option<&[String]>,
    ) -> Result<KnowledgeEntry, KbError> {
        let _guard = self.lock()?;
        let mut entry = self.load(r)?;
        let archive = self
            .root
            .join(r.scope.dir_name())
            .join(r.category.as_str())
            .join(ARCHIVE_DIR)
            .join(format!("{}.v{}.md", r.slug, entry.version));
        write_atomic(&archive, &entry.to_markdown())?;
        entry.content = content.to_string();
        if let Some(k) = keywords {
            entry.keywords = k.to_vec();
        }
        entry.version += 1;
        entry.updated_ms = crate::now_ms().max(entry.updated_ms);
        write_atomic(&self.path_of(r), &entry.to_markdown())?;
        Ok(entry)
    }

    /// Appends a rating and returns the full history.
    pub fn rate_entry(
        &self,
        r: &EntryRef,
        score: f64,
        session_id: &str,
    ) -> Result<Vec<Rating>, KbError> {
        check_score(score)?;
        let _guard = self.lock()?;
        let mut entry = self.load(r)?;
        entry.ratings.push(Rating {
            score,
            session_id: session_id.to_string(),
            timestamp_ms: crate::now_ms(),
            version: entry.version,
        });
        write_atomic(&self.path_of(r), &entry.to_markdown())?;
        Ok(entry.ratings)
    }

    /// Prior versions of an entry, oldest first.
    pub fn archived_versions(&self, r: &EntryRef) -> Result<Vec<KnowledgeEntry>, KbError> {
        let dir = self
            .root
            .join(r.scope.dir_name())
            .join(r.category.as_str())
            .join(ARCHIVE_DIR);
        let mut out = Vec::new();
        let mut v = 1;
        loop {
            let path = dir.join(format!("{}.v{v}.md", r.slug));
            match fs::read_to_string(&path) {
                Ok(text) => out.push(KnowledgeEntry::parse(r, &text)?),
                Err(e) if e.kind() == io::ErrorKind::NotFound => break,
                Err(e) => return Err(e.into()),
            }
            v += 1;
        }
        Ok(out)
    }

    /// Entries visible to `project` whose title or keywords contain any
    /// term (case-insensitive), ranked by number of matching terms, then
    /// mean rating (unrated last), then reference.
    pub fn query(&self, project: &str, terms: &[&str]) -> Result<Vec<KnowledgeEntry>, KbError> {
        let terms: Vec<String> = terms
            .iter()
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        let mut scored: Vec<(usize, KnowledgeEntry)> = self
            .visible_entries(project)?
            .into_iter()
            .filter_map(|e| {
                let title = e.title.to_lowercase();
                let keywords: Vec<String> = e.keywords.iter().map(|k| k.to_lowercase()).collect();
                let hits = terms
                    .iter()
                    .filter(|t| {
                        title.contains(t.as_str())
                            || keywords.iter().any(|k| k.contains(t.as_str()))
                    })
                    .count();
                (hits > 0).then_some((hits, e))
            })
            .collect();
        scored.sort_by(|(ha, a), (hb, b)| {
            hb.cmp(ha)
                .then_with(|| snapshot::cmp_mean_desc(a.mean(), b.mean()))
                .then_with(|| a.entry_ref().cmp(&b.entry_ref()))
        });
        Ok(scored.into_iter().map(|(_, e)| e).collect())
    }

    pub fn snapshot(&self, project: &str, k: usize) -> Result<KbSnapshot, KbError> {
        KbSnapshot::build(self, project, k)
    }

    pub fn stats(&self) -> Result<KbStats, KbError> {
        let entries = self.all_entries()?;
        let ratings: Vec<f64> = entries
            .iter()
            .flat_map(|e| e.ratings.iter().map(|r| r.score))
            .collect();
        let mut deltas = Vec::new();
        for e in &entries {
            for v in 1..e.version {
                if let (Some(a), Some(b)) = (e.mean_at(v), e.mean_at(v + 1)) {
                    deltas.push(b - a);
                }
            }
        }
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        Ok(KbStats {
            entries: entries.len(),
            ratings: ratings.len(),
            mean_rating: mean(&ratings),
            mean_delta_per_update: mean(&deltas),
        })
    }
}
