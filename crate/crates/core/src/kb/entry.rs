use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Category, KbError, Scope};

pub const MIN_SCORE: f64 = -10.0;
pub const MAX_SCORE: f64 = 10.0;

const FENCE: &str = "+++";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub score: f64,
    pub session_id: String,
    pub timestamp_ms: u64,
    /// Entry version the rating was given against.
    pub version: u32,
}

/// `scope/category/slug`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntryRef {
    pub scope: Scope,
    pub category: Category,
    pub slug: String,
}

impl EntryRef {
    pub fn new(scope: Scope, category: Category, slug: impl Into<String>) -> Self {
        Self {
            scope,
            category,
            slug: slug.into(),
        }
    }

    /// Path relative to the KB root.
    pub fn rel_path(&self) -> String {
        format!(
            "{}/{}/{}.md",
            self.scope.dir_name(),
            self.category,
            self.slug
        )
    }
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.scope.dir_name(),
            self.category,
            self.slug
        )
    }
}

impl FromStr for EntryRef {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_end_matches(".md");
        let parts: Vec<&str> = s.split('/').collect();
        let [scope, category, slug] = parts[..] else {
            return Err(KbError::EntryNotFound(s.to_string()));
        };
        if slug.is_empty() || slugify(slug) != slug {
            return Err(KbError::EntryNotFound(s.to_string()));
        }
        Ok(Self {
            scope: Scope::from_dir_name(scope)?,
            category: category.parse()?,
            slug: slug.to_string(),
        })
    }
}

impl TryFrom<String> for EntryRef {
    type Error = KbError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EntryRef> for String {
    fn from(r: EntryRef) -> Self {
        r.to_string()
    }
}

/// Lowercase ASCII alphanumeric runs joined by single dashes.
pub fn slugify(title: &str) -> String {
    let mut out = String::new();
    for word in title
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push('-');
        }
        out.push_str(&word.to_ascii_lowercase());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeEntry {
    pub scope: Scope,
    pub category: Category,
    pub slug: String,
    pub title: String,
    pub keywords: Vec<String>,
    pub content: String,
    pub version: u32,
    pub updated_ms: u64,
    pub ratings: Vec<Rating>,
}

#[derive(Serialize, Deserialize)]
struct FrontMatter {
    title: String,
    keywords: Vec<String>,
    version: u32,
    updated_ms: u64,
    #[serde(default)]
    ratings: Vec<Rating>,
}

impl KnowledgeEntry {
    pub fn entry_ref(&self) -> EntryRef {
        EntryRef::new(self.scope.clone(), self.category, self.slug.clone())
    }

    /// Arithmetic mean of the full history; `None` when unrated.
    pub fn mean(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            None
        } else {
            Some(self.ratings.iter().map(|r| r.score).sum::<f64>() / self.ratings.len() as f64)
        }
    }

    /// Mean of the ratings given against `version`.
    pub fn mean_at(&self, version: u32) -> Option<f64> {
        let scores: Vec<f64> = self
            .ratings
            .iter()
            .filter(|r| r.version == version)
            .map(|r| r.score)
            .collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    pub fn to_markdown(&self) -> String {
        let fm = FrontMatter {
            title: self.title.clone(),
            keywords: self.keywords.clone(),
            version: self.version,
            updated_ms: self.updated_ms,
            ratings: self.ratings.clone(),
        };
        let header = toml::to_string(&fm).expect("front matter serializes");
        format!("{FENCE}\n{header}{FENCE}\n{}", self.content)
    }

    pub fn parse(r: &EntryRef, text: &str) -> Result<Self, KbError> {
        let bad = |msg: &str| KbError::Parse {
            entry: r.to_string(),
            message: msg.to_string(),
        };
        let rest = text
            .strip_prefix(FENCE)
            .and_then(|t| t.strip_prefix('\n'))
            .ok_or_else(|| bad("missing front matter"))?;
        let end = rest
            .find(&format!("\n{FENCE}\n"))
            .ok_or_else(|| bad("unterminated front matter"))?;
        let fm: FrontMatter = toml::from_str(&rest[..end + 1]).map_err(|e| bad(&e.to_string()))?;
        Ok(Self {
            scope: r.scope.clone(),
            category: r.category,
            slug: r.slug.clone(),
            title: fm.title,
            keywords: fm.keywords,
            content: rest[end + FENCE.len() + 2..].to_string(),
            version: fm.version,
            updated_ms: fm.updated_ms,
            ratings: fm.ratings,
        })
    }
}
