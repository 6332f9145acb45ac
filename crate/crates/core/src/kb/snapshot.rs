use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Category, EntryRef, KbError, KnowledgeBase, KnowledgeEntry};

pub const DEFAULT_SNAPSHOT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotItem {
    pub entry: EntryRef,
    pub title: String,
    pub keywords: Vec<String>,
    pub mean: Option<f64>,
    pub rating_count: usize,
    /// Relative to the KB root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbSnapshot {
    pub project: String,
    pub k: usize,
    pub root: String,
    /// One list per category, in taxonomy order.
    pub categories: Vec<(Category, Vec<SnapshotItem>)>,
}

/// Rated entries first by mean descending; unrated entries last.
pub(crate) fn cmp_mean_desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Snapshot order: mean descending (unrated last), then most recently
/// updated, then slug.
pub(crate) fn rank(a: &KnowledgeEntry, b: &KnowledgeEntry) -> Ordering {
    cmp_mean_desc(a.mean(), b.mean())
        .then_with(|| b.updated_ms.cmp(&a.updated_ms))
        .then_with(|| a.slug.cmp(&b.slug))
}

impl KbSnapshot {
    pub(crate) fn build(kb: &KnowledgeBase, project: &str, k: usize) -> Result<Self, KbError> {
        let entries = kb.visible_entries(project)?;
        let categories = Category::ALL
            .into_iter()
            .map(|cat| {
                let mut in_cat: Vec<&KnowledgeEntry> =
                    entries.iter().filter(|e| e.category == cat).collect();
                in_cat.sort_by(|a, b| rank(a, b));
                let items = in_cat
                    .into_iter()
                    .take(k)
                    .map(|e| SnapshotItem {
                        entry: e.entry_ref(),
                        title: e.title.clone(),
                        keywords: e.keywords.clone(),
                        mean: e.mean(),
                        rating_count: e.ratings.len(),
                        path: e.entry_ref().rel_path(),
                    })
                    .collect();
                (cat, items)
            })
            .collect();
        Ok(Self {
            project: project.to_string(),
            k,
            root: kb.root().display().to_string(),
            categories,
        })
    }

    pub fn items(&self, category: Category) -> &[SnapshotItem] {
        self.categories
            .iter()
            .find(|(c, _)| *c == category)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.categories.iter().all(|(_, v)| v.is_empty())
    }

    /// Text block embedded in the generator prompt.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Knowledge base for project `{}` (top {} per category), rooted at {}",
            self.project, self.k, self.root
        );
        out.push_str(
            "Only the highest-rated entries are listed. Explore and search the category \
             directories under the root for the full content of these and other entries. \
             Rate every entry you actually used in your final report.\n",
        );
        for (cat, items) in &self.categories {
            let _ = writeln!(out, "\n### {cat}");
            if items.is_empty() {
                out.push_str("(no entries)\n");
            }
            for it in items {
                let mean = match it.mean {
                    Some(m) => format!("mean {m:.2} over {} ratings", it.rating_count),
                    None => "unrated".to_string(),
                };
                let _ = writeln!(
                    out,
                    "- {} [{}] ({mean}) entry: {} path: {}",
                    it.title,
                    it.keywords.join(", "),
                    it.entry,
                    it.path
                );
            }
        }
        out
    }
}
