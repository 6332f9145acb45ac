//! Pipeline configuration: one TOML document. Relative paths resolve
//! against the directory holding the file.
//!
//! ```toml
//! kb_root = "kb"
//! output_root = "out"
//! parallelism = 2
//! network = "disabled"
//!
//! [projects.toyc]
//! pristine = "targets/toyc"
//! setup_notes = "targets/toyc.notes.md"
//!
//! [backends.analyzer]
//! kind = "scripted"
//! location = "transcripts/{report_id}/analyzer.json"
//!
//! [limits]
//! max_turns = 60
//!
//! [stages.generator]
//! max_turns = 120
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::DEFAULT_SNAPSHOT_K;
use crate::runtime::{
    BackendRef, Role, DEFAULT_MAX_TURNS, DEFAULT_OUTPUT_LIMIT, DEFAULT_TOOL_TIMEOUT,
};
use crate::stages::evolution::DEFAULT_MAX_RETRIES;
use crate::stages::Limits;
use crate::toolkit::{NetworkPolicy, NETWORK_ENV};

pub const TOOL_TIMEOUT_ENV: &str = "VOUCH_TOOL_TIMEOUT_SECS";
pub const MAX_PARALLELISM: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
}

/// Accepted keys, shown with usage errors.
pub const SCHEMA_HELP: &str = "\
config keys:
  kb_root = <dir>                     knowledge base root, created if missing
  output_root = <dir>                 bundles are written to <output_root>/<report id>/
  scratch_root = <dir>                optional, per-run workspaces (default: system temp)
  keep_scratch = <bool>               optional, keep per-run workspaces (default false)
  parallelism = <int>                 1..=64 reports in flight (default 1)
  network = \"disabled\"|\"enabled\"     tool network policy (env VOUCH_NETWORK overrides)
  templates_dir = <dir>               optional prompt template overrides
  [projects.<id>]
    pristine = <dir>                  pristine source tree with its build
    image = <label>                   optional environment label (default \"local\")
    setup_notes = <file>              optional notes handed to analyzer and generator
  [backends.<analyzer|generator|checker|extractor|filter>]
    kind = \"scripted\"|\"http-chat\"
    location = <transcript path or endpoint>, {report_id} is substituted
    model = <name>                    http-chat only
    api_key_env = <var>               http-chat only (default VOUCH_API_KEY)
  [limits]
    max_turns = 60                    per session phase
    tool_timeout_secs = 300           per tool call (env VOUCH_TOOL_TIMEOUT_SECS overrides)
    output_limit = 65536              bytes of tool output shown to the model
    snapshot_k = 3                    KB entries per category in the snapshot
    max_retries = 2                   extractor revisions per knowledge candidate
  [stages.<role>]                     optional per-role max_turns, tool_timeout_secs, output_limit
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub pristine: PathBuf,
    #[serde(default = "default_image")]
    pub image: String,
    #[serde(default)]
    pub setup_notes: Option<PathBuf>,
}

fn default_image() -> String {
    "local".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    #[serde(default = "d_turns")]
    pub max_turns: usize,
    #[serde(default = "d_timeout")]
    pub tool_timeout_secs: u64,
    #[serde(default = "d_output")]
    pub output_limit: usize,
    #[serde(default = "d_k")]
    pub snapshot_k: usize,
    #[serde(default = "d_retries")]
    pub max_retries: usize,
}

fn d_turns() -> usize {
    DEFAULT_MAX_TURNS
}
fn d_timeout() -> u64 {
    DEFAULT_TOOL_TIMEOUT.as_secs()
}
fn d_output() -> usize {
    DEFAULT_OUTPUT_LIMIT
}
fn d_k() -> usize {
    DEFAULT_SNAPSHOT_K
}
fn d_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            max_turns: d_turns(),
            tool_timeout_secs: d_timeout(),
            output_limit: d_output(),
            snapshot_k: d_k(),
            max_retries: d_retries(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOverride {
    pub max_turns: Option<usize>,
    pub tool_timeout_secs: Option<u64>,
    pub output_limit: Option<usize>,
}

fn d_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub kb_root: PathBuf,
    pub output_root: PathBuf,
    #[serde(default)]
    pub scratch_root: Option<PathBuf>,
    #[serde(default)]
    pub keep_scratch: bool,
    #[serde(default = "d_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub network: NetworkPolicy,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    pub projects: BTreeMap<String, ProjectConfig>,
    pub backends: BTreeMap<Role, BackendRef>,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub stages: BTreeMap<Role, StageOverride>,
    /// Directory relative paths were resolved against; scripted transcript
    /// locations resolve against it too.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Reads, resolves, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and resolves paths against `base` without validation.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        let base = base.canonicalize().map_err(|e| {
            ConfigError::Invalid(format!("config directory {}: {e}", base.display()))
        })?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut cfg.kb_root);
        abs(&mut cfg.output_root);
        cfg.scratch_root.as_mut().map(abs);
        cfg.templates_dir.as_mut().map(abs);
        for p in cfg.projects.values_mut() {
            abs(&mut p.pristine);
            p.setup_notes.as_mut().map(abs);
        }
        cfg.base_dir = base;
        Ok(cfg)
    }

    /// Applies `VOUCH_NETWORK` and `VOUCH_TOOL_TIMEOUT_SECS`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var(NETWORK_ENV) {
            self.network = v
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{NETWORK_ENV}: {e}")))?;
        }
        if let Some(v) = var(TOOL_TIMEOUT_ENV) {
            self.limits.tool_timeout_secs = v.trim().parse().map_err(|_| {
                ConfigError::Invalid(format!(
                    "{TOOL_TIMEOUT_ENV} must be whole seconds, got {v:?}"
                ))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.parallelism == 0 || self.parallelism > MAX_PARALLELISM {
            return bad(format!(
                "parallelism must be in 1..={MAX_PARALLELISM}, got {}",
                self.parallelism
            ));
        }
        if self.projects.is_empty() {
            return bad("no projects configured".into());
        }
        for (id, p) in &self.projects {
            if !p.pristine.is_dir() {
                return bad(format!(
                    "project {id}: pristine tree {} is not a directory",
                    p.pristine.display()
                ));
            }
            if let Some(n) = &p.setup_notes {
                if !n.is_file() {
                    return bad(format!(
                        "project {id}: setup notes {} not found",
                        n.display()
                    ));
                }
            }
        }
        if let Some(t) = &self.templates_dir {
            if !t.is_dir() {
                return bad(format!("templates_dir {} is not a directory", t.display()));
            }
        }
        if let Some(s) = &self.scratch_root {
            if !s.is_dir() {
                return bad(format!("scratch_root {} is not a directory", s.display()));
            }
        }
        for role in Role::ALL {
            if !self.backends.contains_key(&role) {
                return bad(format!("no backend configured for role {role}"));
            }
        }
        let l = &self.limits;
        if l.max_turns == 0 || l.tool_timeout_secs == 0 || l.output_limit == 0 || l.snapshot_k == 0
        {
            return bad("limits must be positive".into());
        }
        for (role, o) in &self.stages {
            if o.max_turns == Some(0) || o.tool_timeout_secs == Some(0) || o.output_limit == Some(0)
            {
                return bad(format!("stage override for {role} must be positive"));
            }
        }
        Ok(())
    }

    /// Limits of one role after its override.
    pub fn limits_for(&self, role: Role) -> Limits {
        let o = self.stages.get(&role).copied().unwrap_or_default();
        Limits {
            max_turns: o.max_turns.unwrap_or(self.limits.max_turns),
            tool_timeout: Duration::from_secs(
                o.tool_timeout_secs.unwrap_or(self.limits.tool_timeout_secs),
            ),
            output_limit: o.output_limit.unwrap_or(self.limits.output_limit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(dir: &Path) -> String {
        fs::create_dir_all(dir.join("src")).unwrap();
        let mut s = String::from(
            "kb_root = \"kb\"\noutput_root = \"out\"\n[projects.p]\npristine = \"src\"\n",
        );
        for r in Role::ALL {
            s.push_str(&format!(
                "[backends.{r}]\nkind = \"scripted\"\nlocation = \"t/{{report_id}}/{r}.json\"\n"
            ));
        }
        s
    }

    #[test]
    fn defaults_and_resolution() {
        let d = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::parse(&minimal(d.path()), d.path()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.parallelism, 1);
        assert_eq!(cfg.limits, LimitsConfig::default());
        assert_eq!(cfg.network, NetworkPolicy::Disabled);
        assert!(cfg.kb_root.is_absolute());
        assert!(cfg.projects["p"].pristine.is_dir());
    }

    #[test]
    fn overrides_and_env() {
        let d = tempfile::tempdir().unwrap();
        let text =
            minimal(d.path()) + "[limits]\nmax_turns = 9\n[stages.generator]\nmax_turns = 30\n";
        let mut cfg = PipelineConfig::parse(&text, d.path()).unwrap();
        cfg.apply_env(|k| match k {
            "VOUCH_NETWORK" => Some("enabled".into()),
            "VOUCH_TOOL_TIMEOUT_SECS" => Some("7".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.network, NetworkPolicy::Enabled);
        assert_eq!(cfg.limits_for(Role::Generator).max_turns, 30);
        assert_eq!(cfg.limits_for(Role::Checker).max_turns, 9);
        assert_eq!(
            cfg.limits_for(Role::Checker).tool_timeout,
            Duration::from_secs(7)
        );
        assert!(cfg.apply_env(|_| Some("x".into())).is_err());
    }

    #[test]
    fn validation_failures() {
        let d = tempfile::tempdir().unwrap();
        let ok = minimal(d.path());
        let zero = ok.clone().replace(
            "output_root = \"out\"\n",
            "output_root = \"out\"\nparallelism = 0\n",
        );
        assert!(PipelineConfig::parse(&zero, d.path())
            .unwrap()
            .validate()
            .is_err());
        let missing = ok.replace("pristine = \"src\"", "pristine = \"nope\"");
        assert!(PipelineConfig::parse(&missing, d.path())
            .unwrap()
            .validate()
            .is_err());
        let no_filter = ok.replace("[backends.filter]", "[backends.unused]");
        assert!(PipelineConfig::parse(&no_filter, d.path()).is_err());
        assert!(PipelineConfig::parse(&format!("bogus = 1\n{ok}"), d.path()).is_err());
    }
}
