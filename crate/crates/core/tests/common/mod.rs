#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use vouch_core::model::load_report;
use vouch_core::runtime::Role;
use vouch_core::{BugReport, PipelineConfig};

pub const SENTINEL: &str = "SENTINEL-7f3a9c";

pub const SCENARIOS: &[&str] = &[
    "true-bug",
    "analyzer-reject",
    "analyzer-parse-failure",
    "hallucinate",
    "give-up",
    "no-exec",
    "internal-api",
    "update-knowledge",
    "always-feedback",
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn toyc() -> PathBuf {
    fixtures().join("toyc")
}

/// A self-contained run directory: config, KB, output root and one copy of
/// the scenario transcripts per report id.
pub struct Harness {
    pub dir: tempfile::TempDir,
    pub config: PipelineConfig,
    pub ids: Vec<String>,
}

impl Harness {
    /// `runs` pairs a report id with the scenario it replays.
    pub fn new(runs: &[(&str, &str)], parallelism: usize) -> Self {
        Self::with_extra(runs, parallelism, "")
    }

    pub fn with_extra(runs: &[(&str, &str)], parallelism: usize, extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("reports")).unwrap();
        for (id, scenario) in runs {
            let src = fixtures().join("scenarios").join(scenario);
            let dst = root.join("t").join(id);
            fs::create_dir_all(&dst).unwrap();
            for e in fs::read_dir(&src).unwrap() {
                let e = e.unwrap();
                let name = e.file_name().to_string_lossy().into_owned();
                if name.ends_with(".json") {
                    fs::copy(e.path(), dst.join(&name)).unwrap();
                }
            }
            let text = fs::read_to_string(src.join("report.md")).unwrap();
            let text = text.replacen(&format!("id: {scenario}\n"), &format!("id: {id}\n"), 1);
            fs::write(root.join("reports").join(format!("{id}.md")), text).unwrap();
        }
        let mut cfg = format!(
            "kb_root = \"kb\"\noutput_root = \"out\"\nscratch_root = \"scratch\"\nparallelism = {parallelism}\n{extra}\n[projects.toyc]\npristine = {:?}\n",
            toyc().display().to_string()
        );
        for role in Role::ALL {
            cfg.push_str(&format!(
                "[backends.{role}]\nkind = \"scripted\"\nlocation = \"t/{{report_id}}/{role}.json\"\n"
            ));
        }
        fs::create_dir_all(root.join("scratch")).unwrap();
        fs::write(root.join("config.toml"), cfg).unwrap();
        let config = PipelineConfig::load(&root.join("config.toml")).unwrap();
        Self {
            config,
            ids: runs.iter().map(|(id, _)| id.to_string()).collect(),
            dir,
        }
    }

    pub fn single(scenario: &str) -> Self {
        Self::new(&[(scenario, scenario)], 1)
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn config_path(&self) -> PathBuf {
        self.root().join("config.toml")
    }

    pub fn report_path(&self, id: &str) -> PathBuf {
        self.root().join("reports").join(format!("{id}.md"))
    }

    pub fn report(&self, id: &str) -> BugReport {
        load_report(&self.report_path(id)).unwrap()
    }

    pub fn report_paths(&self) -> Vec<PathBuf> {
        self.ids.iter().map(|id| self.report_path(id)).collect()
    }

    pub fn bundle(&self, id: &str) -> PathBuf {
        self.config.output_root.join(id)
    }

    pub fn kb_root(&self) -> &Path {
        &self.config.kb_root
    }
}

/// Session files stored in a bundle, by role suffix.
pub fn trajectory_files(bundle: &Path, role: &str) -> Vec<PathBuf> {
    let dir = bundle.join("trajectories");
    let Ok(rd) = fs::read_dir(&dir) else {
        return vec![];
    };
    let mut v: Vec<PathBuf> = rd
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.contains(&format!("-{role}"))
        })
        .collect();
    v.sort();
    v
}
