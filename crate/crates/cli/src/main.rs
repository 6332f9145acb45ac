//! `vouch`: validate bug reports, inspect the knowledge base and replay
//! stored trajectories.
//!
//! Exit codes: 0 when every report reached a verdict (validated or a clean
//! rejection), 2 when a run aborted on infrastructure failure, 1 on usage
//! or configuration errors, 3 when `verify` finds a bundle that does not
//! hold up.

mod replay;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vouch_core::model::{load_report, recheck_bundle};
use vouch_core::pipeline::{RunOutcome, SCHEMA_HELP};
use vouch_core::{run_batch, run_pipeline, KnowledgeBase, PipelineConfig, Verdict};

const EXIT_USAGE: u8 = 1;
const EXIT_ABORTED: u8 = 2;
const EXIT_UNSOUND: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vouch",
    version,
    about = "Validate bug reports by re-executed proof of concept"
)]
struct Cli {
    /// Log verbosity; repeat for more detail. RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a single report.
    Run {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Print the run record as JSON instead of a summary line.
        #[arg(long)]
        json: bool,
    },
    /// Validate many reports; directories contribute their `*.md` files.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Inspect the knowledge base.
    Kb {
        #[command(flatten)]
        source: KbSource,
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Re-render a stored trajectory, or every trajectory of a bundle.
    Replay {
        path: PathBuf,
        /// Show the compact step index instead of full steps.
        #[arg(long, conflicts_with = "step")]
        index: bool,
        /// Show one step in full.
        #[arg(long)]
        step: Option<usize>,
        /// Mask PIDs, addresses, durations and these directories.
        #[arg(long = "mask", value_name = "DIR")]
        mask: Vec<PathBuf>,
    },
    /// Re-check a bundle mechanically from its files alone.
    Verify { bundle: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct KbSource {
    /// Knowledge base root.
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    /// Take the knowledge base root from a pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Top-k entries per category visible to a project.
    Snapshot {
        #[arg(long)]
        project: String,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
    /// Entries visible to a project matching any term.
    Query {
        #[arg(long)]
        project: String,
        #[arg(required = true)]
        terms: Vec<String>,
    },
    /// Entry and rating totals.
    Stats {
        #[arg(long)]
        json: bool,
    },
}

/// Failure that maps to the usage exit code and prints the config schema.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("\n{SCHEMA_HELP}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("\n{SCHEMA_HELP}");
            }
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            report,
            config,
            json,
        } => cmd_run(&report, &config, json),
        Command::Batch { config, reports } => cmd_batch(&config, &reports),
        Command::Kb { source, command } => cmd_kb(&source, command),
        Command::Replay {
            path,
            index,
            step,
            mask,
        } => {
            let view = match (index, step) {
                (true, _) => replay::View::Index,
                (false, Some(i)) => replay::View::Step(i),
                (false, None) => replay::View::Full,
            };
            print!("{}", replay::replay(&path, view, &mask)?);
            Ok(0)
        }
        Command::Verify { bundle } => cmd_verify(&bundle),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn cmd_run(report: &Path, config: &Path, json: bool) -> Result<u8> {
    let config = load_config(config)?;
    let report = load_report(report).map_err(|e| UsageError(e.to_string()))?;
    let run = run_pipeline(&report, &config);
    if json {
        println!("{}", serde_json::to_string_pretty(&run)?);
    } else {
        println!("{}: {}", run.report_id, describe(&run.outcome));
        if let Some(b) = &run.bundle {
            println!("bundle: {}", b.root.display());
        }
        if let Some(f) = &run.run_file {
            println!("run record: {}", f.display());
        }
    }
    Ok(if run.is_aborted() { EXIT_ABORTED } else { 0 })
}

fn describe(outcome: &RunOutcome) -> String {
    match outcome {
        RunOutcome::Verdict { verdict } => match verdict {
            Verdict::Validated { poc, .. } => {
                format!("validated (entrypoint `{}`)", poc.entrypoint.join(" "))
            }
            Verdict::Rejected { stage, reason } => format!("rejected at {stage}: {reason}"),
        },
        RunOutcome::Aborted { stage, error } => {
            format!("aborted during {}: {error}", stage.as_str())
        }
    }
}

/// Expands directories to their markdown files, sorted by name.
fn collect_reports(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "md"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_batch(config: &Path, inputs: &[PathBuf]) -> Result<u8> {
    let config = load_config(config)?;
    let paths = collect_reports(inputs)?;
    if paths.is_empty() {
        bail!(UsageError("no reports found".into()));
    }
    let (summary, _) = run_batch(&paths, &config);
    for e in &summary.entries {
        let id = e.report_id.as_deref().unwrap_or("-");
        let stage = e.stage.map(|s| format!(" ({s})")).unwrap_or_default();
        let detail = e
            .detail
            .as_deref()
            .map(|d| format!(": {d}"))
            .unwrap_or_default();
        println!("{id} {}{stage}{detail}", e.status);
    }
    print!("{}", summary.render());
    Ok(if summary.aborted > 0 { EXIT_ABORTED } else { 0 })
}

fn open_kb(source: &KbSource) -> Result<KnowledgeBase> {
    let root = match (&source.kb, &source.config) {
        (Some(root), _) => root.clone(),
        (None, Some(cfg)) => load_config(cfg)?.kb_root,
        (None, None) => bail!(UsageError("pass --kb or --config".into())),
    };
    KnowledgeBase::open(&root)
        .with_context(|| format!("opening knowledge base at {}", root.display()))
}

fn cmd_kb(source: &KbSource, command: KbCommand) -> Result<u8> {
    let kb = open_kb(source)?;
    match command {
        KbCommand::Snapshot { project, k } => {
            if k == 0 {
                bail!(UsageError("k must be positive".into()));
            }
            print!("{}", kb.snapshot(&project, k)?.render());
        }
        KbCommand::Query { project, terms } => {
            let terms: Vec<&str> = terms.iter().map(String::as_str).collect();
            let hits = kb.query(&project, &terms)?;
            for e in &hits {
                let mean = e
                    .mean()
                    .map_or("unrated".to_string(), |m| format!("{m:.2}"));
                println!("{}  v{}  {mean}  {}", e.entry_ref(), e.version, e.title);
            }
            println!("{} match(es)", hits.len());
        }
        KbCommand::Stats { json } => {
            let stats = kb.stats()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{stats}");
            }
        }
    }
    Ok(0)
}

fn cmd_verify(bundle: &Path) -> Result<u8> {
    let report =
        recheck_bundle(bundle).with_context(|| format!("reading bundle {}", bundle.display()))?;
    println!("kind: {:?}", report.kind);
    println!("checker commands: {}", report.checker_command_log_len);
    for m in &report.matcher_results {
        let mark = if m.satisfied { "fired" } else { "silent" };
        println!("matcher {}: {mark} ({})", m.index, m.detail);
    }
    if report.holds() {
        println!("holds");
        Ok(0)
    } else {
        println!("does not hold");
        Ok(EXIT_UNSOUND)
    }
}
