//! Hot paths: KB snapshot ranking, trajectory indexing, signal evaluation
//! and workspace hashing.

use std::fs;
use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vouch_core::model::{CommandRecord, EnvFingerprint, EvidenceBundle};
use vouch_core::runtime::render_index;
use vouch_core::workspace::tree_hash;
use vouch_core::{signal, Category, KnowledgeBase, Matcher, Scope, SignalSpec, Step, Trajectory};

fn seeded_kb(root: &Path, n: usize) -> KnowledgeBase {
    let kb = KnowledgeBase::init(root).unwrap();
    for i in 0..n {
        let cat = Category::ALL[i % Category::ALL.len()];
        let project = ["alpha", "beta"][i % 2];
        let e = kb
            .create_entry(
                &Scope::for_category(project, cat),
                cat,
                &format!("entry {i}"),
                &[format!("k{}", i % 11)],
                "body",
            )
            .unwrap()
            .entry_ref();
        for r in 0..i % 4 {
            kb.rate_entry(&e, ((i * 7 + r) % 21) as f64 - 10.0, "bench")
                .unwrap();
        }
    }
    kb
}

fn kb_snapshot(c: &mut Criterion) {
    let mut g = c.benchmark_group("kb_snapshot");
    for n in [50, 200] {
        let dir = tempfile::tempdir().unwrap();
        let kb = seeded_kb(&dir.path().join("kb"), n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &kb, |b, kb| {
            b.iter(|| black_box(kb.snapshot("alpha", 3).unwrap()))
        });
    }
    g.finish();
}

fn trajectory(steps: usize) -> Trajectory {
    let mut t = Trajectory::new("bench", "generator");
    t.push(Step::PhasePrompt {
        text: "# Phase 1\n".repeat(20),
    });
    for i in 0..steps {
        t.push(Step::Thinking {
            text: format!("step {i}: consider the build\n{}", "x".repeat(200)),
        });
        t.push(Step::ToolCall {
            tool: "bash".into(),
            args: [("cmd".to_string(), format!("make -j{i}"))].into(),
        });
        t.push(Step::ToolResult {
            output: "cc -o build/table src/table.c\n".repeat(50),
            exit_code: 0,
            truncated: false,
        });
    }
    t
}

fn index(c: &mut Criterion) {
    let mut g = c.benchmark_group("render_index");
    for n in [10, 200] {
        let t = trajectory(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| {
            b.iter(|| black_box(render_index(t).to_string()))
        });
    }
    g.finish();
}

fn evaluate(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut log = vec![];
    for i in 0..20 {
        let err = format!("cmd-{i}.stderr");
        let body = if i == 19 {
            "==1==ERROR: AddressSanitizer: heap-buffer-overflow\nREAD of size 4\n"
        } else {
            ""
        };
        fs::write(
            dir.path().join(&err),
            format!("{}{body}", "noise line\n".repeat(500)),
        )
        .unwrap();
        log.push(CommandRecord {
            command: format!("./run.sh {i}"),
            exit_code: (i == 19) as i32,
            duration_ms: 1,
            timed_out: false,
            stdout: None,
            stderr: Some(err),
        });
    }
    let evidence = EvidenceBundle::scan(dir.path(), log, EnvFingerprint::default()).unwrap();
    let spec = SignalSpec {
        description: "sanitizer overflow".into(),
        matchers: vec![
            Matcher::StderrRegex {
                pattern: "AddressSanitizer: heap-buffer-overflow".into(),
            },
            Matcher::NonzeroExitWithPattern {
                pattern: r"READ of size \d+".into(),
            },
        ],
        provenance: vec![],
    };
    c.bench_function("signal_evaluate", |b| {
        b.iter(|| black_box(signal::evaluate(&spec, &evidence, dir.path())))
    });
}

fn hashing(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    for d in 0..10 {
        let sub = dir.path().join(format!("d{d}"));
        fs::create_dir_all(&sub).unwrap();
        for f in 0..20 {
            fs::write(sub.join(format!("f{f}.c")), "int x;\n".repeat(200)).unwrap();
        }
    }
    c.bench_function("tree_hash_200_files", |b| {
        b.iter(|| black_box(tree_hash(dir.path()).unwrap()))
    });
}

criterion_group!(benches, kb_snapshot, index, evaluate, hashing);
criterion_main!(benches);
