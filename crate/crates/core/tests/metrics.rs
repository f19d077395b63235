mod common;

use std::fs::File;
use std::io::Read;

use flate2::read::GzDecoder;
use onx::pipeline::{PipelineOptions, RunOutcome, Target};
use onx::store::{compare_sessions, export_session, MetricsReport};

use common::{
    annotate, bibtex_records, bibtex_workspace, map_production_code, open, python_comment_lines,
    replay, run_auto, strip_comments, write_fixture,
};

fn run_variant(edit: fn(&str) -> String) -> (tempfile::TempDir, MetricsReport) {
    let fixtures = tempfile::tempdir().unwrap();
    let dir = write_fixture(fixtures.path(), "v", &map_production_code(&bibtex_records(), edit));
    let ws = bibtex_workspace();
    assert_eq!(run_auto(ws.path(), replay(&dir), Target::Done), RunOutcome::Done);
    let metrics = open(ws.path(), PipelineOptions::default()).metrics();
    (ws, metrics)
}

const PRODUCTION: [&str; 4] = [
    "bib/entry.py",
    "bib/bibtex_parser.py",
    "storage/entry_store.py",
    "main.py",
];

#[test]
fn comment_density_orders_sparse_below_heavy() {
    let (sparse_ws, sparse) = run_variant(strip_comments);
    let (heavy_ws, heavy) = run_variant(annotate);
    for path in PRODUCTION {
        let s = &sparse.files[path];
        let h = &heavy.files[path];
        assert!(s.comment_density < h.comment_density, "{path}: {} vs {}", s.comment_density, h.comment_density);
        assert_eq!(s.comment_lines, 0, "{path}");
        for (ws, m) in [(&sparse_ws, s), (&heavy_ws, h)] {
            let (comments, lines) = python_comment_lines(&ws.path().join(path));
            assert_eq!((m.comment_lines, m.total_lines), (comments, lines), "{path}");
            assert!((m.comment_density - comments as f64 / lines as f64).abs() < 1e-12);
        }
    }

    let cmp = compare_sessions(&sparse, &heavy);
    assert!(!cmp.is_identical());
    let mut diverged: Vec<&str> = cmp.files.iter().filter(|d| d.diverged).map(|d| d.path.as_str()).collect();
    diverged.sort();
    let mut want = PRODUCTION.to_vec();
    want.sort();
    assert_eq!(diverged, want);
    assert_eq!(cmp.diverged_files, PRODUCTION.len());
    for d in cmp.files.iter().filter(|d| PRODUCTION.contains(&d.path.as_str())) {
        assert!(d.density_delta > 0.0 && d.lines_delta > 0, "{d:?}");
    }
    assert!(cmp.only_in_a.is_empty() && cmp.only_in_b.is_empty());
}

#[test]
fn identical_runs_compare_identical() {
    let a = bibtex_workspace();
    let b = bibtex_workspace();
    run_auto(a.path(), replay(&common::bibtex_dir()), Target::Done);
    run_auto(b.path(), replay(&common::bibtex_dir()), Target::Done);
    let ma = open(a.path(), PipelineOptions::default()).metrics();
    let mb = open(b.path(), PipelineOptions::default()).metrics();
    assert!(ma.same_outcome(&mb));
    assert!(compare_sessions(&ma, &mb).is_identical());
    assert_eq!(ma.artifacts["class_code:storage.EntryStore"].attempts, 2);
    assert_eq!(ma.session.provider_calls, 10);

    let stored: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(a.path().join(onx::store::METRICS_FILE)).unwrap()).unwrap();
    assert!(stored.same_outcome(&ma));
}

#[test]
fn export_holds_session_and_every_artifact() {
    let ws = bibtex_workspace();
    run_auto(ws.path(), replay(&common::bibtex_dir()), Target::Done);
    let p = open(ws.path(), PipelineOptions::default());
    let archive = ws.path().join("session.tar.gz");
    let listed = export_session(ws.path(), p.state(), &archive).unwrap();

    let mut names = Vec::new();
    let mut tar = tar::Archive::new(GzDecoder::new(File::open(&archive).unwrap()));
    for entry in tar.entries().unwrap() {
        let mut entry = entry.unwrap();
        let name = entry.path().unwrap().to_string_lossy().to_string();
        let mut body = Vec::new();
        entry.read_to_end(&mut body).unwrap();
        assert_eq!(body, std::fs::read(ws.path().join(&name)).unwrap(), "{name}");
        names.push(name);
    }
    names.sort();
    assert_eq!(names, listed);
    for want in [".onx/session.json", ".onx/transcript.jsonl", ".onx/events.jsonl", ".onx/metrics.json", "project.yaml", "structure.yaml", "main.py", "tests/test_acceptance.py"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
}
