use std::path::{Path, PathBuf};

use swaf_core::io::{ingest, read_text};
use swaf_core::model::{TaskKind, Value};
use swaf_core::pipeline::{run_pipeline, Mode, RunConfig};
use swaf_core::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden_split(split: &str, systems: &[&str]) -> RunConfig {
    let dir = fixtures().join("golden");
    let mut cfg = RunConfig::load(&dir.join("swaf.conf")).unwrap();
    cfg.inputs = systems
        .iter()
        .map(|s| dir.join(split).join(format!("{s}.tsv")))
        .collect();
    cfg.gold = Some(dir.join(split).join("gold.tsv"));
    cfg.docs = Some(dir.join(split).join("docs.tsv"));
    cfg
}

const SYSTEMS: [&str; 3] = ["sys01", "sys02", "sys03"];

fn train_predict_score(work: &Path) -> String {
    let mut train = golden_split("train", &SYSTEMS);
    train.out = Some(work.join("model.txt"));
    run_pipeline(&train, Mode::Train).unwrap();

    let mut predict = golden_split("test", &SYSTEMS);
    predict.model = Some(work.join("model.txt"));
    predict.out = Some(work.join("fused.tsv"));
    run_pipeline(&predict, Mode::Predict).unwrap();

    let mut score = golden_split("test", &SYSTEMS);
    score.inputs = vec![work.join("fused.tsv")];
    score.out = Some(work.join("score.txt"));
    run_pipeline(&score, Mode::Score).unwrap()
}

#[test]
fn golden_train_predict_score() {
    let work = tempfile::tempdir().unwrap();
    let report = train_predict_score(work.path());
    let expected = read_text(&fixtures().join("golden/expected_score.txt")).unwrap();
    assert_eq!(report, expected);
    assert_eq!(read_text(&work.path().join("score.txt")).unwrap(), expected);
    for artifact in [
        "model.txt",
        "model.txt.log",
        "fused.tsv",
        "fused.tsv.instances.tsv",
    ] {
        assert!(work.path().join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_predict_score(a.path());
    train_predict_score(b.path());
    for f in [
        "model.txt",
        "model.txt.log",
        "fused.tsv",
        "fused.tsv.instances.tsv",
        "score.txt",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn missing_system_in_model_roster_is_incompatible() {
    let work = tempfile::tempdir().unwrap();
    let mut train = golden_split("train", &SYSTEMS[..2]);
    train.roster = None;
    train.out = Some(work.path().join("model.txt"));
    run_pipeline(&train, Mode::Train).unwrap();

    let mut predict = golden_split("test", &SYSTEMS);
    predict.roster = None;
    predict.model = Some(work.path().join("model.txt"));
    predict.out = Some(work.path().join("fused.tsv"));
    let err = run_pipeline(&predict, Mode::Predict).unwrap_err();
    assert!(matches!(err, Error::IncompatibleModel(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(!work.path().join("fused.tsv").exists());
}

#[test]
fn vote_sweep_fixture_peaks_at_three() {
    let dir = fixtures().join("vote");
    let work = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        task: Some(TaskKind::SlotFilling),
        inputs: (1..=5).map(|i| dir.join(format!("sys{i}.tsv"))).collect(),
        gold: Some(dir.join("gold.tsv")),
        out: Some(work.path().join("curve.tsv")),
        ..RunConfig::default()
    };
    run_pipeline(&cfg, Mode::VoteSweep).unwrap();
    let curve = read_text(&work.path().join("curve.tsv")).unwrap();
    let rows: Vec<(usize, f64)> = curve
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 5);
    let best = rows
        .iter()
        .fold(rows[0], |b, r| if r.1 > b.1 { *r } else { b });
    assert_eq!(best.0, 3);
    assert!(curve.contains("# best_threshold\t3"));
    let best_output = read_text(&work.path().join("curve.tsv.best.tsv")).unwrap();
    assert_eq!(best_output.lines().count(), 11);
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn ingest_three_systems() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for s in ["a", "b", "c"] {
        let text = format!(
            "{s}\tQ1\tper:title\tmayor\t0.5\tdoc1:0-4\n{s}\tQ2\tper:age\t44\t0.7\tdoc2:10-11\n"
        );
        paths.push(write(dir.path(), &format!("{s}.tsv"), &text));
    }
    let ds = ingest(&paths, TaskKind::SlotFilling, None).unwrap();
    assert_eq!(ds.roster.ids(), ["a", "b", "c"]);
    assert_eq!(ds.records.len(), 6);

    // file order does not matter
    paths.reverse();
    assert_eq!(ingest(&paths, TaskKind::SlotFilling, None).unwrap(), ds);
}

#[test]
fn ingest_keeps_max_confidence_duplicate() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "a.tsv",
        "a\tQ1\tper:title\tMayor\t0.3\tdoc1:0-4\na\tQ1\tper:title\tmayor \t0.8\tdoc1:7-11\n",
    );
    let ds = ingest(&[p], TaskKind::SlotFilling, None).unwrap();
    assert_eq!(ds.records.len(), 1);
    assert_eq!(ds.records[0].confidence, 0.8);
    assert_eq!(ds.records[0].value, Value::Fill("mayor".into()));
}

#[test]
fn ingest_reports_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "a.tsv",
        "# comment\na\tQ1\tper:title\tmayor\t0.3\tdoc1:0-4\na\tQ1\tper:title\tclerk\t0.3\tdoc1:9-4\n",
    );
    match ingest(std::slice::from_ref(&p), TaskKind::SlotFilling, None) {
        Err(Error::Parse { path, line, .. }) => {
            assert_eq!(path, p);
            assert_eq!(line, 3);
        }
        other => panic!("{other:?}"),
    }

    let bad_box = write(dir.path(), "d.tsv", "a\timg\t3\t0.5\t10\t10\t5\t20\n");
    match ingest(&[bad_box], TaskKind::ObjectDetection, None) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 1);
            assert!(message.contains("degenerate"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn ingest_rejects_systems_outside_configured_roster() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "a.tsv",
        "z\tQ1\tper:title\tmayor\t0.3\tdoc1:0-4\n",
    );
    let roster = swaf_core::model::Roster::new(["a", "b"]).unwrap();
    assert!(matches!(
        ingest(&[p], TaskKind::SlotFilling, Some(&roster)),
        Err(Error::UnknownSystem(s)) if s == "z"
    ));
}
