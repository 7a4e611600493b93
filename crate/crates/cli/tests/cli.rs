use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn swaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swaf"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&swaf(&["--help"])), 0);
    assert_eq!(code(&swaf(&[])), 1);
    assert_eq!(code(&swaf(&["frobnicate"])), 1);
    assert_eq!(code(&swaf(&["train", "--task", "slot-filling"])), 1);
    assert_eq!(code(&swaf(&["score", "--task", "no-such-task"])), 1);
    let out = swaf(&["predict", "--task", "slot-filling", "--inputs", "a.tsv"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--model") && stderr.contains("--out"),
        "{stderr}"
    );
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "a\tQ1\tper:title\tmayor\tnot-a-number\tdoc1:0-4\n").unwrap();
    let out = swaf(&["ingest", "--task", "slot-filling", "--inputs", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1"));

    let missing = dir.path().join("missing.tsv");
    assert_eq!(
        code(&swaf(&[
            "ingest",
            "--task",
            "slot-filling",
            "--inputs",
            s(&missing)
        ])),
        2
    );
}

#[test]
fn vote_sweep_selects_three() {
    let dir = fixtures().join("vote");
    let inputs: Vec<String> = (1..=5)
        .map(|i| dir.join(format!("sys{i}.tsv")).to_str().unwrap().to_owned())
        .collect();
    let work = tempfile::tempdir().unwrap();
    let curve = work.path().join("curve.tsv");
    let out = swaf(&[
        "vote-sweep",
        "--task",
        "slot-filling",
        "--inputs",
        &inputs.join(","),
        "--gold",
        s(&dir.join("gold.tsv")),
        "--out",
        s(&curve),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&curve).unwrap();
    assert!(text.contains("# best_threshold\t3"), "{text}");
}

#[test]
fn synth_train_predict_score() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data");
    let conf = work.path().join("small.conf");
    std::fs::write(&conf, "systems = 3\ntrain_keys = 80\ntest_keys = 60\n").unwrap();
    let out = swaf(&[
        "synth",
        "--task",
        "slot-filling",
        "--seed",
        "5",
        "--config",
        s(&conf),
        "--out",
        s(&data),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let split = |name: &str| -> (String, PathBuf, PathBuf) {
        let d = data.join(name);
        let inputs = ["sys01", "sys02", "sys03"]
            .iter()
            .map(|x| d.join(format!("{x}.tsv")).to_str().unwrap().to_owned())
            .collect::<Vec<_>>()
            .join(",");
        (inputs, d.join("gold.tsv"), d.join("docs.tsv"))
    };
    let config = data.join("swaf.conf");
    let model = work.path().join("model.txt");
    let (inputs, gold, docs) = split("train");
    let out = swaf(&[
        "train",
        "--config",
        s(&config),
        "--inputs",
        &inputs,
        "--gold",
        s(&gold),
        "--docs",
        s(&docs),
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let fused = work.path().join("fused.tsv");
    let (inputs, gold, docs) = split("test");
    let out = swaf(&[
        "predict",
        "--config",
        s(&config),
        "--inputs",
        &inputs,
        "--docs",
        s(&docs),
        "--model",
        s(&model),
        "--out",
        s(&fused),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = swaf(&[
        "score",
        "--config",
        s(&config),
        "--inputs",
        s(&fused),
        "--gold",
        s(&gold),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.starts_with("precision\t"), "{report}");

    // a cosine model cannot run without documents
    let out = swaf(&[
        "predict",
        "--config",
        s(&config),
        "--inputs",
        &inputs,
        "--model",
        s(&model),
        "--out",
        s(&work.path().join("nodocs.tsv")),
    ]);
    assert_eq!(code(&out), 3);
}
