mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medinstruct"))
        .args(args)
        .env_remove("MEDINSTRUCT_API_TOKEN")
        .output()
        .expect("run binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, dataset: &str) -> String {
    let o = bin(&[
        "synth",
        "--out",
        s(dir),
        "--seed",
        "3",
        "--dataset",
        dataset,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap().trim().to_string()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn synth_then_convert_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "bc5cdr-chem");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = bin(&[
            "convert",
            "--manifest",
            &manifest,
            "--split",
            "test",
            "--seed",
            "8",
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("converted 50 records"));
    }
    assert_eq!(lines(&a), 50);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn convert_rejects_unknown_label() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "ncbi-disease");
    let test = dir.path().join("ncbi-disease/test.conll");
    let text = std::fs::read_to_string(&test).unwrap();
    let first = text.lines().next().unwrap();
    let bad = text.replacen(
        first,
        &format!("{}\tB-Bogus", first.split('\t').next().unwrap()),
        1,
    );
    std::fs::write(&test, bad).unwrap();
    let out = dir.path().join("x.jsonl");
    let o = bin(&[
        "convert",
        "--manifest",
        &manifest,
        "--split",
        "test",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn mix_counts_follow_scaled_spec() {
    let dir = tempfile::tempdir().unwrap();
    let sources = dir.path().join("sources");
    common::write_mix_sources(&sources, 30, 600, 2);
    let out = dir.path().join("out");
    let o = bin(&[
        "mix",
        "--spec",
        "main",
        "--scale",
        "1/100",
        "--sources",
        s(&sources),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    // Ten labeled sources at ALL plus two QA sources at 50000 / 100.
    assert_eq!(stats["total"], json!(10 * 30 + 2 * 500));
    assert_eq!(stats["per_source"]["chatdoctor"], json!(500));
    assert_eq!(stats["per_source"]["gad"], json!(30));
    assert_eq!(lines(&out.join("main.jsonl")), 1300);
    assert!(out.join("main.recipe.json").is_file());
    let on_disk: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("main.stats.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, stats);

    let st = bin(&["stats", "--in", s(&out.join("main.jsonl"))]);
    assert_eq!(code(&st), 0);
    assert_eq!(serde_json::from_slice::<Value>(&st.stdout).unwrap(), stats);
}

#[test]
fn mix_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sources = dir.path().join("sources");
    common::write_mix_sources(&sources, 5, 600, 2);
    std::fs::remove_file(sources.join("hoc.jsonl")).unwrap();
    let out = dir.path().join("out");
    let o = bin(&[
        "mix",
        "--spec",
        "main",
        "--scale",
        "1/100",
        "--sources",
        s(&sources),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hoc"));

    let o = bin(&[
        "mix",
        "--spec",
        "main",
        "--scale",
        "zero",
        "--sources",
        s(&sources),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = bin(&["mix", "--spec", "main", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let o = bin(&[
        "mix",
        "--spec",
        "no-such-spec",
        "--sources",
        s(&sources),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
}

fn eval_records(dir: &Path) -> std::path::PathBuf {
    let manifest = synth(dir, "mednli");
    let recs = dir.join("mednli.jsonl");
    let o = bin(&[
        "convert",
        "--manifest",
        &manifest,
        "--split",
        "test",
        "--seed",
        "4",
        "--out",
        s(&recs),
    ]);
    assert_eq!(code(&o), 0);
    recs
}

#[test]
fn eval_backends() {
    let dir = tempfile::tempdir().unwrap();
    let recs = eval_records(dir.path());

    let out = dir.path().join("mock");
    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "mock",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["correct"], json!(50));
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["value"], json!(1.0));
    }
    assert!(std::fs::read_to_string(out.join("report.md"))
        .unwrap()
        .contains("100.00"));
    assert_eq!(lines(&out.join("records.jsonl")), 50);

    // Feed the mock's generations back through the file backend.
    let preds = dir.path().join("preds.jsonl");
    let log = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let body: String = log
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            json!({"record_id": v["record_id"], "text": v["generation"]}).to_string() + "\n"
        })
        .collect();
    std::fs::write(&preds, body).unwrap();
    let out2 = dir.path().join("file");
    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "file",
        "--predictions",
        s(&preds),
        "--out",
        s(&out2),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report2: Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report2["rows"], report["rows"]);

    let out3 = dir.path().join("corrupt");
    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "mock",
        "--mock-mode",
        "corrupt",
        "--out",
        s(&out3),
    ]);
    assert_eq!(code(&o), 1, "corrupt mode needs a seed");
    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "mock",
        "--mock-mode",
        "corrupt",
        "--seed",
        "9",
        "--corrupt-p",
        "0.5",
        "--out",
        s(&out3),
    ]);
    assert_eq!(code(&o), 0);
    let ledger: Value =
        serde_json::from_str(&std::fs::read_to_string(out3.join("corruptions.json")).unwrap())
            .unwrap();
    let report3: Value =
        serde_json::from_str(&std::fs::read_to_string(out3.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        report3["malformed"],
        json!(ledger.as_object().unwrap().len())
    );
}

#[test]
fn eval_against_dead_endpoint_exits_backend() {
    let dir = tempfile::tempdir().unwrap();
    let recs = eval_records(dir.path());
    let out = dir.path().join("http");
    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "http",
        "--endpoint",
        &common::dead_endpoint(),
        "--backoff-ms",
        "1",
        "--parallel",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], json!(50));

    let o = bin(&[
        "eval",
        "--records",
        s(&recs),
        "--backend",
        "http",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1, "missing --endpoint");
}

#[test]
fn stats_on_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = bin(&["stats", "--in", s(&empty)]);
    assert_eq!(code(&o), 0);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["total"], json!(0));
    assert!(stats["per_source"].as_object().unwrap().is_empty());
}

#[test]
fn report_rendering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.json");
    let reference = json!([{
        "system": "13b",
        "config_digest": "reference",
        "rows": [{
            "dataset": "MedNLI", "task": "NLI", "metric_name": "accuracy",
            "value": 0.8946, "malformed_rate": 0.0, "n": 0
        }]
    }]);
    std::fs::write(&path, reference.to_string()).unwrap();
    let o = bin(&["report", "--in", s(&path), "--format", "md"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = String::from_utf8(o.stdout).unwrap();
    assert!(md.contains("| 89.46 |"), "{md}");
    assert!(!md.contains("malformed"));

    let o = bin(&["report", "--in", s(&path), "--format", "json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        serde_json::from_slice::<Value>(&o.stdout).unwrap()[0]["rows"],
        reference[0]["rows"]
    );

    assert_eq!(
        code(&bin(&["report", "--in", s(&path), "--format", "html"])),
        1
    );
    std::fs::write(&path, "{").unwrap();
    assert_eq!(
        code(&bin(&["report", "--in", s(&path), "--format", "md"])),
        2
    );
}

#[test]
fn usage() {
    assert_eq!(code(&bin(&[])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
    assert_eq!(code(&bin(&["frobnicate"])), 1);
    assert_eq!(code(&bin(&["stats", "--in", "/nonexistent/x.jsonl"])), 2);
}
