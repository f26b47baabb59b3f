use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn blm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blm")).current_dir(dir).args(args).env("BLM_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Temp dir with the Hebrew fixture treebank, the English lexicon and a
/// generation config that refers to the lexicon by a relative path.
fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(core_file("tests/fixtures/he_fixture.conllu"), dir.path().join("he.conllu")).unwrap();
    fs::create_dir(dir.path().join("cfg")).unwrap();
    fs::copy(core_file("data/lexicons/en.json"), dir.path().join("cfg/en.json")).unwrap();
    fs::write(
        dir.path().join("cfg/cos.json"),
        r#"{"dataset": "cos", "language": "en", "lex_variation": "minlex", "count_train": 90, "count_test": 30, "seed": 3, "source": "en.json"}"#,
    )
    .unwrap();
    dir
}

#[test]
fn extract_writes_pool_and_discard_report() {
    let dir = workdir();
    let o = blm(
        dir.path(),
        &["extract", "--treebank", "he.conllu", "--out", "pool.jsonl", "--discard-report", "discards.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let any = fs::read_to_string(dir.path().join("pool.jsonl")).unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("discards.json")).unwrap()).unwrap();
    assert_eq!(report["scope"], "any");
    let pooled: u64 = report["pooled"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(pooled as usize, any.lines().count());
    assert!(report["discarded"]["PIEL"].as_u64().unwrap() > 0);

    let o = blm(dir.path(), &["extract", "--treebank", "he.conllu", "--scope", "root", "--out", "root.jsonl"]);
    assert!(o.status.success());
    let root = fs::read_to_string(dir.path().join("root.jsonl")).unwrap();
    assert!(root.lines().count() < any.lines().count());
    assert!(root.lines().all(|l| any.contains(l)));

    assert!(!blm(dir.path(), &["extract", "--treebank", "nope.conllu", "--out", "x.jsonl"]).status.success());
    assert!(!blm(dir.path(), &["extract", "--treebank", "he.conllu", "--scope", "leaf", "--out", "x.jsonl"])
        .status
        .success());
}

#[test]
fn generate_is_byte_stable_for_a_seed_and_any_jobs() {
    let dir = workdir();
    let read = |out: &str| {
        ["train.jsonl", "test.jsonl", "manifest.json"].map(|f| fs::read(dir.path().join(out).join(f)).unwrap())
    };
    for (out, jobs) in [("a", "1"), ("b", "4")] {
        let o = blm(dir.path(), &["generate", "--config", "cfg/cos.json", "--out", out, "--seed", "5", "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read("a"), read("b"));
    let a = read("a");
    assert_eq!(String::from_utf8_lossy(&a[0]).lines().count(), 90);
    assert_eq!(String::from_utf8_lossy(&a[1]).lines().count(), 30);

    let o = blm(dir.path(), &["generate", "--config", "cfg/cos.json", "--out", "c"]);
    assert!(o.status.success());
    assert_ne!(read("c")[0], a[0]);

    fs::write(dir.path().join("cfg/bad.json"), r#"{"dataset": "cos", "language": "he", "lex_variation": "minlex", "count_train": 9, "count_test": 1, "seed": 1, "source": "en.json"}"#).unwrap();
    let o = blm(dir.path(), &["generate", "--config", "cfg/bad.json", "--out", "d"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("not defined"), "{}", stderr(&o));
}

#[test]
fn validate_exit_codes() {
    let dir = workdir();
    assert!(blm(dir.path(), &["generate", "--config", "cfg/cos.json", "--out", "g"]).status.success());
    let o = blm(dir.path(), &["validate", "g/test.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("30 instances, 0 with violations"));

    let text = fs::read_to_string(dir.path().join("g/test.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    let correct = first["correct_index"].as_u64().unwrap() as usize;
    first["answers"][(correct + 1) % 8]["label"] = "correct".into();
    lines[0] = first.to_string();
    fs::write(dir.path().join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let o = blm(dir.path(), &["validate", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1 with violations"), "{}", stdout(&o));

    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = blm(dir.path(), &["validate", "empty.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("no instances"));

    fs::write(dir.path().join("broken.jsonl"), format!("{}\n{{\"id\": 3\n", lines[1])).unwrap();
    let o = blm(dir.path(), &["validate", "broken.jsonl"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn chance_then_score_in_every_format() {
    let dir = workdir();
    assert!(blm(dir.path(), &["generate", "--config", "cfg/cos.json", "--out", "g"]).status.success());
    let o = blm(dir.path(), &["chance", "--gold", "g/test.jsonl", "--seed", "2", "--out", "preds.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("preds.jsonl")).unwrap().lines().count(), 30);

    let o = blm(dir.path(), &["score", "--gold", "g/test.jsonl", "--pred", "preds.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["n"], 30);
    assert_eq!(report["accuracy"], report["f1"]);

    let o = blm(dir.path(), &["score", "--gold", "g/test.jsonl", "--pred", "preds.jsonl", "--format", "csv"]);
    assert!(stdout(&o).starts_with("dataset,metric,value\ncos-en-minlex,n,30\n"), "{}", stdout(&o));
    let o = blm(
        dir.path(),
        &["score", "--gold", "g/test.jsonl", "--pred", "preds.jsonl", "--format", "md", "--out", "r.md"],
    );
    assert!(o.status.success());
    assert!(fs::read_to_string(dir.path().join("r.md"))
        .unwrap()
        .contains("| Wrong Answer | Error Type | cos-en-minlex |"));

    let preds = fs::read_to_string(dir.path().join("preds.jsonl")).unwrap();
    let mut lines: Vec<&str> = preds.lines().collect();
    lines.pop();
    fs::write(dir.path().join("short.jsonl"), lines.join("\n")).unwrap();
    let o = blm(dir.path(), &["score", "--gold", "g/test.jsonl", "--pred", "short.jsonl"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no prediction"), "{}", stderr(&o));
}

#[test]
fn pipeline_runs_and_reports_failures() {
    let dir = workdir();
    let config = r#"{"global_seed": 4, "output_dir": "out", "log_level": "warn", "steps": [
        {"kind": "extract", "name": "extract", "treebanks": ["he.conllu"]},
        {"kind": "generate", "name": "synthetic", "dataset": "caush_synthetic", "language": "he", "lex_variation": "maxlex",
         "count_train": 30, "count_test": 10, "source": "@extract/pool.jsonl"},
        {"kind": "score", "name": "chance", "gold": "@synthetic/test.jsonl", "formats": ["json", "md"]}]}"#;
    fs::write(dir.path().join("pipeline.json"), config).unwrap();
    let o = blm(dir.path(), &["pipeline", "--config", "pipeline.json", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/pipeline_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["steps"].as_array().unwrap().len(), 3);
    let first = fs::read(dir.path().join("out/chance/report.json")).unwrap();
    assert!(blm(dir.path(), &["pipeline", "--config", "pipeline.json", "--jobs", "1"]).status.success());
    assert_eq!(fs::read(dir.path().join("out/chance/report.json")).unwrap(), first);

    fs::write(dir.path().join("pipeline.json"), config.replace("@extract/pool.jsonl", "missing_pool.jsonl")).unwrap();
    let o = blm(dir.path(), &["pipeline", "--config", "pipeline.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("synthetic (generate): failed"), "{}", stdout(&o));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/pipeline_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["steps"].as_array().unwrap().len(), 2);
}
