mod common;

use std::fs;
use std::path::Path;

use blm_core::model::{write_jsonl, AnswerLabel, Dataset, Language, LexVariation};
use blm_core::pipeline::{
    run_pipeline, validate_file, PipelineConfig, PipelineError, PipelineManifest, Status, MANIFEST_FILE,
};

const FIXTURE_PIPELINE: &str = r#"{
  "global_seed": 17,
  "output_dir": "out",
  "log_level": "warn",
  "steps": [
    {"kind": "extract", "name": "extract", "treebanks": ["he_fixture.conllu"], "scope": "any"},
    {"kind": "generate", "name": "generate", "dataset": "caush_natural", "language": "he", "lex_variation": "maxlex",
     "count_train": 60, "count_test": 20, "source": "@extract/pool.jsonl"},
    {"kind": "score", "name": "score", "gold": "@generate/test.jsonl", "formats": ["json", "csv", "md"]}
  ]
}"#;

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("he_fixture.conllu"), common::HE_FIXTURE).unwrap();
    dir
}

fn run(dir: &Path, json: &str, jobs: Option<usize>) -> PipelineManifest {
    run_pipeline(&PipelineConfig::from_json(json.as_bytes()).unwrap(), dir, jobs).unwrap()
}

#[test]
fn extract_generate_score_on_fixture() {
    let dir = workdir();
    let m = run(dir.path(), FIXTURE_PIPELINE, None);
    assert_eq!(m.status, Status::Ok);
    assert_eq!(m.steps.len(), 3);
    assert!(m.steps.iter().all(|s| s.status == Status::Ok && s.error.is_none()));
    let out = dir.path().join("out");
    for f in [
        "extract/pool.jsonl",
        "extract/discards.json",
        "generate/train.jsonl",
        "generate/test.jsonl",
        "generate/manifest.json",
        "score/predictions.jsonl",
        "score/report.json",
        "score/report.csv",
        "score/report.md",
    ] {
        assert!(out.join(f).is_file(), "{f}");
        let owner = &m.steps.iter().find(|s| f.starts_with(&s.name)).unwrap().outputs;
        assert_eq!(owner[f], blm_core::seed::sha256_hex(&fs::read(out.join(f)).unwrap()), "{f}");
    }
    assert_eq!(m.steps[1].inputs.keys().collect::<Vec<_>>(), ["@extract/pool.jsonl"]);
    assert_eq!(m.steps[1].inputs["@extract/pool.jsonl"], m.steps[0].outputs["extract/pool.jsonl"]);
    let on_disk: PipelineManifest = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    assert!(validate_file(&out.join("generate/test.jsonl")).unwrap().is_clean());
    let discards: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("extract/discards.json")).unwrap()).unwrap();
    assert!(discards["discarded"]["PIEL"].as_u64().unwrap() > 0);
}

#[test]
fn missing_lexicon_fails_with_partial_manifest() {
    let dir = workdir();
    let json = r#"{"global_seed": 1, "output_dir": "out", "steps": [
        {"kind": "extract", "name": "extract", "treebanks": ["he_fixture.conllu"]},
        {"kind": "generate", "name": "cos", "dataset": "cos", "language": "en", "lex_variation": "minlex",
         "count_train": 9, "count_test": 1, "source": "lexicons/missing.json"},
        {"kind": "score", "name": "score", "gold": "@cos/test.jsonl"}]}"#;
    let m = run(dir.path(), json, None);
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.steps.len(), 2);
    assert_eq!(m.steps[0].status, Status::Ok);
    assert_eq!(m.steps[1].status, Status::Failed);
    assert!(m.steps[1].error.as_deref().unwrap().contains("missing.json"));
    let on_disk: PipelineManifest =
        serde_json::from_slice(&fs::read(dir.path().join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk.status, Status::Failed);
}

#[test]
fn reruns_reproduce_every_output_hash() {
    let (a, b) = (workdir(), workdir());
    let first = run(a.path(), FIXTURE_PIPELINE, Some(1));
    let second = run(b.path(), FIXTURE_PIPELINE, Some(4));
    assert_eq!(first, second);
    let again = run(a.path(), FIXTURE_PIPELINE, None);
    assert_eq!(first, again);
    let other_seed = run(b.path(), &FIXTURE_PIPELINE.replace("17", "18"), None);
    assert_ne!(other_seed.config_hash, first.config_hash);
    assert_ne!(other_seed.steps[1].outputs, first.steps[1].outputs);
    assert_ne!(first.steps[1].seed, first.steps[2].seed);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = workdir();
    let dup = FIXTURE_PIPELINE.replace("\"name\": \"score\"", "\"name\": \"extract\"");
    assert!(matches!(
        run_pipeline(&PipelineConfig::from_json(dup.as_bytes()).unwrap(), dir.path(), None),
        Err(PipelineError::Config(_))
    ));
    assert!(PipelineConfig::from_json(br#"{"global_seed": 1, "output_dir": "o", "steps": [], "extra": 1}"#).is_err());
}

#[test]
fn validate_file_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let mut gold = common::generate(Dataset::CosPlusT2I, Language::En, LexVariation::MinLex, 8, 2, 3);
    let path = dir.path().join("d.jsonl");
    let write = |insts: &[blm_core::model::BlmInstance]| {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, insts).unwrap();
        fs::write(&path, buf).unwrap();
    };
    write(&gold);
    let clean = validate_file(&path).unwrap();
    assert!(clean.is_clean());
    assert_eq!(clean.instances, 10);

    let wrong = (gold[4].correct_index + 1) % gold[4].answers.len();
    gold[4].answers[wrong].label = AnswerLabel::Correct;
    write(&gold);
    let dirty = validate_file(&path).unwrap();
    assert!(!dirty.is_clean());
    assert_eq!(dirty.failing.len(), 1);

    fs::write(&path, "").unwrap();
    let empty = validate_file(&path).unwrap();
    assert_eq!(empty.instances, 0);
    assert!(!empty.is_clean());

    fs::write(&path, format!("{}\n{{not json\n", gold[0].to_json_line())).unwrap();
    let err = validate_file(&path).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}
