//! End-to-end orchestration: extract, generate and score steps driven by one
//! config and one global seed, with a hash manifest per run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{build_dataset, load_inputs, BuildError, DisjointKey, GenerationConfig, CODE_VERSION};
use crate::catalog::TemplateCatalog;
use crate::eval::{
    chance_baseline, read_predictions, report_render, score, write_predictions, EvalError, ReportFormat,
};
use crate::model::{
    read_jsonl, validate_instance, BlmInstance, Dataset, Language, LexVariation, ModelError, ValidationReport,
};
use crate::seed;
use crate::ud::{harvest_binyan, parse_conllu, ConlluError, Harvest, Scope};

pub const MANIFEST_FILE: &str = "pipeline_manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("{path}: {source}")]
    Conllu {
        path: PathBuf,
        #[source]
        source: ConlluError,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    Extract {
        name: String,
        treebanks: Vec<String>,
        #[serde(default)]
        scope: Scope,
    },
    /// A generation config without its seed, which comes from the pipeline.
    Generate {
        name: String,
        dataset: Dataset,
        language: Language,
        lex_variation: LexVariation,
        count_train: usize,
        count_test: usize,
        #[serde(default)]
        disjoint_key: Option<DisjointKey>,
        source: String,
        #[serde(default)]
        template_file: Option<String>,
    },
    Score {
        name: String,
        gold: String,
        /// Predictions JSONL; a seeded chance baseline when absent.
        #[serde(default)]
        predictions: Option<String>,
        #[serde(default = "default_formats")]
        formats: Vec<ReportFormat>,
    },
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Json]
}

impl StepConfig {
    pub fn name(&self) -> &str {
        match self {
            StepConfig::Extract { name, .. } | StepConfig::Generate { name, .. } | StepConfig::Score { name, .. } => {
                name
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StepConfig::Extract { .. } => "extract",
            StepConfig::Generate { .. } => "generate",
            StepConfig::Score { .. } => "score",
        }
    }

    fn inputs(&self) -> Vec<&str> {
        match self {
            StepConfig::Extract { treebanks, .. } => treebanks.iter().map(String::as_str).collect(),
            StepConfig::Generate { source, template_file, .. } => {
                std::iter::once(source.as_str()).chain(template_file.as_deref()).collect()
            }
            StepConfig::Score { gold, predictions, .. } => {
                std::iter::once(gold.as_str()).chain(predictions.as_deref()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    #[default]
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Error => "error",
            LogLevel::Warn => "warn",
            LogLevel::Info => "info",
            LogLevel::Debug => "debug",
            LogLevel::Trace => "trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub steps: Vec<StepConfig>,
    pub global_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub log_level: LogLevel,
}

impl PipelineConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, PipelineError> {
        serde_json::from_slice(bytes).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Step names are unique and `@step/...` references point to earlier steps.
    pub fn check(&self) -> Result<(), PipelineError> {
        let mut seen = BTreeSet::new();
        for step in &self.steps {
            for input in step.inputs() {
                if let Some((producer, _)) = parse_ref(input) {
                    if !seen.contains(producer) {
                        return Err(PipelineError::Config(format!(
                            "step {:?} reads {input:?} but no earlier step is named {producer:?}",
                            step.name()
                        )));
                    }
                }
            }
            if !seen.insert(step.name()) {
                return Err(PipelineError::Config(format!("duplicate step name {:?}", step.name())));
            }
        }
        if self.steps.is_empty() {
            return Err(PipelineError::Config("no steps".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        seed::sha256_hex(format!("{CODE_VERSION}\n{json}").as_bytes())[..16].to_string()
    }
}

fn parse_ref(input: &str) -> Option<(&str, &str)> {
    input.strip_prefix('@')?.split_once('/')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Input as written in the config -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory -> sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub code_version: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub status: Status,
    pub steps: Vec<StepRecord>,
}

fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
    Ok(seed::sha256_hex(&bytes))
}

/// Runs `f` on a rayon pool capped at `jobs` threads, or the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().expect("thread pool").install(f),
        None => f(),
    }
}

/// Harvests binyan pools from CoNLL-U files, using each file stem as the
/// source name.
pub fn harvest_files(paths: &[PathBuf], scope: Scope) -> Result<Harvest, PipelineError> {
    let mut parts = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|_| PipelineError::MissingInput(path.clone()))?;
        let sentences = parse_conllu(BufReader::new(file))
            .map_err(|source| PipelineError::Conllu { path: path.clone(), source })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        log::info!("{}: {} sentences", path.display(), sentences.len());
        parts.push(harvest_binyan(&name, &sentences, scope));
    }
    Ok(Harvest::merge(parts))
}

pub fn read_dataset(path: &Path) -> Result<Vec<BlmInstance>, PipelineError> {
    let file = File::open(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
    read_jsonl(BufReader::new(file)).map_err(|source| PipelineError::Model { path: path.to_path_buf(), source })
}

/// Outcome of validating a dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidateSummary {
    pub instances: usize,
    pub failing: Vec<ValidationReport>,
}

impl ValidateSummary {
    pub fn is_clean(&self) -> bool {
        self.instances > 0 && self.failing.is_empty()
    }
}

pub fn validate_file(path: &Path) -> Result<ValidateSummary, PipelineError> {
    let instances = read_dataset(path)?;
    let catalog = TemplateCatalog::builtin();
    let mut failing = Vec::new();
    for inst in &instances {
        let report = validate_instance(inst, &catalog)
            .map_err(|source| PipelineError::Model { path: path.to_path_buf(), source })?;
        if !report.is_valid() {
            failing.push(report);
        }
    }
    Ok(ValidateSummary { instances: instances.len(), failing })
}

struct Runner<'a> {
    base_dir: &'a Path,
    out_dir: PathBuf,
}

impl Runner<'_> {
    fn resolve(&self, input: &str) -> PathBuf {
        match parse_ref(input) {
            Some((step, file)) => self.out_dir.join(step).join(file),
            None => self.base_dir.join(input),
        }
    }

    fn write(&self, record: &mut StepRecord, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.out_dir.join(&record.name).join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        record.outputs.insert(format!("{}/{rel}", record.name), seed::sha256_hex(bytes));
        Ok(())
    }

    fn run(&self, step: &StepConfig, record: &mut StepRecord) -> Result<(), PipelineError> {
        for input in step.inputs() {
            record.inputs.insert(input.to_string(), hash_file(&self.resolve(input))?);
        }
        match step {
            StepConfig::Extract { treebanks, scope, .. } => {
                let paths: Vec<PathBuf> = treebanks.iter().map(|t| self.resolve(t)).collect();
                let harvest = harvest_files(&paths, *scope)?;
                let mut pool = Vec::new();
                harvest.pool.write_jsonl(&mut pool)?;
                self.write(record, "pool.jsonl", &pool)?;
                let mut report = serde_json::to_string_pretty(&harvest.report(*scope)).expect("report serializes");
                report.push('\n');
                self.write(record, "discards.json", report.as_bytes())?;
            }
            StepConfig::Generate {
                dataset,
                language,
                lex_variation,
                count_train,
                count_test,
                disjoint_key,
                source,
                template_file,
                ..
            } => {
                let config = GenerationConfig {
                    dataset: *dataset,
                    language: *language,
                    lex_variation: *lex_variation,
                    count_train: *count_train,
                    count_test: *count_test,
                    seed: record.seed,
                    disjoint_key: *disjoint_key,
                    source: self.resolve(source),
                    template_file: template_file.as_deref().map(|t| self.resolve(t)),
                };
                let (input, catalog) = load_inputs(&config, Path::new(""))?;
                let result = build_dataset(&config, &input, &catalog)?;
                let dir = self.out_dir.join(&record.name);
                result.write(&dir)?;
                for f in ["train.jsonl", "test.jsonl", "manifest.json"] {
                    record.outputs.insert(format!("{}/{f}", record.name), hash_file(&dir.join(f))?);
                }
            }
            StepConfig::Score { gold, predictions, formats, .. } => {
                let gold = read_dataset(&self.resolve(gold))?;
                let preds = match predictions {
                    Some(p) => {
                        let path = self.resolve(p);
                        let file = File::open(&path).map_err(|_| PipelineError::MissingInput(path.clone()))?;
                        read_predictions(BufReader::new(file))
                            .map_err(|source| PipelineError::Model { path, source })?
                    }
                    None => {
                        let preds = chance_baseline(&gold, record.seed);
                        let mut buf = Vec::new();
                        write_predictions(&mut buf, &preds)?;
                        self.write(record, "predictions.jsonl", &buf)?;
                        preds
                    }
                };
                let report = score(&gold, &preds)?;
                for format in formats {
                    let ext = match format {
                        ReportFormat::Json => "json",
                        ReportFormat::Csv => "csv",
                        ReportFormat::Markdown => "md",
                    };
                    let text = report_render(std::slice::from_ref(&report), *format);
                    self.write(record, &format!("report.{ext}"), text.as_bytes())?;
                }
            }
        }
        Ok(())
    }
}

/// Runs every step in order and writes the manifest, also after a failure.
/// Relative paths resolve against `base_dir`.
pub fn run_pipeline(
    config: &PipelineConfig,
    base_dir: &Path,
    jobs: Option<usize>,
) -> Result<PipelineManifest, PipelineError> {
    config.check()?;
    let runner = Runner { base_dir, out_dir: base_dir.join(&config.output_dir) };
    fs::create_dir_all(&runner.out_dir)?;
    let mut manifest = PipelineManifest {
        code_version: CODE_VERSION.to_string(),
        config_hash: config.hash(),
        global_seed: config.global_seed,
        status: Status::Ok,
        steps: Vec::new(),
    };
    for step in &config.steps {
        let mut record = StepRecord {
            name: step.name().to_string(),
            kind: step.kind().to_string(),
            seed: seed::derive(config.global_seed, &["step", step.name()]),
            status: Status::Ok,
            error: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        log::info!("step {} ({})", record.name, record.kind);
        let outcome = with_jobs(jobs, || runner.run(step, &mut record));
        if let Err(e) = outcome {
            log::error!("step {} failed: {e}", record.name);
            record.status = Status::Failed;
            record.error = Some(e.to_string());
            manifest.status = Status::Failed;
            manifest.steps.push(record);
            break;
        }
        manifest.steps.push(record);
    }
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(runner.out_dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score_step(name: &str, gold: &str) -> StepConfig {
        StepConfig::Score { name: name.into(), gold: gold.into(), predictions: None, formats: default_formats() }
    }

    #[test]
    fn references_must_point_backwards() {
        let mut c = PipelineConfig {
            steps: vec![score_step("score", "@gen/test.jsonl")],
            global_seed: 1,
            output_dir: "out".into(),
            log_level: LogLevel::Info,
        };
        assert!(matches!(c.check(), Err(PipelineError::Config(m)) if m.contains("gen")));
        c.steps = vec![score_step("a", "x.jsonl"), score_step("a", "y.jsonl")];
        assert!(matches!(c.check(), Err(PipelineError::Config(m)) if m.contains("duplicate")));
    }

    #[test]
    fn step_json_shape() {
        let s: StepConfig =
            serde_json::from_str(r#"{"kind":"extract","name":"x","treebanks":["a.conllu"],"scope":"root"}"#).unwrap();
        assert_eq!(s, StepConfig::Extract { name: "x".into(), treebanks: vec!["a.conllu".into()], scope: Scope::Root });
    }
}
