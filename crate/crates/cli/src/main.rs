//! `blm`: extract Hebrew pools, generate and validate puzzle datasets, score
//! predictions and run whole pipelines.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use blm_core::builder::{build_dataset, load_inputs, GenerationConfig};
use blm_core::eval::{chance_baseline, read_predictions, report_render, score, write_predictions, ReportFormat};
use blm_core::pipeline::{
    harvest_files, read_dataset, run_pipeline, validate_file, with_jobs, PipelineConfig, Status, MANIFEST_FILE,
};
use blm_core::ud::Scope;

const LOG_ENV: &str = "BLM_LOG";

#[derive(Parser)]
#[command(name = "blm", version, about = "Blackbird Language Matrix datasets for verb alternations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest binyan sentence pools from CoNLL-U treebanks.
    Extract {
        /// CoNLL-U file; repeat for several treebanks.
        #[arg(long = "treebank", required = true)]
        treebanks: Vec<PathBuf>,
        /// Match any token (`any`) or only the root verb (`root`).
        #[arg(long, default_value = "any")]
        scope: Scope,
        /// Pool JSONL to write.
        #[arg(long)]
        out: PathBuf,
        /// Where to write counts of pooled and discarded binyan values.
        #[arg(long)]
        discard_report: Option<PathBuf>,
    },
    /// Generate a dataset with train/test splits from a generation config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for train.jsonl, test.jsonl and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; does not change the output.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check every instance of a dataset JSONL file.
    Validate { dataset: PathBuf },
    /// Score predictions against a gold dataset.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// json, csv or md.
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write seeded uniform-random predictions for a gold dataset.
    Chance {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a multi-step pipeline config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn init_logging(default: &str) {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, default)).format_timestamp(None).init();
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new(""))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn extract(treebanks: &[PathBuf], scope: Scope, out: &Path, discard_report: Option<&Path>) -> Result<ExitCode> {
    let harvest = harvest_files(treebanks, scope)?;
    let mut pool = Vec::new();
    harvest.pool.write_jsonl(&mut pool)?;
    write_file(out, &pool)?;
    let mut report = serde_json::to_string_pretty(&harvest.report(scope))?;
    report.push('\n');
    match discard_report {
        Some(path) => write_file(path, report.as_bytes())?,
        None => log::info!("{}", report.trim_end()),
    }
    for (binyan, n) in harvest.pool.sizes() {
        log::info!("{binyan}: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(config_path: &Path, out: &Path, seed: Option<u64>, jobs: Option<usize>) -> Result<ExitCode> {
    let bytes = fs::read(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let mut config = GenerationConfig::from_json(&bytes)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let (input, catalog) = load_inputs(&config, config_dir(config_path))?;
    let result = with_jobs(jobs, || build_dataset(&config, &input, &catalog))?;
    result.write(out)?;
    println!("{} train / {} test written to {}", result.train.len(), result.test.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(dataset: &Path) -> Result<ExitCode> {
    let summary = validate_file(dataset)?;
    if summary.instances == 0 {
        println!("no instances");
        return Ok(ExitCode::FAILURE);
    }
    for report in &summary.failing {
        for v in &report.violations {
            println!("{}: {} {}", report.instance_id, v.rule_code, v.message);
        }
    }
    println!("{} instances, {} with violations", summary.instances, summary.failing.len());
    Ok(if summary.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn score_cmd(gold: &Path, pred: &Path, format: ReportFormat, out: Option<&Path>) -> Result<ExitCode> {
    let gold = read_dataset(gold)?;
    let file = File::open(pred).with_context(|| format!("reading {}", pred.display()))?;
    let preds = read_predictions(BufReader::new(file)).with_context(|| pred.display().to_string())?;
    let report = score(&gold, &preds)?;
    let text = report_render(std::slice::from_ref(&report), format);
    match out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn chance(gold: &Path, seed: u64, out: &Path) -> Result<ExitCode> {
    let gold = read_dataset(gold)?;
    let mut buf = Vec::new();
    write_predictions(&mut buf, &chance_baseline(&gold, seed))?;
    write_file(out, &buf)?;
    Ok(ExitCode::SUCCESS)
}

fn pipeline(config: &PipelineConfig, config_path: &Path, jobs: Option<usize>) -> Result<ExitCode> {
    let base = config_dir(config_path);
    let manifest = run_pipeline(config, base, jobs)?;
    let manifest_path = base.join(&config.output_dir).join(MANIFEST_FILE);
    for step in &manifest.steps {
        match &step.error {
            Some(e) => println!("{} ({}): failed: {e}", step.name, step.kind),
            None => println!("{} ({}): ok, {} outputs", step.name, step.kind, step.outputs.len()),
        }
    }
    println!("manifest: {}", manifest_path.display());
    Ok(if manifest.status == Status::Ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Pipeline { config, jobs } => {
            let bytes = fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let parsed = PipelineConfig::from_json(&bytes)?;
            init_logging(parsed.log_level.as_str());
            pipeline(&parsed, &config, jobs)
        }
        command => {
            init_logging("info");
            match command {
                Command::Extract { treebanks, scope, out, discard_report } => {
                    extract(&treebanks, scope, &out, discard_report.as_deref())
                }
                Command::Generate { config, out, seed, jobs } => generate(&config, &out, seed, jobs),
                Command::Validate { dataset } => validate(&dataset),
                Command::Score { gold, pred, format, out } => score_cmd(&gold, &pred, format, out.as_deref()),
                Command::Chance { gold, seed, out } => chance(&gold, seed, &out),
                Command::Pipeline { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
