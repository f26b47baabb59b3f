//! Scoring of solver predictions and the error analyses built on it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{describe, TemplateCatalog};
use crate::model::{AnswerLabel, BinyanLabel, BlmInstance, ModelError};
use crate::seed;

/// Metric name used wherever F1 is shown: for a single-choice task micro-F1
/// equals accuracy.
pub const F1_NAME: &str = "f1(micro)=accuracy";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold instances")]
    Empty,
    #[error("no prediction for instance {0}")]
    Missing(String),
    #[error("more than one prediction for instance {0}")]
    Duplicate(String),
    #[error("prediction for unknown instance {0}")]
    UnknownId(String),
    #[error("instance {id}: choice {choice} out of range for {answers} answers")]
    OutOfRange { id: String, choice: usize, answers: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    /// 0-based index into the stored answer list.
    pub choice: usize,
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, ModelError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ModelError::Json { line: idx + 1, source })?);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut writer: W, preds: &[Prediction]) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateInfo {
    /// Error type of the candidate; absent when it varies across instances.
    pub label: Option<AnswerLabel>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// `dataset-language-lex` of the gold file, or `mixed`.
    pub name: String,
    pub n: usize,
    pub accuracy: f64,
    /// Micro-F1, equal to accuracy.
    pub f1: f64,
    pub per_label_selected: BTreeMap<AnswerLabel, usize>,
    /// Wrong choices only, by candidate id.
    pub per_candidate_id: BTreeMap<u8, usize>,
    pub candidates: BTreeMap<u8, CandidateInfo>,
    /// Gold target binyan -> chosen binyan -> proportion of the row (CausH).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<BTreeMap<BinyanLabel, BTreeMap<BinyanLabel, f64>>>,
}

#[derive(Default)]
struct Tally {
    correct: usize,
    labels: BTreeMap<AnswerLabel, usize>,
    wrong: BTreeMap<u8, usize>,
    confusion: BTreeMap<BinyanLabel, BTreeMap<BinyanLabel, usize>>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.correct += other.correct;
        for (k, v) in other.labels {
            *self.labels.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.wrong {
            *self.wrong.entry(k).or_insert(0) += v;
        }
        for (g, row) in other.confusion {
            let mine = self.confusion.entry(g).or_default();
            for (c, v) in row {
                *mine.entry(c).or_insert(0) += v;
            }
        }
        self
    }
}

fn report_name(gold: &[BlmInstance]) -> String {
    let first = &gold[0];
    let same = gold.iter().all(|g| (g.dataset, g.language, g.lex) == (first.dataset, first.language, first.lex));
    if same {
        format!("{}-{}-{}", first.dataset, first.language, first.lex)
    } else {
        "mixed".into()
    }
}

fn candidate_table(gold: &[BlmInstance]) -> BTreeMap<u8, CandidateInfo> {
    let catalog = TemplateCatalog::builtin();
    let mut labels: BTreeMap<u8, Option<AnswerLabel>> = BTreeMap::new();
    for g in gold {
        for a in &g.answers {
            labels
                .entry(a.cid)
                .and_modify(|l| {
                    if *l != Some(a.label) {
                        *l = None
                    }
                })
                .or_insert(Some(a.label));
        }
    }
    let first = &gold[0];
    let pattern = catalog.pattern_for(first.dataset, first.language);
    labels
        .into_iter()
        .map(|(cid, label)| {
            let description = if first.dataset.is_caush() {
                BinyanLabel::from_candidate_id(cid).map(|b| b.to_string()).unwrap_or_default()
            } else {
                pattern
                    .and_then(|p| p.answer_rows.iter().find(|r| r.cid == cid))
                    .map(|r| describe(&r.spec))
                    .unwrap_or_default()
            };
            (cid, CandidateInfo { label, description })
        })
        .collect()
}

/// Scores predictions against gold instances. Every gold instance needs
/// exactly one prediction; the result does not depend on input order.
pub fn score(gold: &[BlmInstance], preds: &[Prediction]) -> Result<ScoreReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.id.as_str(), p.choice).is_some() {
            return Err(EvalError::Duplicate(p.id.clone()));
        }
    }
    let gold_ids: HashMap<&str, &BlmInstance> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    if let Some(p) = preds.iter().filter(|p| !gold_ids.contains_key(p.id.as_str())).min_by(|a, b| a.id.cmp(&b.id)) {
        return Err(EvalError::UnknownId(p.id.clone()));
    }
    let mut sorted: Vec<&BlmInstance> = gold.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pairs = Vec::with_capacity(sorted.len());
    for g in sorted {
        let choice = *by_id.get(g.id.as_str()).ok_or_else(|| EvalError::Missing(g.id.clone()))?;
        if choice >= g.answers.len() {
            return Err(EvalError::OutOfRange { id: g.id.clone(), choice, answers: g.answers.len() });
        }
        pairs.push((g, choice));
    }

    let tally = pairs
        .par_iter()
        .fold(Tally::default, |mut t, (g, choice)| {
            let chosen = &g.answers[*choice];
            *t.labels.entry(chosen.label).or_insert(0) += 1;
            if *choice == g.correct_index {
                t.correct += 1;
            } else {
                *t.wrong.entry(chosen.cid).or_insert(0) += 1;
            }
            if g.dataset.is_caush() {
                let gold_b = g.answers.get(g.correct_index).and_then(|a| BinyanLabel::from_candidate_id(a.cid));
                if let (Some(gb), Some(cb)) = (gold_b, BinyanLabel::from_candidate_id(chosen.cid)) {
                    *t.confusion.entry(gb).or_default().entry(cb).or_insert(0) += 1;
                }
            }
            t
        })
        .reduce(Tally::default, Tally::merge);

    let n = pairs.len();
    let accuracy = tally.correct as f64 / n as f64;
    let confusion = gold.iter().any(|g| g.dataset.is_caush()).then(|| {
        tally
            .confusion
            .iter()
            .map(|(g, row)| {
                let total: usize = row.values().sum();
                let props = BinyanLabel::ALL
                    .iter()
                    .map(|c| (*c, row.get(c).copied().unwrap_or(0) as f64 / total as f64))
                    .collect();
                (*g, props)
            })
            .collect()
    });
    Ok(ScoreReport {
        name: report_name(gold),
        n,
        accuracy,
        f1: accuracy,
        per_label_selected: tally.labels,
        per_candidate_id: tally.wrong,
        candidates: candidate_table(gold),
        confusion,
    })
}

/// Uniform random choice per instance, each drawn from its own stream keyed
/// by (seed, instance id).
pub fn chance_baseline(gold: &[BlmInstance], seed: u64) -> Vec<Prediction> {
    gold.iter()
        .map(|g| Prediction {
            id: g.id.clone(),
            choice: seed::rng(seed, &["chance", &g.id]).gen_range(0..g.answers.len().max(1)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    #[serde(alias = "md")]
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format {other:?} (expected json|csv|md)")),
        }
    }
}

/// Renders one or more reports. JSON is a single object for one report and
/// an array otherwise.
pub fn report_render(reports: &[ScoreReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = match reports {
                [one] => serde_json::to_string_pretty(one),
                many => serde_json::to_string_pretty(many),
            }
            .expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Markdown => render_markdown(reports),
    }
}

fn render_csv(reports: &[ScoreReport]) -> String {
    let mut out = String::from("dataset,metric,value\n");
    for r in reports {
        let mut row = |metric: String, value: String| {
            let _ = writeln!(out, "{},{},{}", r.name, metric, value);
        };
        row("n".into(), r.n.to_string());
        row("accuracy".into(), r.accuracy.to_string());
        row(F1_NAME.into(), r.f1.to_string());
        for label in AnswerLabel::ALL {
            row(format!("selected.{label}"), r.per_label_selected.get(label).copied().unwrap_or(0).to_string());
        }
        for cid in r.candidates.keys() {
            row(format!("wrong.{cid}"), r.per_candidate_id.get(cid).copied().unwrap_or(0).to_string());
        }
        if let Some(conf) = &r.confusion {
            for (g, cells) in conf {
                for (c, v) in cells {
                    row(format!("confusion.{g}.{c}"), v.to_string());
                }
            }
        }
    }
    out
}

fn render_markdown(reports: &[ScoreReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| dataset | n | accuracy | {F1_NAME} |");
    let _ = writeln!(out, "|---|---:|---:|---:|");
    for r in reports {
        let _ = writeln!(out, "| {} | {} | {:.3} | {:.3} |", r.name, r.n, r.accuracy, r.f1);
    }

    let mut cids: BTreeMap<u8, (String, Option<AnswerLabel>)> = BTreeMap::new();
    for r in reports {
        for (cid, info) in &r.candidates {
            let entry = cids.entry(*cid).or_insert_with(|| (info.description.clone(), None));
            if entry.0.is_empty() {
                entry.0 = info.description.clone();
            }
            if entry.1.is_none() && info.label != Some(AnswerLabel::Correct) {
                entry.1 = info.label;
            }
        }
    }
    let _ = writeln!(
        out,
        "\n| Wrong Answer | Error Type | {} |",
        reports.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(" | ")
    );
    let _ = writeln!(out, "|---|---|{}", "---:|".repeat(reports.len()));
    for (cid, (description, label)) in &cids {
        let cells: Vec<String> = reports
            .iter()
            .map(|r| match r.candidates.get(cid) {
                None => "-".into(),
                Some(info) if info.label == Some(AnswerLabel::Correct) => "-".into(),
                Some(_) => r.per_candidate_id.get(cid).copied().unwrap_or(0).to_string(),
            })
            .collect();
        let label = label.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "| {cid} {description} | {label} | {} |", cells.join(" | "));
    }

    for r in reports {
        let Some(conf) = &r.confusion else { continue };
        let _ = writeln!(out, "\nConfusion ({}), rows gold, columns chosen, proportions\n", r.name);
        let names: Vec<&str> = BinyanLabel::ALL.iter().map(|b| b.as_str()).collect();
        let _ = writeln!(out, "| gold | {} |", names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(names.len()));
        for (g, cells) in conf {
            let vals: Vec<String> =
                BinyanLabel::ALL.iter().map(|c| format!("{:.3}", cells.get(c).copied().unwrap_or(0.0))).collect();
            let _ = writeln!(out, "| {g} | {} |", vals.join(" | "));
        }
    }
    out
}
