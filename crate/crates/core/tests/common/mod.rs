#![allow(dead_code)]

use std::collections::BTreeSet;

use regex::Regex;

pub const HE_FIXTURE: &[u8] = include_bytes!("../fixtures/he_fixture.conllu");

/// (binyan value, sentence text, form, sent_id) for every word line carrying
/// `HebBinyan=`, found by scanning raw lines rather than parsing.
pub fn grep_binyan(bytes: &[u8]) -> Vec<(String, String, String, String)> {
    let feat = Regex::new(r"(?:^|\|)HebBinyan=([A-Z]+)(?:\||$)").unwrap();
    let word_id = Regex::new(r"^\d+\t").unwrap();
    let (mut text, mut sent_id) = (String::new(), String::new());
    let mut out = Vec::new();
    for line in std::str::from_utf8(bytes).unwrap().lines() {
        if let Some(t) = line.strip_prefix("# text = ") {
            text = t.to_string();
        } else if let Some(s) = line.strip_prefix("# sent_id = ") {
            sent_id = s.to_string();
        } else if word_id.is_match(line) {
            let cols: Vec<&str> = line.split('\t').collect();
            if let Some(c) = feat.captures(cols[5]) {
                out.push((c[1].to_string(), text.clone(), cols[1].to_string(), sent_id.clone()));
            }
        }
    }
    out
}

pub const TARGET_BINYANIM: [&str; 4] = ["PAAL", "NIFAL", "HIFIL", "HUFAL"];

pub fn grep_pool(bytes: &[u8]) -> BTreeSet<(String, String, String, String)> {
    grep_binyan(bytes).into_iter().filter(|r| TARGET_BINYANIM.contains(&r.0.as_str())).collect()
}

/// Lines that are neither comments, blank, nor multiword ranges.
pub fn word_line_count(bytes: &[u8]) -> usize {
    bytes
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty() && l[0] != b'#')
        .filter(|l| {
            let id = l.split(|b| *b == b'\t').next().unwrap();
            !id.contains(&b'-')
        })
        .count()
}

pub fn sentence_count(bytes: &[u8]) -> usize {
    bytes.split(|b| *b == b'\n').filter(|l| l.starts_with(b"# sent_id")).count()
}

use std::path::{Path, PathBuf};

use blm_core::builder::{build_dataset, BuildInput, GenerationConfig, SplitResult};
use blm_core::catalog::TemplateCatalog;
use blm_core::lexicon::load_lexicon;
use blm_core::model::{BlmInstance, Dataset, Language, LexVariation};
use blm_core::ud::{harvest_binyan, parse_conllu, BinyanPool, Scope};

pub fn lexicon_path(language: Language) -> PathBuf {
    let name = match language {
        Language::En => "en.json",
        Language::It => "it.json",
        _ => "de.json",
    };
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lexicons").join(name)
}

pub fn config(
    dataset: Dataset,
    language: Language,
    lex: LexVariation,
    train: usize,
    test: usize,
    seed: u64,
) -> GenerationConfig {
    GenerationConfig {
        dataset,
        language,
        lex_variation: lex,
        count_train: train,
        count_test: test,
        seed,
        disjoint_key: None,
        source: if dataset.is_caush() { PathBuf::from("pool.jsonl") } else { lexicon_path(language) },
        template_file: None,
    }
}

/// Pool harvested from the Hebrew fixture; Synthetic datasets project it.
pub fn fixture_pool() -> BinyanPool {
    harvest_binyan("fixture", &parse_conllu(HE_FIXTURE).unwrap(), Scope::Any).pool
}

pub fn input_for(config: &GenerationConfig) -> BuildInput {
    if config.dataset.is_caush() {
        BuildInput::Pool(fixture_pool())
    } else {
        BuildInput::Lexicon(load_lexicon(&std::fs::read(&config.source).unwrap()).unwrap())
    }
}

pub fn build(config: &GenerationConfig) -> SplitResult {
    build_dataset(config, &input_for(config), &TemplateCatalog::builtin())
        .unwrap_or_else(|e| panic!("{} {} {}: {e}", config.dataset, config.language, config.lex_variation))
}

/// Train and test instances of one generated dataset, in id order.
pub fn generate(
    dataset: Dataset,
    language: Language,
    lex: LexVariation,
    train: usize,
    test: usize,
    seed: u64,
) -> Vec<BlmInstance> {
    let r = build(&config(dataset, language, lex, train, test, seed));
    let mut all: Vec<BlmInstance> = r.train.into_iter().chain(r.test).collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    all
}
