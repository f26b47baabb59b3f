//! Dataset generation: binding sampling, template expansion, realization,
//! CausH assembly, answer shuffling and key-disjoint train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{caush_variant, expand, CatalogError, RowBindings, TemplateCatalog, TemplatePattern};
use crate::lexicon::{load_lexicon, sample_binding, sample_binding_for_verb, Lexicon, LexiconError, SampleError};
use crate::model::{
    meta, validate_instance, write_jsonl, Answer, AnswerLabel, BinyanLabel, BlmInstance, Dataset, Language,
    LexVariation, ModelError, PpKind, ValidationReport, VerbClass,
};
use crate::realize::{realize, RealizeError};
use crate::seed;
use crate::ud::{synthetic_pool, BinyanPool, PoolEntry};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Tense of every COS+ row.
pub const COSPLUS_TENSE: &str = "present";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{id}: {source}")]
    Realize {
        id: String,
        #[source]
        source: RealizeError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{binyan} pool can supply {available} distinct sentences to one instance, it needs {needed}")]
    InsufficientPool { binyan: BinyanLabel, needed: usize, available: usize },
    #[error("pool exhausted under disjointness: {0}")]
    PoolExhausted(String),
    #[error("no disjoint split with {requested} test instances; at most {max_achievable} achievable")]
    InfeasibleSplit { requested: usize, max_achievable: usize },
    #[error("{count} generated instances failed validation, first: {first:?}")]
    Invalid { count: usize, first: Box<ValidationReport> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What must not be shared between train and test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisjointKey {
    BindingSignature,
    VerbLemma,
    SentenceText,
}

impl DisjointKey {
    pub fn default_for(dataset: Dataset) -> Self {
        if dataset.is_caush() {
            DisjointKey::SentenceText
        } else {
            DisjointKey::BindingSignature
        }
    }

    /// Key values of an instance, read from its serialized fields only.
    pub fn values(self, instance: &BlmInstance) -> Vec<String> {
        let split = |key: &str| -> Vec<String> {
            instance.meta.get(key).map(|v| v.split('|').map(str::to_string).collect()).unwrap_or_default()
        };
        let mut out: Vec<String> = match self {
            DisjointKey::BindingSignature => split(meta::SIGNATURE),
            DisjointKey::VerbLemma => {
                let mut v = split(meta::CONTEXT_VERBS);
                v.extend(split(meta::ANSWER_VERBS));
                v
            }
            DisjointKey::SentenceText => {
                instance.context.iter().cloned().chain(instance.answers.iter().map(|a| a.text.clone())).collect()
            }
        };
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub dataset: Dataset,
    pub language: Language,
    pub lex_variation: LexVariation,
    pub count_train: usize,
    pub count_test: usize,
    pub seed: u64,
    /// Defaults per dataset family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disjoint_key: Option<DisjointKey>,
    /// Lexicon JSON, or binyan pool JSONL for CausH.
    pub source: PathBuf,
    /// Replaces the built-in template for (dataset, language).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_file: Option<PathBuf>,
}

impl GenerationConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, BuildError> {
        serde_json::from_slice(bytes).map_err(|e| BuildError::Config(e.to_string()))
    }

    pub fn key(&self) -> DisjointKey {
        self.disjoint_key.unwrap_or_else(|| DisjointKey::default_for(self.dataset))
    }

    pub fn total(&self) -> usize {
        self.count_train + self.count_test
    }

    pub fn check(&self) -> Result<(), BuildError> {
        let bad = |m: String| Err(BuildError::Config(m));
        if self.count_train == 0 || self.count_test == 0 {
            return bad("count_train and count_test must be positive".into());
        }
        if !self.dataset.languages().contains(&self.language) {
            return bad(format!("dataset {} is not defined for language {}", self.dataset, self.language));
        }
        if self.dataset.is_caush() && self.lex_variation == LexVariation::MinLex {
            return bad("CausH has no minlex variant: not all roots occur in all four binyanim".into());
        }
        if self.dataset.is_caush() != (self.key() == DisjointKey::SentenceText) {
            return bad(format!(
                "disjoint_key {:?} does not fit {}: sentence_text is the key for CausH and only for CausH",
                self.key(),
                self.dataset
            ));
        }
        Ok(())
    }

    /// Hash of the generation-relevant settings plus the input contents.
    /// Paths are excluded so that moving inputs does not change outputs.
    pub fn hash_with(&self, input_fingerprint: &str) -> String {
        let mut normalized = self.clone();
        normalized.source = PathBuf::new();
        normalized.template_file = None;
        normalized.disjoint_key = Some(self.key());
        let json = serde_json::to_string(&normalized).expect("config serializes");
        seed::sha256_hex(format!("{json}\n{input_fingerprint}").as_bytes())[..16].to_string()
    }
}

/// Loaded generation inputs.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum BuildInput {
    Lexicon(Lexicon),
    Pool(BinyanPool),
}

impl BuildInput {
    pub fn fingerprint(&self) -> String {
        match self {
            BuildInput::Lexicon(lex) => seed::sha256_hex(lex.to_json().as_bytes()),
            BuildInput::Pool(pool) => {
                let mut buf = Vec::new();
                pool.write_jsonl(&mut buf).expect("in-memory write");
                seed::sha256_hex(&buf)
            }
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, BuildError> {
    fs::read(path).map_err(|source| BuildError::Read { path: path.to_path_buf(), source })
}

/// Reads the source and optional template of `config`, resolving relative
/// paths against `base_dir`.
pub fn load_inputs(config: &GenerationConfig, base_dir: &Path) -> Result<(BuildInput, TemplateCatalog), BuildError> {
    let source = base_dir.join(&config.source);
    let bytes = read(&source)?;
    let input = if config.dataset.is_caush() {
        BuildInput::Pool(BinyanPool::read_jsonl(bytes.as_slice())?)
    } else {
        let lex = load_lexicon(&bytes).map_err(|mut e| {
            e.path = format!("{}:{}", source.display(), e.path);
            e
        })?;
        BuildInput::Lexicon(lex)
    };
    let mut catalog = TemplateCatalog::builtin();
    if let Some(t) = &config.template_file {
        let pattern: TemplatePattern = serde_json::from_slice(&read(&base_dir.join(t))?).map_err(CatalogError::from)?;
        let expected = TemplateCatalog::name_for(config.dataset, config.language)
            .ok_or_else(|| BuildError::Config(format!("{} takes no template file", config.dataset)))?;
        if pattern.name != expected {
            return Err(BuildError::Config(format!("template is named {:?}, expected {expected:?}", pattern.name)));
        }
        catalog.insert(pattern)?;
    }
    Ok((input, catalog))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Generate every instance, then split whole key-connected groups.
    GenerateThenSplit,
    /// Partition the source sentences first, generate each split from its part.
    PartitionThenGenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub dataset: Dataset,
    pub language: Language,
    pub lex_variation: LexVariation,
    pub disjoint_key: DisjointKey,
    pub strategy: SplitStrategy,
    pub counts: SplitCounts,
    /// Distinct key values per split.
    pub key_values: SplitCounts,
    /// Key values found in both splits; zero for every emitted dataset.
    pub shared_key_values: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Vec<BlmInstance>,
    pub test: Vec<BlmInstance>,
    pub manifest: SplitManifest,
}

impl SplitResult {
    /// Writes `train.jsonl`, `test.jsonl` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), BuildError> {
        fs::create_dir_all(dir)?;
        for (name, set) in [("train.jsonl", &self.train), ("test.jsonl", &self.test)] {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, set.iter())?;
            fs::write(dir.join(name), buf)?;
        }
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        fs::write(dir.join("manifest.json"), manifest)?;
        Ok(())
    }
}

/// Number of key values occurring in both splits.
pub fn shared_key_values(train: &[BlmInstance], test: &[BlmInstance], key: DisjointKey) -> usize {
    let train_keys: BTreeSet<String> = train.iter().flat_map(|i| key.values(i)).collect();
    let test_keys: BTreeSet<String> = test.iter().flat_map(|i| key.values(i)).collect();
    train_keys.intersection(&test_keys).count()
}

pub fn instance_id(dataset: Dataset, language: Language, lex: LexVariation, index: usize) -> String {
    format!("{dataset}-{language}-{lex}-{index:06}")
}

fn short_hash(parts: &[&str]) -> String {
    seed::sha256_hex(parts.join("|").as_bytes())[..16].to_string()
}

/// Permutes the answers with a stream derived from (seed, instance id) and
/// fixes `correct_index` and the per-answer verb metadata.
fn shuffle_answers(instance: &mut BlmInstance, answer_verbs: Vec<String>, seed: u64) {
    let mut order: Vec<usize> = (0..instance.answers.len()).collect();
    order.shuffle(&mut seed::rng(seed, &["shuffle", &instance.id]));
    let answers = std::mem::take(&mut instance.answers);
    instance.answers = order.iter().map(|&i| answers[i].clone()).collect();
    instance.correct_index = instance.answers.iter().position(|a| a.label == AnswerLabel::Correct).unwrap_or(0);
    let verbs: Vec<&str> = order.iter().map(|&i| answer_verbs[i].as_str()).collect();
    instance.meta.insert(meta::ANSWER_VERBS.into(), verbs.join("|"));
}

struct LexGen<'a> {
    config: &'a GenerationConfig,
    template: &'a TemplatePattern,
    lexicon: Lexicon,
    class: VerbClass,
    fixed_tense: Option<&'static str>,
    config_hash: String,
}

impl LexGen<'_> {
    /// Drops lexical material the template never realizes, so that
    /// signatures only distinguish what is visible in the text.
    fn restrict(&self, b: crate::catalog::Binding) -> crate::catalog::Binding {
        crate::catalog::Binding::new(
            b.verb,
            b.agent,
            b.patient,
            b.p_np.filter(|_| self.template.uses_pp(PpKind::PlainPNP)),
            b.by_np.filter(|_| self.template.uses_pp(PpKind::ByNP)),
            self.fixed_tense.map(str::to_string).unwrap_or(b.tense_key),
        )
    }

    fn instance(&self, index: usize) -> Result<BlmInstance, BuildError> {
        let c = self.config;
        let id = instance_id(c.dataset, c.language, c.lex_variation, index);
        let mut rng = seed::rng(c.seed, &["instance", &id]);
        let bindings = match c.lex_variation {
            LexVariation::MinLex => {
                let b = self.restrict(sample_binding(&self.lexicon, self.class, &mut rng)?);
                RowBindings::uniform(self.template, &b)
            }
            LexVariation::MaxLex => {
                let verbs: Vec<&str> = self.lexicon.verbs_of(self.class).map(|v| v.lemma.as_str()).collect();
                let rows = self.template.context_rows.len();
                let context = index::sample(&mut rng, verbs.len(), rows)
                    .into_iter()
                    .map(|i| Ok(self.restrict(sample_binding_for_verb(&self.lexicon, verbs[i], &mut rng)?)))
                    .collect::<Result<Vec<_>, BuildError>>()?;
                let answers = (0..self.template.answer_rows.len())
                    .map(|_| Ok(self.restrict(sample_binding(&self.lexicon, self.class, &mut rng)?)))
                    .collect::<Result<Vec<_>, BuildError>>()?;
                RowBindings { context, answers }
            }
        };
        let expanded = expand(self.template, &bindings, &self.lexicon)?;
        let realize_row = |s: &crate::catalog::BoundSentence| {
            realize(&s.spec, &s.binding, &self.lexicon).map_err(|source| BuildError::Realize { id: id.clone(), source })
        };
        let context = expanded.context.iter().map(realize_row).collect::<Result<Vec<_>, _>>()?;
        let answers = expanded
            .answers
            .iter()
            .map(|(s, label, cid)| Ok(Answer { text: realize_row(s)?, label: *label, cid: *cid }))
            .collect::<Result<Vec<_>, BuildError>>()?;

        let signatures: BTreeSet<&str> =
            bindings.context.iter().chain(&bindings.answers).map(|b| b.signature.as_str()).collect();
        let signatures: Vec<&str> = signatures.into_iter().collect();
        let signature = match c.lex_variation {
            LexVariation::MinLex => bindings.context[0].signature.clone(),
            LexVariation::MaxLex => short_hash(&signatures),
        };
        let context_verbs: Vec<&str> = bindings.context.iter().map(|b| b.verb.as_str()).collect();
        let mut instance = BlmInstance {
            id: id.clone(),
            dataset: c.dataset,
            language: c.language,
            lex: c.lex_variation,
            context,
            answers,
            correct_index: 0,
            meta: BTreeMap::from([
                (meta::SEED.to_string(), c.seed.to_string()),
                (meta::CONFIG_HASH.to_string(), self.config_hash.clone()),
                (meta::TEMPLATE.to_string(), self.template.name.clone()),
                (meta::SIGNATURE.to_string(), signature),
                (meta::CONTEXT_VERBS.to_string(), context_verbs.join("|")),
            ]),
        };
        shuffle_answers(&mut instance, bindings.answers.iter().map(|b| b.verb.clone()).collect(), c.seed);
        Ok(instance)
    }
}

fn distinct_texts(entries: &[PoolEntry]) -> usize {
    entries.iter().map(|e| e.text.as_str()).collect::<BTreeSet<_>>().len()
}

/// Draws an entry whose text is not yet used in this instance.
fn draw<'p, R: Rng + ?Sized>(
    entries: &'p [PoolEntry],
    used: &mut BTreeSet<&'p str>,
    rng: &mut R,
) -> Option<&'p PoolEntry> {
    if entries.is_empty() {
        return None;
    }
    for _ in 0..32 {
        let e = &entries[rng.gen_range(0..entries.len())];
        if used.insert(e.text.as_str()) {
            return Some(e);
        }
    }
    let free: Vec<&PoolEntry> = entries.iter().filter(|e| !used.contains(e.text.as_str())).collect();
    let e = *free.choose(rng)?;
    used.insert(e.text.as_str());
    Some(e)
}

/// Sentences one CausH instance takes from a binyan pool.
fn caush_need(binyan: BinyanLabel, target: BinyanLabel) -> usize {
    if binyan == target {
        2
    } else {
        3
    }
}

/// Finds a binyan that cannot get `need(b)` sentences at the same time as
/// every other binyan gets its own, when no text may serve twice. A text
/// with verbs of two binyanim sits in both pools, so pool sizes alone
/// overstate supply. Returns the binyan and how many it can get.
fn pool_shortfall(pool: &BinyanPool, need: impl Fn(BinyanLabel) -> usize) -> Option<(BinyanLabel, usize)> {
    let mut text_ids: HashMap<&str, usize> = HashMap::new();
    let mut slots: Vec<(BinyanLabel, Vec<usize>)> = Vec::new();
    for b in BinyanLabel::ALL {
        let mut texts: Vec<usize> = pool
            .get(*b)
            .iter()
            .map(|e| {
                let next = text_ids.len();
                *text_ids.entry(e.text.as_str()).or_insert(next)
            })
            .collect();
        texts.sort_unstable();
        texts.dedup();
        slots.extend((0..need(*b)).map(|_| (*b, texts.clone())));
    }
    fn augment(
        slot: usize,
        slots: &[(BinyanLabel, Vec<usize>)],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &t in &slots[slot].1 {
            if !seen[t] {
                seen[t] = true;
                if owner[t].is_none_or(|o| augment(o, slots, owner, seen)) {
                    owner[t] = Some(slot);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; text_ids.len()];
    let mut matched: BTreeMap<BinyanLabel, usize> = BTreeMap::new();
    for slot in 0..slots.len() {
        let mut seen = vec![false; text_ids.len()];
        if augment(slot, &slots, &mut owner, &mut seen) {
            *matched.entry(slots[slot].0).or_insert(0) += 1;
        }
    }
    BinyanLabel::ALL.iter().map(|b| (*b, matched.get(b).copied().unwrap_or(0))).find(|(b, got)| *got < need(*b))
}

/// Random draws that fail when overlapping pools run dry are retried this
/// often before giving up.
const CAUSH_ATTEMPTS: usize = 64;

/// Builds one CausH puzzle: three complete pairs, one target sentence, and
/// one answer per binyan in canonical order (not yet shuffled). No text is
/// used twice within the instance.
pub fn assemble_caush_instance<R: Rng + ?Sized>(
    pools: &BinyanPool,
    target: BinyanLabel,
    rng: &mut R,
    dataset: Dataset,
    id: &str,
) -> Result<BlmInstance, BuildError> {
    let need = |b: BinyanLabel| caush_need(b, target);
    // Scarce binyanim draw first so that shared texts go where they are needed.
    let mut order = BinyanLabel::ALL.to_vec();
    order.sort_by_key(|b| distinct_texts(pools.get(*b)).saturating_sub(need(*b)));
    let mut drawn: BTreeMap<BinyanLabel, Vec<&PoolEntry>> = BTreeMap::new();
    for attempt in 0.. {
        drawn.clear();
        let mut used: BTreeSet<&str> = BTreeSet::new();
        let complete = order.iter().all(|b| {
            (0..need(*b)).all(|_| match draw(pools.get(*b), &mut used, rng) {
                Some(e) => {
                    drawn.entry(*b).or_default().push(e);
                    true
                }
                None => false,
            })
        });
        if complete {
            break;
        }
        if attempt == 0 {
            if let Some((binyan, available)) = pool_shortfall(pools, need) {
                return Err(BuildError::InsufficientPool { binyan, needed: need(binyan), available });
            }
        }
        if attempt + 1 == CAUSH_ATTEMPTS {
            return Err(BuildError::PoolExhausted(format!("{id}: no distinct sentences after {CAUSH_ATTEMPTS} draws")));
        }
    }
    let variant = caush_variant(target);
    let mut next = |b: BinyanLabel| drawn.get_mut(&b).and_then(Vec::pop).expect("drawn per need").clone();
    let context: Vec<PoolEntry> = variant.iter().map(|b| next(*b)).collect();
    let answers: Vec<(BinyanLabel, PoolEntry)> = BinyanLabel::ALL.iter().map(|b| (*b, next(*b))).collect();
    let binyanim: Vec<&str> = variant.iter().map(|b| b.as_str()).collect();
    let sources: Vec<String> =
        context.iter().chain(answers.iter().map(|(_, e)| e)).map(|e| format!("{}#{}", e.source, e.sent_id)).collect();
    let verbs: Vec<&str> = context.iter().map(|e| e.verb.as_str()).collect();
    let answer_verbs: Vec<&str> = answers.iter().map(|(_, e)| e.verb.as_str()).collect();
    Ok(BlmInstance {
        id: id.to_string(),
        dataset,
        language: Language::He,
        lex: LexVariation::MaxLex,
        context: context.iter().map(|e| e.text.clone()).collect(),
        correct_index: answers.iter().position(|(b, _)| *b == target).expect("target is a binyan"),
        answers: answers
            .iter()
            .map(|(b, e)| Answer {
                text: e.text.clone(),
                label: if *b == target { AnswerLabel::Correct } else { AnswerLabel::Grammar },
                cid: b.candidate_id(),
            })
            .collect(),
        meta: BTreeMap::from([
            (meta::CONTEXT_BINYANIM.to_string(), binyanim.join(",")),
            (meta::SOURCES.to_string(), sources.join("|")),
            (meta::CONTEXT_VERBS.to_string(), verbs.join("|")),
            (meta::ANSWER_VERBS.to_string(), answer_verbs.join("|")),
        ]),
    })
}

fn check_pool(pool: &BinyanPool, which: &str) -> Result<(), BuildError> {
    match pool_shortfall(pool, |_| 3) {
        None => Ok(()),
        Some((binyan, available)) if which.is_empty() => {
            Err(BuildError::InsufficientPool { binyan, needed: 3, available })
        }
        Some((b, available)) => Err(BuildError::PoolExhausted(format!(
            "{which} part of the {b} pool can supply {available} distinct sentences, needs 3"
        ))),
    }
}

/// Assigns every distinct sentence text to train or test, keeping at least
/// three texts per binyan on each side.
pub fn partition_pool(
    pool: &BinyanPool,
    test_fraction: f64,
    seed: u64,
) -> Result<(BinyanPool, BinyanPool), BuildError> {
    let mut texts: Vec<&str> = pool.iter().map(|(_, e)| e.text.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    texts.shuffle(&mut seed::rng(seed, &["partition"]));
    let n_test = ((texts.len() as f64) * test_fraction).round() as usize;
    let mut test: BTreeSet<&str> = texts[..n_test.min(texts.len())].iter().copied().collect();
    // Top up the test side, preferring texts that belong to a single binyan.
    let mut memberships: HashMap<&str, usize> = HashMap::new();
    for b in BinyanLabel::ALL {
        for t in pool.get(*b).iter().map(|e| e.text.as_str()).collect::<BTreeSet<_>>() {
            *memberships.entry(t).or_insert(0) += 1;
        }
    }
    let mut candidates: BTreeMap<BinyanLabel, Vec<&str>> = BTreeMap::new();
    for b in BinyanLabel::ALL {
        let mine: BTreeSet<&str> = pool.get(*b).iter().map(|e| e.text.as_str()).collect();
        let mut list: Vec<&str> = texts.iter().copied().filter(|t| mine.contains(t)).collect();
        list.sort_by_key(|t| memberships[t]);
        list.reverse();
        candidates.insert(*b, list);
    }
    while let Some((b, _)) = pool_shortfall(&pool.filter_text(|t| test.contains(t)), |_| 3) {
        let list = candidates.get_mut(&b).expect("every binyan listed");
        match list.pop() {
            Some(t) => {
                test.insert(t);
            }
            None => break,
        }
    }
    let train_pool = pool.filter_text(|t| !test.contains(t));
    let test_pool = pool.filter_text(|t| test.contains(t));
    check_pool(&train_pool, "train")?;
    check_pool(&test_pool, "test")?;
    Ok((train_pool, test_pool))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups of instances connected through shared key values, in order of
/// their first member.
fn key_components(instances: &[BlmInstance], key: DisjointKey) -> Vec<Vec<usize>> {
    let mut uf = UnionFind((0..instances.len()).collect());
    let mut owner: HashMap<String, usize> = HashMap::new();
    for (i, inst) in instances.iter().enumerate() {
        for v in key.values(inst) {
            match owner.get(&v) {
                Some(&j) => uf.union(i, j),
                None => {
                    owner.insert(v, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..instances.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Picks component indices whose sizes sum to exactly `target`, or returns
/// the largest reachable sum below it.
fn subset_with_sum(sizes: &[usize], target: usize) -> Result<Vec<usize>, usize> {
    let mut chosen = Vec::new();
    let mut sum = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if sum + s <= target {
            chosen.push(i);
            sum += s;
        }
    }
    if sum == target {
        return Ok(chosen);
    }
    // reached[s] = component that first completed sum s.
    let mut reached: Vec<Option<usize>> = vec![None; target + 1];
    for (i, &size) in sizes.iter().enumerate() {
        if size == 0 || size > target {
            continue;
        }
        for s in (size..=target).rev() {
            let base = s - size;
            if reached[s].is_none() && (base == 0 || reached[base].is_some()) {
                reached[s] = Some(i);
            }
        }
    }
    if reached[target].is_none() {
        let best = (1..=target).rev().find(|s| reached[*s].is_some()).unwrap_or(0);
        return Err(best);
    }
    let mut out = Vec::new();
    let mut s = target;
    while s > 0 {
        let i = reached[s].expect("reconstruction follows reached sums");
        out.push(i);
        s -= sizes[i];
    }
    Ok(out)
}

/// Moves whole key-connected groups into the test split until it holds
/// exactly `count_test` instances. Deterministic given `seed`.
pub fn split(
    instances: Vec<BlmInstance>,
    count_test: usize,
    key: DisjointKey,
    seed: u64,
) -> Result<(Vec<BlmInstance>, Vec<BlmInstance>), BuildError> {
    if count_test > instances.len() {
        return Err(BuildError::InfeasibleSplit { requested: count_test, max_achievable: instances.len() });
    }
    let mut components = key_components(&instances, key);
    components.shuffle(&mut seed::rng(seed, &["split"]));
    let sizes: Vec<usize> = components.iter().map(Vec::len).collect();
    let chosen = subset_with_sum(&sizes, count_test)
        .map_err(|max_achievable| BuildError::InfeasibleSplit { requested: count_test, max_achievable })?;
    let mut in_test = vec![false; instances.len()];
    for c in chosen {
        for &i in &components[c] {
            in_test[i] = true;
        }
    }
    let (mut test, mut train) = (Vec::new(), Vec::new());
    for (inst, t) in instances.into_iter().zip(in_test) {
        if t {
            test.push(inst);
        } else {
            train.push(inst);
        }
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    test.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((train, test))
}

fn lexicon_instances(
    config: &GenerationConfig,
    lexicon: &Lexicon,
    catalog: &TemplateCatalog,
    config_hash: &str,
) -> Result<Vec<BlmInstance>, BuildError> {
    let template = catalog
        .pattern_for(config.dataset, config.language)
        .ok_or_else(|| BuildError::Config(format!("no template for {} in {}", config.dataset, config.language)))?;
    let class = config.dataset.verb_class().expect("non-CausH datasets have a verb class");
    let lexicon = lexicon.for_language(config.language)?;
    if config.lex_variation == LexVariation::MaxLex {
        let available = lexicon.verbs_of(class).count();
        if available < template.context_rows.len() {
            return Err(BuildError::Config(format!(
                "maxlex needs {} distinct {class} verbs, the lexicon has {available}",
                template.context_rows.len()
            )));
        }
    }
    let gen = LexGen {
        config,
        template,
        lexicon,
        class,
        fixed_tense: config.dataset.is_cosplus().then_some(COSPLUS_TENSE),
        config_hash: config_hash.to_string(),
    };
    (0..config.total()).into_par_iter().map(|i| gen.instance(i)).collect()
}

fn caush_instances(
    config: &GenerationConfig,
    train_pool: &BinyanPool,
    test_pool: &BinyanPool,
    config_hash: &str,
) -> Result<Vec<BlmInstance>, BuildError> {
    (0..config.total())
        .into_par_iter()
        .map(|i| {
            let id = instance_id(config.dataset, config.language, config.lex_variation, i);
            let pool = if i < config.count_train { train_pool } else { test_pool };
            let mut rng = seed::rng(config.seed, &["instance", &id]);
            let target = BinyanLabel::ALL[rng.gen_range(0..BinyanLabel::ALL.len())];
            let mut inst = assemble_caush_instance(pool, target, &mut rng, config.dataset, &id)?;
            let answer_verbs = inst.meta[meta::ANSWER_VERBS].split('|').map(str::to_string).collect();
            shuffle_answers(&mut inst, answer_verbs, config.seed);
            inst.meta.insert(meta::SEED.into(), config.seed.to_string());
            inst.meta.insert(meta::CONFIG_HASH.into(), config_hash.to_string());
            Ok(inst)
        })
        .collect()
}

/// Generates, validates and splits a dataset. Runs on the current rayon
/// pool; the output does not depend on its size.
pub fn build_dataset(
    config: &GenerationConfig,
    input: &BuildInput,
    catalog: &TemplateCatalog,
) -> Result<SplitResult, BuildError> {
    config.check()?;
    let config_hash = config.hash_with(&input.fingerprint());
    let key = config.key();
    let (instances, strategy) = match input {
        BuildInput::Lexicon(lexicon) if !config.dataset.is_caush() => {
            (lexicon_instances(config, lexicon, catalog, &config_hash)?, SplitStrategy::GenerateThenSplit)
        }
        BuildInput::Pool(pool) if config.dataset.is_caush() => {
            let pool = match config.dataset {
                Dataset::CausHSynthetic => BinyanPool::merge([synthetic_pool(pool)]),
                _ => BinyanPool::merge([pool.clone()]),
            };
            check_pool(&pool, "")?;
            let fraction = config.count_test as f64 / config.total() as f64;
            let (train_pool, test_pool) = partition_pool(&pool, fraction, config.seed)?;
            (caush_instances(config, &train_pool, &test_pool, &config_hash)?, SplitStrategy::PartitionThenGenerate)
        }
        _ => return Err(BuildError::Config(format!("wrong source kind for dataset {}", config.dataset))),
    };

    let failures: Vec<ValidationReport> = instances
        .par_iter()
        .map(|i| validate_instance(i, catalog))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|r| !r.is_valid())
        .collect();
    if let Some(first) = failures.first() {
        return Err(BuildError::Invalid { count: failures.len(), first: Box::new(first.clone()) });
    }

    let (train, test) = match strategy {
        SplitStrategy::GenerateThenSplit => split(instances, config.count_test, key, config.seed)?,
        SplitStrategy::PartitionThenGenerate => {
            let mut instances = instances;
            let test = instances.split_off(config.count_train);
            (instances, test)
        }
    };
    let shared = shared_key_values(&train, &test, key);
    if shared > 0 {
        return Err(BuildError::PoolExhausted(format!("{shared} {key:?} values shared between splits")));
    }
    let distinct = |set: &[BlmInstance]| set.iter().flat_map(|i| key.values(i)).collect::<BTreeSet<_>>().len();
    let manifest = SplitManifest {
        code_version: CODE_VERSION.to_string(),
        config_hash,
        seed: config.seed,
        dataset: config.dataset,
        language: config.language,
        lex_variation: config.lex_variation,
        disjoint_key: key,
        strategy,
        counts: SplitCounts { train: train.len(), test: test.len() },
        key_values: SplitCounts { train: distinct(&train), test: distinct(&test) },
        shared_key_values: shared,
    };
    log::info!(
        "{}: {} train / {} test, {} components by {:?}",
        config.dataset,
        train.len(),
        test.len(),
        manifest.key_values.train + manifest.key_values.test,
        key
    );
    Ok(SplitResult { train, test, manifest })
}
