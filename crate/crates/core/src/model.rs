//! Shared domain types, the answer error taxonomy and structural validation
//! of generated puzzles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::caush_variant;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no template registered for dataset {dataset} in language {language}")]
    UnknownTemplate { dataset: String, language: String },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $tag:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $tag)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $tag),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($tag => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownTag(other.to_string())),
                }
            }
        }
    };
}

string_enum!(RoleLabel { Agent => "agent", Patient => "patient" });
string_enum!(Voice { Active => "active", Passive => "passive" });
string_enum!(
    /// `PlainPNP` is the peripheral prepositional phrase ("on the stove"),
    /// `ByNP` either a by-headed filler ("by mistake") or a by-argument.
    PpKind { PlainPNP => "p_np", ByNP => "by_np" }
);
string_enum!(RelClauseKind {
    SubjectRelAgent => "subject_rel_agent",
    ObjectRel => "object_rel",
    SubjectRelPatient => "subject_rel_patient",
    None => "none",
});
string_enum!(AnswerLabel { Correct => "correct", Sequence => "sequence", Grammar => "grammar" });
string_enum!(Case { Nom => "nom", Acc => "acc", Unmarked => "unmarked" });
string_enum!(Gender { M => "m", F => "f", N => "n" });
string_enum!(Number { Sg => "sg", Pl => "pl" });
string_enum!(VerbClass { Cos => "cos", Od => "od", Other => "other" });
string_enum!(LexVariation { MinLex => "minlex", MaxLex => "maxlex" });
string_enum!(Dataset {
    Cos => "cos",
    Od => "od",
    CosPlusT2I => "cosplus_t2i",
    CosPlusI2T => "cosplus_i2t",
    CausHNatural => "caush_natural",
    CausHSynthetic => "caush_synthetic",
});
string_enum!(Language {
    En => "en",
    It => "it",
    DeCase => "de_case",
    DeMix => "de_mix",
    He => "he",
});
string_enum!(
    /// The four Hebrew binyanim used by the CausH puzzles, tagged with their
    /// UD `HebBinyan` feature values.
    BinyanLabel { Paal => "PAAL", Nifal => "NIFAL", Hifil => "HIFIL", Hufal => "HUFAL" }
);

#[allow(clippy::derivable_impls)]
impl Default for Case {
    fn default() -> Self {
        Case::Unmarked
    }
}

impl BinyanLabel {
    /// Candidate id of this binyan in a CausH answer set (1-based, canonical order).
    pub fn candidate_id(self) -> u8 {
        match self {
            BinyanLabel::Paal => 1,
            BinyanLabel::Nifal => 2,
            BinyanLabel::Hifil => 3,
            BinyanLabel::Hufal => 4,
        }
    }

    pub fn from_candidate_id(cid: u8) -> Option<Self> {
        BinyanLabel::ALL.get(usize::from(cid).checked_sub(1)?).copied()
    }
}

impl Dataset {
    pub fn is_caush(self) -> bool {
        matches!(self, Dataset::CausHNatural | Dataset::CausHSynthetic)
    }

    pub fn is_cosplus(self) -> bool {
        matches!(self, Dataset::CosPlusT2I | Dataset::CosPlusI2T)
    }

    /// Languages the dataset is defined for.
    pub fn languages(self) -> &'static [Language] {
        match self {
            Dataset::Cos | Dataset::Od => &[Language::En, Language::It],
            Dataset::CosPlusT2I | Dataset::CosPlusI2T => {
                &[Language::En, Language::It, Language::DeCase, Language::DeMix]
            }
            Dataset::CausHNatural | Dataset::CausHSynthetic => &[Language::He],
        }
    }

    pub fn context_len(self) -> usize {
        match self {
            Dataset::Cos | Dataset::Od => 7,
            Dataset::CosPlusT2I | Dataset::CosPlusI2T => 4,
            Dataset::CausHNatural | Dataset::CausHSynthetic => 7,
        }
    }

    /// The verb class every lexical binding of this dataset must belong to.
    pub fn verb_class(self) -> Option<VerbClass> {
        match self {
            Dataset::Cos | Dataset::CosPlusT2I | Dataset::CosPlusI2T => Some(VerbClass::Cos),
            Dataset::Od => Some(VerbClass::Od),
            Dataset::CausHNatural | Dataset::CausHSynthetic => None,
        }
    }
}

/// One cell of a sentence schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlotSpec {
    Np {
        role: RoleLabel,
        #[serde(default)]
        case: Case,
    },
    Verb {
        voice: Voice,
        /// Fixed tense for this cell; `None` takes the binding's tense.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tense_key: Option<String>,
    },
    Pp {
        pp_kind: PpKind,
        /// For by-phrases over an argument ("by the chef").
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pp_arg_role: Option<RoleLabel>,
    },
    RelMarker {
        /// Case of the relativized position.
        #[serde(default)]
        case: Case,
    },
    SiClitic,
}

impl SlotSpec {
    pub fn np(role: RoleLabel) -> Self {
        SlotSpec::Np { role, case: Case::Unmarked }
    }

    pub fn np_case(role: RoleLabel, case: Case) -> Self {
        SlotSpec::Np { role, case }
    }

    pub fn verb(voice: Voice) -> Self {
        SlotSpec::Verb { voice, tense_key: None }
    }

    pub fn p_np() -> Self {
        SlotSpec::Pp { pp_kind: PpKind::PlainPNP, pp_arg_role: None }
    }

    pub fn by_np() -> Self {
        SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: None }
    }

    pub fn by_arg(role: RoleLabel) -> Self {
        SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: Some(role) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceSpec {
    pub slots: Vec<SlotSpec>,
    #[serde(default = "no_rel")]
    pub rel_kind: RelClauseKind,
}

fn no_rel() -> RelClauseKind {
    RelClauseKind::None
}

impl SentenceSpec {
    pub fn new(slots: Vec<SlotSpec>) -> Self {
        SentenceSpec { slots, rel_kind: RelClauseKind::None }
    }

    pub fn relative(slots: Vec<SlotSpec>, rel_kind: RelClauseKind) -> Self {
        SentenceSpec { slots, rel_kind }
    }

    pub fn has_si(&self) -> bool {
        self.slots.iter().any(|s| matches!(s, SlotSpec::SiClitic))
    }

    /// Structural checks: at most one verb, RelMarker present iff a relative kind is set.
    pub fn check(&self) -> Result<(), String> {
        let verbs = self.slots.iter().filter(|s| matches!(s, SlotSpec::Verb { .. })).count();
        if verbs > 1 {
            return Err(format!("{verbs} verb slots"));
        }
        let rels = self.slots.iter().filter(|s| matches!(s, SlotSpec::RelMarker { .. })).count();
        let expected = if self.rel_kind == RelClauseKind::None { 0 } else { 1 };
        if rels != expected {
            return Err(format!("{rels} relative markers with rel_kind {}", self.rel_kind));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub text: String,
    pub label: AnswerLabel,
    pub cid: u8,
}

/// One puzzle as written to dataset JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlmInstance {
    pub id: String,
    pub dataset: Dataset,
    pub language: Language,
    pub lex: LexVariation,
    pub context: Vec<String>,
    pub answers: Vec<Answer>,
    pub correct_index: usize,
    pub meta: BTreeMap<String, String>,
}

pub mod meta {
    pub const SEED: &str = "seed";
    pub const CONFIG_HASH: &str = "config_hash";
    pub const SIGNATURE: &str = "signature";
    pub const TEMPLATE: &str = "template";
    /// `|`-separated verb lemmas, one per context row.
    pub const CONTEXT_VERBS: &str = "context_verbs";
    /// `|`-separated verb lemmas, one per stored answer.
    pub const ANSWER_VERBS: &str = "answer_verbs";
    /// `,`-separated binyan tags of the seven CausH context sentences.
    pub const CONTEXT_BINYANIM: &str = "context_binyanim";
    /// `|`-separated `source#sent_id` references (CausH).
    pub const SOURCES: &str = "sources";
}

impl BlmInstance {
    pub fn correct(&self) -> Option<&Answer> {
        self.answers.get(self.correct_index)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Reads instances from JSONL, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<BlmInstance>, ModelError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = BlmInstance::from_json_line(&line).map_err(|source| ModelError::Json { line: idx + 1, source })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_jsonl<'a, W, I>(mut writer: W, instances: I) -> std::io::Result<()>
where
    W: std::io::Write,
    I: IntoIterator<Item = &'a BlmInstance>,
{
    for inst in instances {
        writer.write_all(inst.to_json_line().as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub instance_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule_code: &str) -> bool {
        self.violations.iter().any(|v| v.rule_code == rule_code)
    }

    fn push(&mut self, rule_code: &str, message: impl Into<String>) {
        self.violations.push(Violation { rule_code: rule_code.to_string(), message: message.into() });
    }
}

/// What validation needs to know about a template: its context length and
/// answer-set layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateShape {
    pub context_len: usize,
    /// Candidate ids in canonical order.
    pub candidate_ids: Vec<u8>,
    pub labels: BTreeMap<AnswerLabel, usize>,
    /// Per-candidate label when it does not depend on the instance.
    pub fixed_labels: Option<BTreeMap<u8, AnswerLabel>>,
}

impl TemplateShape {
    pub fn from_rows(context_len: usize, rows: impl IntoIterator<Item = (AnswerLabel, u8)>) -> Self {
        let mut labels = BTreeMap::new();
        let mut fixed = BTreeMap::new();
        let mut candidate_ids = Vec::new();
        for (label, cid) in rows {
            *labels.entry(label).or_insert(0) += 1;
            fixed.insert(cid, label);
            candidate_ids.push(cid);
        }
        TemplateShape { context_len, candidate_ids, labels, fixed_labels: Some(fixed) }
    }

    /// CausH layout: one candidate per binyan, the target one correct.
    pub fn caush() -> Self {
        TemplateShape {
            context_len: 7,
            candidate_ids: BinyanLabel::ALL.iter().map(|b| b.candidate_id()).collect(),
            labels: BTreeMap::from([(AnswerLabel::Correct, 1), (AnswerLabel::Grammar, 3)]),
            fixed_labels: None,
        }
    }
}

pub trait TemplateRegistry {
    fn shape(&self, dataset: Dataset, language: Language) -> Result<TemplateShape, ModelError>;
}

/// Expected answer-label counts for a dataset's answer set.
pub fn label_multiset(dataset: Dataset, language: Language) -> Result<BTreeMap<AnswerLabel, usize>, ModelError> {
    let unknown = || ModelError::UnknownTemplate { dataset: dataset.to_string(), language: language.to_string() };
    if !dataset.languages().contains(&language) {
        return Err(unknown());
    }
    let counts: &[(AnswerLabel, usize)] = match (dataset, language) {
        (Dataset::Cos | Dataset::Od, Language::It) => {
            &[(AnswerLabel::Correct, 1), (AnswerLabel::Grammar, 5), (AnswerLabel::Sequence, 4)]
        }
        (Dataset::Cos | Dataset::Od, _) => {
            &[(AnswerLabel::Correct, 1), (AnswerLabel::Grammar, 3), (AnswerLabel::Sequence, 4)]
        }
        (Dataset::CosPlusT2I | Dataset::CosPlusI2T, _) => {
            &[(AnswerLabel::Correct, 1), (AnswerLabel::Grammar, 1), (AnswerLabel::Sequence, 1)]
        }
        (Dataset::CausHNatural | Dataset::CausHSynthetic, _) => &[(AnswerLabel::Correct, 1), (AnswerLabel::Grammar, 3)],
    };
    Ok(counts.iter().copied().collect())
}

fn split_meta<'a>(instance: &'a BlmInstance, key: &str, sep: char) -> Option<Vec<&'a str>> {
    instance.meta.get(key).map(|v| v.split(sep).collect())
}

/// Checks an instance against the structural rules of its template.
pub fn validate_instance(
    instance: &BlmInstance,
    registry: &dyn TemplateRegistry,
) -> Result<ValidationReport, ModelError> {
    let shape = registry.shape(instance.dataset, instance.language)?;
    let mut report = ValidationReport { instance_id: instance.id.clone(), violations: Vec::new() };

    if instance.context.len() != shape.context_len {
        report.push(
            "context-length",
            format!("expected {} context sentences, found {}", shape.context_len, instance.context.len()),
        );
    }
    if instance.context.iter().chain(instance.answers.iter().map(|a| &a.text)).any(|t| t.trim().is_empty()) {
        report.push("empty-text", "empty sentence");
    }

    let n_correct = instance.answers.iter().filter(|a| a.label == AnswerLabel::Correct).count();
    if n_correct != 1 {
        report.push("one-correct", format!("{n_correct} answers labeled correct"));
    }
    match instance.answers.get(instance.correct_index) {
        Some(a) if a.label == AnswerLabel::Correct => {}
        Some(a) => report.push("correct-index", format!("answer {} is labeled {}", instance.correct_index, a.label)),
        None => report.push(
            "correct-index",
            format!("index {} out of range for {} answers", instance.correct_index, instance.answers.len()),
        ),
    }

    let cids: Vec<u8> = instance.answers.iter().map(|a| a.cid).collect();
    let cid_set: BTreeSet<u8> = cids.iter().copied().collect();
    let expected_cids: BTreeSet<u8> = shape.candidate_ids.iter().copied().collect();
    if cid_set.len() != cids.len() || cid_set != expected_cids {
        report.push(
            "candidate-ids",
            format!("candidate ids {cids:?} do not match template ids {:?}", shape.candidate_ids),
        );
    }

    let mut labels = BTreeMap::new();
    for a in &instance.answers {
        *labels.entry(a.label).or_insert(0usize) += 1;
    }
    if labels != shape.labels {
        report.push("label-multiset", format!("labels {labels:?}, expected {:?}", shape.labels));
    }
    if let Some(fixed) = &shape.fixed_labels {
        for a in &instance.answers {
            if let Some(expected) = fixed.get(&a.cid) {
                if *expected != a.label {
                    report.push(
                        "candidate-label",
                        format!("candidate {} labeled {}, template says {}", a.cid, a.label, expected),
                    );
                }
            }
        }
    }

    if instance.dataset.is_caush() {
        validate_caush(instance, &mut report);
    } else {
        validate_lemmas(instance, &mut report);
    }
    Ok(report)
}

fn validate_caush(instance: &BlmInstance, report: &mut ValidationReport) {
    if instance.lex != LexVariation::MaxLex {
        report.push("lex-variation", "CausH puzzles exist only in maxlex");
    }
    let binyanim: Vec<Option<BinyanLabel>> =
        instance.answers.iter().map(|a| BinyanLabel::from_candidate_id(a.cid)).collect();
    let covered: BTreeSet<BinyanLabel> = binyanim.iter().flatten().copied().collect();
    if binyanim.len() != 4 || covered.len() != 4 || binyanim.iter().any(Option::is_none) {
        report.push("binyan-coverage", format!("answer candidates {:?} do not cover each binyan once", binyanim));
    }
    for a in &instance.answers {
        if a.label == AnswerLabel::Sequence {
            report.push("caush-label", format!("candidate {} labeled sequence", a.cid));
        }
    }
    let mut seen = BTreeSet::new();
    for t in instance.context.iter().chain(instance.answers.iter().map(|a| &a.text)) {
        if !seen.insert(t.as_str()) {
            report.push("duplicate-text", format!("sentence used twice: {t}"));
        }
    }

    let target = instance.correct().and_then(|a| BinyanLabel::from_candidate_id(a.cid));
    let context: Option<Vec<BinyanLabel>> =
        split_meta(instance, meta::CONTEXT_BINYANIM, ',').and_then(|v| v.into_iter().map(|s| s.parse().ok()).collect());
    match (target, context) {
        (Some(target), Some(context)) => {
            if context.as_slice() != caush_variant(target).as_slice() {
                report.push(
                    "binyan-sequence",
                    format!("context binyanim {context:?} do not follow the {target} variant"),
                );
            }
        }
        (_, None) => report.push("meta", format!("missing or malformed {}", meta::CONTEXT_BINYANIM)),
        (None, _) => {}
    }
}

fn validate_lemmas(instance: &BlmInstance, report: &mut ValidationReport) {
    let (Some(ctx), Some(ans)) =
        (split_meta(instance, meta::CONTEXT_VERBS, '|'), split_meta(instance, meta::ANSWER_VERBS, '|'))
    else {
        report.push("meta", "missing verb lemma metadata");
        return;
    };
    if ctx.len() != instance.context.len() || ans.len() != instance.answers.len() {
        report.push("meta", "verb lemma metadata does not match row counts");
        return;
    }
    match instance.lex {
        LexVariation::MinLex => {
            let lemmas: BTreeSet<&str> = ctx.iter().chain(ans.iter()).copied().collect();
            if lemmas.len() != 1 {
                report.push("minlex-lemma", format!("minlex instance uses verbs {lemmas:?}"));
            }
        }
        LexVariation::MaxLex => {
            let distinct: BTreeSet<&str> = ctx.iter().copied().collect();
            if distinct.len() != ctx.len() {
                report.push("maxlex-lemma", format!("context verbs repeat: {ctx:?}"));
            }
        }
    }
}
