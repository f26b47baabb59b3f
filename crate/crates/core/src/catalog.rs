//! Built-in puzzle templates and their expansion against lexical bindings.
//!
//! A template is data: a fixed list of context-row schemas plus a labeled
//! answer-candidate list. The built-in catalog covers the COS/OD (type A),
//! COS+ T2I/I2T (type B) and standalone type C templates; additional
//! templates can be loaded from JSON with the same field names.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::model::{
    AnswerLabel, BinyanLabel, Case, Dataset, Language, ModelError, PpKind, RelClauseKind, RoleLabel, SentenceSpec,
    SlotSpec, TemplateRegistry, TemplateShape, VerbClass, Voice,
};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("template {template} is not defined for language {language}")]
    UnsupportedLanguage { template: String, language: Language },
    #[error("invalid template {name}: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("template json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected {expected} bindings for {what}, got {got}")]
    BindingCount { what: &'static str, expected: usize, got: usize },
    #[error("verb {verb} has class {found}, template requires {required}")]
    VerbClassMismatch { verb: String, found: VerbClass, required: VerbClass },
    #[error("binding refers to unknown {kind} {key:?}")]
    MissingKey { kind: &'static str, key: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Operators peripheral to the phenomenon (PP alternation).
    TypeA,
    /// Linguistic diagnostics (relative clauses).
    TypeB,
    /// Both.
    TypeC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    T2I,
    I2T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRow {
    pub spec: SentenceSpec,
    pub label: AnswerLabel,
    pub cid: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePattern {
    pub name: String,
    pub kind: TemplateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_class: Option<VerbClass>,
    pub context_rows: Vec<SentenceSpec>,
    pub answer_rows: Vec<AnswerRow>,
}

impl TemplatePattern {
    pub fn check(&self) -> Result<(), CatalogError> {
        let invalid = |reason: String| CatalogError::InvalidTemplate { name: self.name.clone(), reason };
        let correct = self.answer_rows.iter().filter(|r| r.label == AnswerLabel::Correct).count();
        if correct != 1 {
            return Err(invalid(format!("{correct} correct answer rows")));
        }
        let cids: BTreeSet<u8> = self.answer_rows.iter().map(|r| r.cid).collect();
        if cids.len() != self.answer_rows.len() {
            return Err(invalid("duplicate candidate ids".into()));
        }
        if self.context_rows.is_empty() {
            return Err(invalid("no context rows".into()));
        }
        for (i, spec) in self.context_rows.iter().chain(self.answer_rows.iter().map(|r| &r.spec)).enumerate() {
            spec.check().map_err(|e| invalid(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn correct_row(&self) -> &AnswerRow {
        self.answer_rows
            .iter()
            .find(|r| r.label == AnswerLabel::Correct)
            .expect("checked templates have one correct row")
    }

    pub fn shape(&self) -> TemplateShape {
        TemplateShape::from_rows(self.context_rows.len(), self.answer_rows.iter().map(|r| (r.label, r.cid)))
    }

    pub fn label_multiset(&self) -> BTreeMap<AnswerLabel, usize> {
        self.shape().labels
    }

    pub fn uses_pp(&self, kind: PpKind) -> bool {
        self.context_rows
            .iter()
            .chain(self.answer_rows.iter().map(|r| &r.spec))
            .flat_map(|s| &s.slots)
            .any(|slot| matches!(slot, SlotSpec::Pp { pp_kind, pp_arg_role: None } if *pp_kind == kind))
    }
}

use RoleLabel::{Agent as Ag, Patient as Pat};

fn row(slots: Vec<SlotSpec>) -> SentenceSpec {
    SentenceSpec::new(slots)
}

/// Intransitive active row, with the si clitic where the language marks it.
fn intransitive(subject: RoleLabel, si: bool, tail: Option<SlotSpec>) -> SentenceSpec {
    let mut slots = vec![SlotSpec::np(subject)];
    if si {
        slots.push(SlotSpec::SiClitic);
    }
    slots.push(SlotSpec::verb(Voice::Active));
    slots.extend(tail);
    row(slots)
}

/// COS or OD context and answer schemas for English or Italian.
pub fn cos_od_template(language: Language, verb_class: VerbClass) -> Result<TemplatePattern, CatalogError> {
    let class_tag = match verb_class {
        VerbClass::Cos => "cos",
        VerbClass::Od => "od",
        VerbClass::Other => {
            return Err(CatalogError::InvalidTemplate {
                name: "cos/od".into(),
                reason: "verb class must be cos or od".into(),
            })
        }
    };
    let italian = match language {
        Language::En => false,
        Language::It => true,
        other => return Err(CatalogError::UnsupportedLanguage { template: class_tag.into(), language: other }),
    };
    let cos = verb_class == VerbClass::Cos;
    let act = || SlotSpec::verb(Voice::Active);
    let pass = || SlotSpec::verb(Voice::Passive);

    let mut context_rows = vec![
        row(vec![SlotSpec::np(Ag), act(), SlotSpec::np(Pat), SlotSpec::p_np()]),
        row(vec![SlotSpec::np(Ag), act(), SlotSpec::np(Pat), SlotSpec::by_np()]),
        row(vec![SlotSpec::np(Pat), pass(), SlotSpec::by_arg(Ag), SlotSpec::p_np()]),
        row(vec![SlotSpec::np(Pat), pass(), SlotSpec::by_arg(Ag), SlotSpec::by_np()]),
        row(vec![SlotSpec::np(Pat), pass(), SlotSpec::p_np()]),
        row(vec![SlotSpec::np(Pat), pass(), SlotSpec::by_np()]),
    ];
    context_rows.push(if cos {
        intransitive(Pat, italian, Some(SlotSpec::p_np()))
    } else {
        intransitive(Ag, false, Some(SlotSpec::p_np()))
    });

    use AnswerLabel::{Correct as C, Grammar as G, Sequence as S};
    let mut answers = vec![
        (intransitive(Pat, italian, Some(SlotSpec::by_np())), if cos { C } else { G }),
        (intransitive(Ag, italian, Some(SlotSpec::by_np())), if cos || italian { G } else { C }),
        (row(vec![SlotSpec::np(Pat), pass(), SlotSpec::by_arg(Ag)]), S),
        (row(vec![SlotSpec::np(Ag), pass(), SlotSpec::by_arg(Pat)]), S),
        (row(vec![SlotSpec::np(Pat), act(), SlotSpec::np(Ag)]), S),
        (row(vec![SlotSpec::np(Ag), act(), SlotSpec::np(Pat)]), S),
        (row(vec![SlotSpec::np(Pat), act(), SlotSpec::by_arg(Ag)]), G),
        (row(vec![SlotSpec::np(Ag), act(), SlotSpec::by_arg(Pat)]), G),
    ];
    if italian {
        answers.push((intransitive(Pat, false, Some(SlotSpec::by_np())), G));
        answers.push((intransitive(Ag, false, Some(SlotSpec::by_np())), if cos { G } else { C }));
    }

    let pattern = TemplatePattern {
        name: format!("{class_tag}-{language}"),
        kind: TemplateKind::TypeA,
        verb_class: Some(verb_class),
        context_rows,
        answer_rows: answers
            .into_iter()
            .enumerate()
            .map(|(i, (spec, label))| AnswerRow { spec, label, cid: i as u8 + 1 })
            .collect(),
    };
    pattern.check()?;
    Ok(pattern)
}

fn svo() -> SentenceSpec {
    row(vec![SlotSpec::np_case(Ag, Case::Nom), SlotSpec::verb(Voice::Active), SlotSpec::np_case(Pat, Case::Acc)])
}

fn reverse_role() -> SentenceSpec {
    row(vec![SlotSpec::np_case(Pat, Case::Acc), SlotSpec::verb(Voice::Active), SlotSpec::np_case(Ag, Case::Nom)])
}

fn cosplus_intransitive(subject: RoleLabel) -> SentenceSpec {
    row(vec![SlotSpec::np_case(subject, Case::Nom), SlotSpec::SiClitic, SlotSpec::verb(Voice::Active)])
}

fn subject_rel_agent() -> SentenceSpec {
    SentenceSpec::relative(
        vec![
            SlotSpec::np_case(Ag, Case::Nom),
            SlotSpec::RelMarker { case: Case::Nom },
            SlotSpec::verb(Voice::Active),
            SlotSpec::np_case(Pat, Case::Acc),
        ],
        RelClauseKind::SubjectRelAgent,
    )
}

fn object_rel() -> SentenceSpec {
    SentenceSpec::relative(
        vec![
            SlotSpec::np_case(Pat, Case::Acc),
            SlotSpec::RelMarker { case: Case::Acc },
            SlotSpec::np_case(Ag, Case::Nom),
            SlotSpec::verb(Voice::Active),
        ],
        RelClauseKind::ObjectRel,
    )
}

fn subject_rel_patient() -> SentenceSpec {
    SentenceSpec::relative(
        vec![
            SlotSpec::np_case(Pat, Case::Nom),
            SlotSpec::RelMarker { case: Case::Nom },
            SlotSpec::SiClitic,
            SlotSpec::verb(Voice::Active),
        ],
        RelClauseKind::SubjectRelPatient,
    )
}

/// Relative-clause diagnostic templates over one COS verb.
pub fn cosplus_template(direction: Direction) -> TemplatePattern {
    use AnswerLabel::{Correct as C, Grammar as G, Sequence as S};
    let (name, context_rows, answers) = match direction {
        Direction::T2I => (
            "cosplus-t2i",
            vec![svo(), subject_rel_agent(), object_rel(), subject_rel_patient()],
            vec![(cosplus_intransitive(Ag), G), (cosplus_intransitive(Pat), C), (reverse_role(), S)],
        ),
        Direction::I2T => (
            "cosplus-i2t",
            vec![cosplus_intransitive(Pat), subject_rel_patient(), object_rel(), subject_rel_agent()],
            vec![(cosplus_intransitive(Ag), S), (svo(), C), (reverse_role(), G)],
        ),
    };
    TemplatePattern {
        name: name.into(),
        kind: TemplateKind::TypeB,
        verb_class: Some(VerbClass::Cos),
        context_rows,
        answer_rows: answers
            .into_iter()
            .enumerate()
            .map(|(i, (spec, label))| AnswerRow { spec, label, cid: i as u8 + 1 })
            .collect(),
    }
}

/// Standalone English type C template mixing tense with relatives. Not tied
/// to a shipped dataset.
pub fn type_c_template() -> TemplatePattern {
    let tensed = |tense: &str| SlotSpec::Verb { voice: Voice::Active, tense_key: Some(tense.into()) };
    let rel = |slots, kind| SentenceSpec::relative(slots, kind);
    TemplatePattern {
        name: "type-c-en".into(),
        kind: TemplateKind::TypeC,
        verb_class: Some(VerbClass::Cos),
        context_rows: vec![
            row(vec![SlotSpec::np(Ag), tensed("future"), SlotSpec::np(Pat), SlotSpec::p_np()]),
            row(vec![SlotSpec::np(Pat), tensed("future"), SlotSpec::p_np()]),
            rel(
                vec![
                    SlotSpec::np(Ag),
                    SlotSpec::RelMarker { case: Case::Nom },
                    tensed("past"),
                    SlotSpec::np(Pat),
                    SlotSpec::p_np(),
                ],
                RelClauseKind::SubjectRelAgent,
            ),
            rel(
                vec![SlotSpec::np(Pat), SlotSpec::RelMarker { case: Case::Nom }, tensed("past"), SlotSpec::p_np()],
                RelClauseKind::SubjectRelPatient,
            ),
            row(vec![SlotSpec::np(Ag), tensed("present"), SlotSpec::np(Pat)]),
        ],
        answer_rows: vec![
            AnswerRow { spec: row(vec![SlotSpec::np(Pat), tensed("past")]), label: AnswerLabel::Correct, cid: 1 },
            AnswerRow { spec: row(vec![SlotSpec::np(Ag), tensed("past")]), label: AnswerLabel::Grammar, cid: 2 },
            AnswerRow {
                spec: row(vec![SlotSpec::np(Pat), tensed("past"), SlotSpec::np(Ag)]),
                label: AnswerLabel::Sequence,
                cid: 3,
            },
        ],
    }
}

/// Short constituent gloss of a schema row, e.g. "Pat Pass by-Ag".
pub fn describe(spec: &SentenceSpec) -> String {
    let role = |r: RoleLabel| match r {
        RoleLabel::Agent => "Ag",
        RoleLabel::Patient => "Pat",
    };
    spec.slots
        .iter()
        .map(|slot| match slot {
            SlotSpec::Np { role: r, .. } => role(*r).to_string(),
            SlotSpec::Verb { voice: Voice::Active, .. } => "Akt".into(),
            SlotSpec::Verb { voice: Voice::Passive, .. } => "Pass".into(),
            SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: None } => "by-NP".into(),
            SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: Some(r) } => format!("by-{}", role(*r)),
            SlotSpec::Pp { pp_kind: PpKind::PlainPNP, .. } => "P-NP".into(),
            SlotSpec::RelMarker { .. } => "rel".into(),
            SlotSpec::SiClitic => "SI".into(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Binyan labels of the seven CausH context sentences for a given target:
/// three adjacent pairs over the other binyanim, then one target sentence.
pub fn caush_variant(target: BinyanLabel) -> [BinyanLabel; 7] {
    let mut seq = [target; 7];
    let others = BinyanLabel::ALL.iter().copied().filter(|b| *b != target);
    for (i, b) in others.enumerate() {
        seq[2 * i] = b;
        seq[2 * i + 1] = b;
    }
    seq
}

/// The lexical material for one realized row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub verb: String,
    pub agent: String,
    pub patient: String,
    pub p_np: Option<String>,
    pub by_np: Option<String>,
    pub tense_key: String,
    pub signature: String,
}

impl Binding {
    pub fn new(
        verb: impl Into<String>,
        agent: impl Into<String>,
        patient: impl Into<String>,
        p_np: Option<String>,
        by_np: Option<String>,
        tense_key: impl Into<String>,
    ) -> Self {
        let mut b = Binding {
            verb: verb.into(),
            agent: agent.into(),
            patient: patient.into(),
            p_np,
            by_np,
            tense_key: tense_key.into(),
            signature: String::new(),
        };
        b.signature = b.compute_signature();
        b
    }

    pub fn with_tense(mut self, tense_key: &str) -> Self {
        self.tense_key = tense_key.to_string();
        self.signature = self.compute_signature();
        self
    }

    fn compute_signature(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.verb.as_str(),
            self.agent.as_str(),
            self.patient.as_str(),
            self.p_np.as_deref().unwrap_or("\u{0}"),
            self.by_np.as_deref().unwrap_or("\u{0}"),
            self.tense_key.as_str(),
        ] {
            h.update(part.as_bytes());
            h.update([0x1f]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// One binding per context row and per answer row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBindings {
    pub context: Vec<Binding>,
    pub answers: Vec<Binding>,
}

impl RowBindings {
    /// MinLex: the same binding on every row.
    pub fn uniform(template: &TemplatePattern, binding: &Binding) -> Self {
        RowBindings {
            context: vec![binding.clone(); template.context_rows.len()],
            answers: vec![binding.clone(); template.answer_rows.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundSentence {
    pub spec: SentenceSpec,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expanded {
    pub context: Vec<BoundSentence>,
    pub answers: Vec<(BoundSentence, AnswerLabel, u8)>,
}

fn bind(spec: &SentenceSpec, binding: &Binding) -> BoundSentence {
    let mut spec = spec.clone();
    for slot in &mut spec.slots {
        if let SlotSpec::Verb { tense_key, .. } = slot {
            if tense_key.is_none() {
                *tense_key = Some(binding.tense_key.clone());
            }
        }
    }
    BoundSentence { spec, binding: binding.clone() }
}

fn check_binding(template: &TemplatePattern, binding: &Binding, lexicon: &Lexicon) -> Result<(), CatalogError> {
    let missing = |kind: &'static str, key: &str| CatalogError::MissingKey { kind, key: key.to_string() };
    let verb = lexicon.verb(&binding.verb).ok_or_else(|| missing("verb", &binding.verb))?;
    if let Some(required) = template.verb_class {
        if verb.class != required {
            return Err(CatalogError::VerbClassMismatch { verb: verb.lemma.clone(), found: verb.class, required });
        }
    }
    lexicon.agent(&binding.agent).ok_or_else(|| missing("agent", &binding.agent))?;
    lexicon.patient(&binding.patient).ok_or_else(|| missing("patient", &binding.patient))?;
    for (kind, filler, name) in
        [(PpKind::PlainPNP, &binding.p_np, "p_np filler"), (PpKind::ByNP, &binding.by_np, "by_np filler")]
    {
        if template.uses_pp(kind) {
            let f = filler.as_deref().ok_or_else(|| missing(name, "<none>"))?;
            if !lexicon.has_filler(kind, f) {
                return Err(missing(name, f));
            }
        }
    }
    Ok(())
}

/// Fills every schema row with its binding. Structure comes from the schema
/// only; bindings contribute lexical keys and the default tense.
pub fn expand(template: &TemplatePattern, bindings: &RowBindings, lexicon: &Lexicon) -> Result<Expanded, CatalogError> {
    if bindings.context.len() != template.context_rows.len() {
        return Err(CatalogError::BindingCount {
            what: "context rows",
            expected: template.context_rows.len(),
            got: bindings.context.len(),
        });
    }
    if bindings.answers.len() != template.answer_rows.len() {
        return Err(CatalogError::BindingCount {
            what: "answer rows",
            expected: template.answer_rows.len(),
            got: bindings.answers.len(),
        });
    }
    for b in bindings.context.iter().chain(&bindings.answers) {
        check_binding(template, b, lexicon)?;
    }
    Ok(Expanded {
        context: template.context_rows.iter().zip(&bindings.context).map(|(s, b)| bind(s, b)).collect(),
        answers: template
            .answer_rows
            .iter()
            .zip(&bindings.answers)
            .map(|(r, b)| (bind(&r.spec, b), r.label, r.cid))
            .collect(),
    })
}

/// Named templates: the built-ins plus any loaded from JSON.
#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    patterns: BTreeMap<String, TemplatePattern>,
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        let mut patterns = BTreeMap::new();
        for lang in [Language::En, Language::It] {
            for class in [VerbClass::Cos, VerbClass::Od] {
                let p = cos_od_template(lang, class).expect("built-in template");
                patterns.insert(p.name.clone(), p);
            }
        }
        for p in [cosplus_template(Direction::T2I), cosplus_template(Direction::I2T), type_c_template()] {
            patterns.insert(p.name.clone(), p);
        }
        TemplateCatalog { patterns }
    }

    pub fn get(&self, name: &str) -> Option<&TemplatePattern> {
        self.patterns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.patterns.keys().map(String::as_str)
    }

    /// Adds or replaces a template after checking it.
    pub fn insert(&mut self, pattern: TemplatePattern) -> Result<(), CatalogError> {
        pattern.check()?;
        self.patterns.insert(pattern.name.clone(), pattern);
        Ok(())
    }

    /// Parses a template JSON document and registers it.
    pub fn load_json(&mut self, source: &[u8]) -> Result<String, CatalogError> {
        let pattern: TemplatePattern = serde_json::from_slice(source)?;
        let name = pattern.name.clone();
        self.insert(pattern)?;
        Ok(name)
    }

    /// Catalog name of the template that generates `dataset` in `language`.
    pub fn name_for(dataset: Dataset, language: Language) -> Option<String> {
        if !dataset.languages().contains(&language) {
            return None;
        }
        match dataset {
            Dataset::Cos => Some(format!("cos-{language}")),
            Dataset::Od => Some(format!("od-{language}")),
            Dataset::CosPlusT2I => Some("cosplus-t2i".into()),
            Dataset::CosPlusI2T => Some("cosplus-i2t".into()),
            Dataset::CausHNatural | Dataset::CausHSynthetic => None,
        }
    }

    pub fn pattern_for(&self, dataset: Dataset, language: Language) -> Option<&TemplatePattern> {
        Self::name_for(dataset, language).and_then(|n| self.patterns.get(&n))
    }
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry for TemplateCatalog {
    fn shape(&self, dataset: Dataset, language: Language) -> Result<TemplateShape, ModelError> {
        let unknown = || ModelError::UnknownTemplate { dataset: dataset.to_string(), language: language.to_string() };
        if dataset.is_caush() {
            return if language == Language::He { Ok(TemplateShape::caush()) } else { Err(unknown()) };
        }
        self.pattern_for(dataset, language).map(TemplatePattern::shape).ok_or_else(unknown)
    }
}
