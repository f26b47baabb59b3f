//! Pre-inflected lexical material per language and seeded binding sampling.
//!
//! Lexicons are JSON documents. Every invariant is checked at load time so
//! that realization and sampling can assume well-formed input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Binding;
use crate::model::{Case, Gender, Language, Number, PpKind, RoleLabel, VerbClass, Voice};

/// Load failure with a stable rule code and, where it can be located, the
/// 1-based line of the offending value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct LexiconError {
    pub code: &'static str,
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for LexiconError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: [{}] {}: {}", self.code, self.path, self.message),
            None => write!(f, "[{}] {}: {}", self.code, self.path, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("empty pool: {0}")]
    EmptyPool(String),
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconLanguage {
    En,
    It,
    /// Full German lexicon, filtered into `de_case` / `de_mix` at build time.
    De,
    DeCase,
    DeMix,
}

impl LexiconLanguage {
    pub fn serves(self, language: Language) -> bool {
        matches!(
            (self, language),
            (LexiconLanguage::En, Language::En)
                | (LexiconLanguage::It, Language::It)
                | (LexiconLanguage::De, Language::DeCase | Language::DeMix)
                | (LexiconLanguage::DeCase, Language::DeCase)
                | (LexiconLanguage::DeMix, Language::DeMix)
        )
    }

    pub fn is_german(self) -> bool {
        matches!(self, LexiconLanguage::De | LexiconLanguage::DeCase | LexiconLanguage::DeMix)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpSurface {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmarked: Option<String>,
    /// Complete by-phrase when the language contracts preposition and article
    /// ("dal cuoco").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by: Option<String>,
}

impl NpSurface {
    pub fn get(&self, case: Case) -> Option<&str> {
        match case {
            Case::Nom => self.nom.as_deref().or(self.unmarked.as_deref()),
            Case::Acc => self.acc.as_deref().or(self.unmarked.as_deref()),
            Case::Unmarked => self.unmarked.as_deref().or(self.nom.as_deref()),
        }
    }

    fn is_empty(&self) -> bool {
        self.nom.is_none() && self.acc.is_none() && self.unmarked.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpEntry {
    pub key: String,
    #[serde(skip, default = "default_role")]
    pub role_affinity: RoleLabel,
    pub gender: Gender,
    pub number: Number,
    pub surface: NpSurface,
    /// Where an augmented entry came from; carried through, never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn default_role() -> RoleLabel {
    RoleLabel::Agent
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerbEntry {
    pub lemma: String,
    pub class: VerbClass,
    /// Voice -> form key -> surface. Keys are a tense, optionally refined by
    /// agreement: `past`, `past.pl`, `past.f.pl`.
    pub forms: BTreeMap<Voice, BTreeMap<String, String>>,
    #[serde(default)]
    pub si_required_intransitive: bool,
    pub compatible_patients: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compatible_agents: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl VerbEntry {
    /// Most specific form available for the tense and the agreement features.
    pub fn form(&self, voice: Voice, tense: &str, gender: Gender, number: Number) -> Option<&str> {
        let table = self.forms.get(&voice)?;
        [format!("{tense}.{gender}.{number}"), format!("{tense}.{number}"), tense.to_string()]
            .iter()
            .find_map(|k| table.get(k))
            .map(String::as_str)
    }

    /// Base tense keys available in `voice`.
    pub fn tenses(&self, voice: Voice) -> BTreeSet<&str> {
        self.forms.get(&voice).into_iter().flat_map(|t| t.keys()).map(|k| k.split('.').next().unwrap_or(k)).collect()
    }

    /// Tenses usable on every row of a template: those present in every voice
    /// the verb has, falling back to active tenses.
    pub fn shared_tenses(&self) -> Vec<&str> {
        let mut voices = self.forms.keys();
        let Some(first) = voices.next() else { return Vec::new() };
        let mut shared = self.tenses(*first);
        for v in voices {
            let other = self.tenses(*v);
            shared.retain(|t| other.contains(t));
        }
        if shared.is_empty() {
            shared = self.tenses(Voice::Active);
        }
        shared.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelPronounEntry {
    pub gender: Gender,
    pub number: Number,
    pub case: Case,
    pub form: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelPronounTable {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<RelPronounEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariable: Option<String>,
}

impl RelPronounTable {
    pub fn get(&self, gender: Gender, number: Number, case: Case) -> Option<&str> {
        if let Some(form) = &self.invariable {
            return Some(form);
        }
        let case = if case == Case::Unmarked { Case::Nom } else { case };
        self.entries
            .iter()
            .find(|e| e.gender == gender && e.number == number && e.case == case)
            .map(|e| e.form.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpFillers {
    #[serde(default)]
    pub p_np: Vec<String>,
    #[serde(default)]
    pub by_np: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    language: LexiconLanguage,
    by_marker: String,
    #[serde(default)]
    si_marker: Option<String>,
    #[serde(default)]
    verb_final_relative: bool,
    rel_pronouns: RelPronounTable,
    verbs: Vec<VerbEntry>,
    agents: Vec<NpEntry>,
    patients: Vec<NpEntry>,
    #[serde(default)]
    pp_fillers: PpFillers,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub language: LexiconLanguage,
    pub by_marker: String,
    pub si_marker: Option<String>,
    /// Verb moves to the end of a relative clause (German).
    pub verb_final_relative: bool,
    pub rel_pronouns: RelPronounTable,
    pub verbs: Vec<VerbEntry>,
    pub agents: Vec<NpEntry>,
    pub patients: Vec<NpEntry>,
    pub pp_fillers: PpFillers,
    verb_index: BTreeMap<String, usize>,
    agent_index: BTreeMap<String, usize>,
    patient_index: BTreeMap<String, usize>,
}

/// Gender/number counts per role, reported by the loader.
pub type Distribution = BTreeMap<(RoleLabel, Gender, Number), usize>;

fn locate(source: &str, needle: &str) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    source.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn index_by<T>(items: &[T], key: impl Fn(&T) -> &str) -> BTreeMap<String, usize> {
    items.iter().enumerate().map(|(i, it)| (key(it).to_string(), i)).collect()
}

/// Parses and validates a JSON lexicon.
pub fn load_lexicon(source: &[u8]) -> Result<Lexicon, LexiconError> {
    let text = std::str::from_utf8(source).map_err(|e| LexiconError {
        code: "utf8",
        path: String::new(),
        line: None,
        message: e.to_string(),
    })?;
    let file: LexiconFile = serde_json::from_str(text).map_err(|e| LexiconError {
        code: if e.is_data() { "schema" } else { "json-syntax" },
        path: String::new(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    Lexicon::from_file(file, text)
}

impl Lexicon {
    fn from_file(file: LexiconFile, source: &str) -> Result<Self, LexiconError> {
        let err = |code: &'static str, path: String, needle: &str, message: String| LexiconError {
            code,
            line: locate(source, needle),
            path,
            message,
        };

        if file.verbs.is_empty() {
            return Err(err("empty", "verbs".into(), "verbs", "lexicon has no verbs".into()));
        }
        if file.rel_pronouns.entries.is_empty() && file.rel_pronouns.invariable.is_none() {
            return Err(err(
                "rel-pronouns",
                "rel_pronouns".into(),
                "rel_pronouns",
                "needs entries or an invariable form".into(),
            ));
        }

        let mut seen = BTreeSet::new();
        for (i, v) in file.verbs.iter().enumerate() {
            if !seen.insert(v.lemma.as_str()) {
                return Err(err(
                    "duplicate-key",
                    format!("verbs[{i}].lemma"),
                    &v.lemma,
                    format!("duplicate verb {}", v.lemma),
                ));
            }
            if v.forms.values().all(BTreeMap::is_empty) {
                return Err(err(
                    "empty-forms",
                    format!("verbs[{i}].forms"),
                    &v.lemma,
                    format!("verb {} has no forms", v.lemma),
                ));
            }
            if file.language == LexiconLanguage::It && v.class == VerbClass::Cos && !v.si_required_intransitive {
                return Err(err(
                    "si-required",
                    format!("verbs[{i}].si_required_intransitive"),
                    &v.lemma,
                    format!("Italian COS verb {} must require si in the intransitive", v.lemma),
                ));
            }
            if v.si_required_intransitive && file.si_marker.is_none() {
                return Err(err("si-marker", format!("verbs[{i}]"), &v.lemma, "si required but no si_marker".into()));
            }
        }

        let mut keys = BTreeSet::new();
        for (list, name) in [(&file.agents, "agents"), (&file.patients, "patients")] {
            for (i, np) in list.iter().enumerate() {
                let path = format!("{name}[{i}]");
                if !keys.insert(np.key.as_str()) {
                    return Err(err("duplicate-key", path, &np.key, format!("duplicate NP key {}", np.key)));
                }
                if np.surface.is_empty() {
                    return Err(err("surface", path, &np.key, format!("{} has no surface form", np.key)));
                }
                if file.language == LexiconLanguage::DeCase && np.gender != Gender::M {
                    return Err(err(
                        "case-dataset-gender",
                        path,
                        &np.key,
                        format!("{} is {}; case datasets allow only masculine NPs", np.key, np.gender),
                    ));
                }
                if file.language.is_german() {
                    if np.surface.nom.is_none() || np.surface.acc.is_none() {
                        return Err(err("case-forms", path, &np.key, format!("{} needs nom and acc forms", np.key)));
                    }
                    if np.gender != Gender::M && np.surface.nom != np.surface.acc {
                        return Err(err(
                            "case-form-mismatch",
                            path,
                            &np.key,
                            format!("{} is {} but nom and acc differ", np.key, np.gender),
                        ));
                    }
                }
            }
        }

        let agents: BTreeSet<&str> = file.agents.iter().map(|n| n.key.as_str()).collect();
        let patients: BTreeSet<&str> = file.patients.iter().map(|n| n.key.as_str()).collect();
        for (i, v) in file.verbs.iter().enumerate() {
            if v.compatible_patients.is_empty() {
                return Err(err(
                    "empty",
                    format!("verbs[{i}].compatible_patients"),
                    &v.lemma,
                    format!("verb {} has no compatible patients", v.lemma),
                ));
            }
            for (j, p) in v.compatible_patients.iter().enumerate() {
                if !patients.contains(p.as_str()) {
                    return Err(err(
                        "dangling-key",
                        format!("verbs[{i}].compatible_patients[{j}]"),
                        p,
                        format!("unknown patient {p}"),
                    ));
                }
            }
            for (j, a) in v.compatible_agents.iter().flatten().enumerate() {
                if !agents.contains(a.as_str()) {
                    return Err(err(
                        "dangling-key",
                        format!("verbs[{i}].compatible_agents[{j}]"),
                        a,
                        format!("unknown agent {a}"),
                    ));
                }
            }
        }

        let mut file = file;
        for np in &mut file.agents {
            np.role_affinity = RoleLabel::Agent;
        }
        for np in &mut file.patients {
            np.role_affinity = RoleLabel::Patient;
        }
        let lexicon = Lexicon::assemble(file);
        for ((role, gender, number), n) in lexicon.distribution() {
            log::debug!("lexicon {:?}: {role} {gender}.{number} = {n}", lexicon.language);
        }
        Ok(lexicon)
    }

    fn assemble(file: LexiconFile) -> Self {
        Lexicon {
            verb_index: index_by(&file.verbs, |v| &v.lemma),
            agent_index: index_by(&file.agents, |n| &n.key),
            patient_index: index_by(&file.patients, |n| &n.key),
            language: file.language,
            by_marker: file.by_marker,
            si_marker: file.si_marker,
            verb_final_relative: file.verb_final_relative,
            rel_pronouns: file.rel_pronouns,
            verbs: file.verbs,
            agents: file.agents,
            patients: file.patients,
            pp_fillers: file.pp_fillers,
        }
    }

    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            language: self.language,
            by_marker: self.by_marker.clone(),
            si_marker: self.si_marker.clone(),
            verb_final_relative: self.verb_final_relative,
            rel_pronouns: self.rel_pronouns.clone(),
            verbs: self.verbs.clone(),
            agents: self.agents.clone(),
            patients: self.patients.clone(),
            pp_fillers: self.pp_fillers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("lexicon serialization cannot fail")
    }

    pub fn verb(&self, lemma: &str) -> Option<&VerbEntry> {
        self.verb_index.get(lemma).map(|i| &self.verbs[*i])
    }

    pub fn agent(&self, key: &str) -> Option<&NpEntry> {
        self.agent_index.get(key).map(|i| &self.agents[*i])
    }

    pub fn patient(&self, key: &str) -> Option<&NpEntry> {
        self.patient_index.get(key).map(|i| &self.patients[*i])
    }

    pub fn fillers(&self, kind: PpKind) -> &[String] {
        match kind {
            PpKind::PlainPNP => &self.pp_fillers.p_np,
            PpKind::ByNP => &self.pp_fillers.by_np,
        }
    }

    pub fn has_filler(&self, kind: PpKind, filler: &str) -> bool {
        self.fillers(kind).iter().any(|f| f == filler)
    }

    /// Whether NPs carry distinct nominative/accusative forms.
    pub fn marks_case(&self) -> bool {
        self.language.is_german()
    }

    pub fn verbs_of(&self, class: VerbClass) -> impl Iterator<Item = &VerbEntry> {
        self.verbs.iter().filter(move |v| v.class == class)
    }

    pub fn distribution(&self) -> Distribution {
        let mut out = Distribution::new();
        for np in self.agents.iter().chain(&self.patients) {
            *out.entry((np.role_affinity, np.gender, np.number)).or_insert(0) += 1;
        }
        out
    }

    /// The lexicon restricted to what `language` may use. A full German
    /// lexicon yields its masculine subset for `de_case`.
    pub fn for_language(&self, language: Language) -> Result<Lexicon, SampleError> {
        if !self.language.serves(language) {
            return Err(SampleError::EmptyPool(format!("lexicon {:?} cannot serve {language}", self.language)));
        }
        if !(self.language == LexiconLanguage::De && language == Language::DeCase) {
            return Ok(self.clone());
        }
        let keep = |np: &&NpEntry| np.gender == Gender::M;
        let agents: Vec<NpEntry> = self.agents.iter().filter(keep).cloned().collect();
        let patients: Vec<NpEntry> = self.patients.iter().filter(keep).cloned().collect();
        let agent_keys: BTreeSet<&str> = agents.iter().map(|n| n.key.as_str()).collect();
        let patient_keys: BTreeSet<&str> = patients.iter().map(|n| n.key.as_str()).collect();
        let verbs: Vec<VerbEntry> = self
            .verbs
            .iter()
            .filter_map(|v| {
                let mut v = v.clone();
                v.compatible_patients.retain(|p| patient_keys.contains(p.as_str()));
                if let Some(a) = &mut v.compatible_agents {
                    a.retain(|k| agent_keys.contains(k.as_str()));
                }
                (!v.compatible_patients.is_empty()).then_some(v)
            })
            .collect();
        if verbs.is_empty() || agents.is_empty() {
            return Err(SampleError::EmptyPool("no masculine material for de_case".into()));
        }
        Ok(Lexicon::assemble(LexiconFile {
            language: LexiconLanguage::DeCase,
            by_marker: self.by_marker.clone(),
            si_marker: self.si_marker.clone(),
            verb_final_relative: self.verb_final_relative,
            rel_pronouns: self.rel_pronouns.clone(),
            verbs,
            agents,
            patients,
            pp_fillers: self.pp_fillers.clone(),
        }))
    }
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, items: &'a [T], what: &str) -> Result<&'a T, SampleError> {
    if items.is_empty() {
        return Err(SampleError::EmptyPool(what.to_string()));
    }
    Ok(&items[rng.gen_range(0..items.len())])
}

/// Uniform binding over verbs of `verb_class`, then over that verb's
/// compatible arguments, fillers and tenses.
pub fn sample_binding<R: Rng + ?Sized>(
    lexicon: &Lexicon,
    verb_class: VerbClass,
    rng: &mut R,
) -> Result<Binding, SampleError> {
    let verbs: Vec<&VerbEntry> = lexicon.verbs_of(verb_class).collect();
    let verb = pick(rng, &verbs, &format!("{verb_class} verbs"))?;
    sample_binding_for_verb(lexicon, &verb.lemma, rng)
}

/// Samples everything but the verb.
pub fn sample_binding_for_verb<R: Rng + ?Sized>(
    lexicon: &Lexicon,
    lemma: &str,
    rng: &mut R,
) -> Result<Binding, SampleError> {
    let verb = lexicon.verb(lemma).ok_or_else(|| SampleError::UnknownVerb(lemma.to_string()))?;
    let patient = pick(rng, &verb.compatible_patients, &format!("patients of {lemma}"))?;
    let agent = match &verb.compatible_agents {
        Some(keys) => pick(rng, keys, &format!("agents of {lemma}"))?.clone(),
        None => pick(rng, &lexicon.agents, "agents")?.key.clone(),
    };
    let p_np =
        (!lexicon.pp_fillers.p_np.is_empty()).then(|| pick(rng, &lexicon.pp_fillers.p_np, "p_np")).transpose()?;
    let by_np =
        (!lexicon.pp_fillers.by_np.is_empty()).then(|| pick(rng, &lexicon.pp_fillers.by_np, "by_np")).transpose()?;
    let tenses = verb.shared_tenses();
    let tense = pick(rng, &tenses, &format!("tenses of {lemma}"))?;
    Ok(Binding::new(&verb.lemma, agent, patient, p_np.cloned(), by_np.cloned(), *tense))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn minimal(language: &str, extra_np: &str) -> String {
        format!(
            r#"{{
  "language": "{language}",
  "by_marker": "by",
  "rel_pronouns": {{"invariable": "that"}},
  "verbs": [
    {{"lemma": "melt", "class": "cos",
      "forms": {{"active": {{"past": "melted"}}, "passive": {{"past": "was melted"}}}},
      "compatible_patients": ["butter"]}}
  ],
  "agents": [{{"key": "chef", "gender": "m", "number": "sg", "surface": {{"nom": "the chef", "acc": "the chef"}}}}],
  "patients": [{{"key": "butter", "gender": "m", "number": "sg", "surface": {{"nom": "the butter", "acc": "the butter"}}}}{extra_np}],
  "pp_fillers": {{"p_np": ["on the stove"], "by_np": ["by mistake"]}}
}}"#
        )
    }

    #[test]
    fn minimal_lexicon_loads() {
        let lex = load_lexicon(minimal("en", "").as_bytes()).unwrap();
        assert_eq!(lex.verbs.len(), 1);
        assert_eq!(lex.patient("butter").unwrap().role_affinity, RoleLabel::Patient);
        assert_eq!(lex.agent("chef").unwrap().role_affinity, RoleLabel::Agent);
    }

    #[test]
    fn feminine_np_rejected_for_case_dataset() {
        let extra = r#",
    {"key": "milch", "gender": "f", "number": "sg", "surface": {"nom": "die Milch", "acc": "die Milch"}}"#;
        let err = load_lexicon(minimal("de_case", extra).as_bytes()).unwrap_err();
        assert_eq!(err.code, "case-dataset-gender");
        assert_eq!(err.line, Some(12));
        assert!(load_lexicon(minimal("de_mix", extra).as_bytes()).is_ok());
    }

    #[test]
    fn feminine_np_with_distinct_case_forms_rejected() {
        let extra = r#",
    {"key": "milch", "gender": "f", "number": "sg", "surface": {"nom": "die Milch", "acc": "der Milch"}}"#;
        let err = load_lexicon(minimal("de", extra).as_bytes()).unwrap_err();
        assert_eq!(err.code, "case-form-mismatch");
    }

    #[test]
    fn italian_cos_without_si_rejected() {
        let err = load_lexicon(minimal("it", "").as_bytes()).unwrap_err();
        assert_eq!(err.code, "si-required");
        assert_eq!(err.line, Some(6));
    }

    #[test]
    fn dangling_patient_reported_with_line() {
        let src = minimal("en", "").replace(r#"["butter"]"#, r#"["butter", "cheese"]"#);
        let err = load_lexicon(src.as_bytes()).unwrap_err();
        assert_eq!(err.code, "dangling-key");
        assert_eq!(err.path, "verbs[0].compatible_patients[1]");
        assert_eq!(err.line, Some(8));
    }

    #[test]
    fn schema_and_syntax_errors() {
        let missing = minimal("en", "").replace(r#""by_marker": "by","#, "");
        assert_eq!(load_lexicon(missing.as_bytes()).unwrap_err().code, "schema");
        let broken = minimal("en", "").replace("\"verbs\": [", "\"verbs\": [[");
        assert_eq!(load_lexicon(broken.as_bytes()).unwrap_err().code, "schema");
        let err = load_lexicon(b"{ \"language\": ").unwrap_err();
        assert_eq!(err.code, "json-syntax");
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn single_entry_pools_give_the_unique_binding() {
        let lex = load_lexicon(minimal("en", "").as_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = sample_binding(&lex, VerbClass::Cos, &mut rng).unwrap();
        assert_eq!(
            b,
            Binding::new("melt", "chef", "butter", Some("on the stove".into()), Some("by mistake".into()), "past")
        );
    }

    #[test]
    fn cos_on_od_only_lexicon_is_empty_pool() {
        let lex = load_lexicon(minimal("en", "").replace("\"cos\"", "\"od\"").as_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_binding(&lex, VerbClass::Cos, &mut rng), Err(SampleError::EmptyPool(_))));
    }

    #[test]
    fn verb_draws_are_uniform() {
        // Two verbs, 1000 draws: count ~ Binomial(1000, 0.5), sd = sqrt(250) ~ 15.8.
        // [400, 600] is a +-6.3 sd band.
        let src = minimal("en", "").replace(
            r#""compatible_patients": ["butter"]}"#,
            r#""compatible_patients": ["butter"]},
    {"lemma": "freeze", "class": "cos", "forms": {"active": {"past": "froze"}}, "compatible_patients": ["butter"]}"#,
        );
        let lex = load_lexicon(src.as_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let melts =
            (0..1000).filter(|_| sample_binding(&lex, VerbClass::Cos, &mut rng).unwrap().verb == "melt").count();
        assert!((400..=600).contains(&melts), "{melts}");
    }

    #[test]
    fn augmented_entries_keep_provenance() {
        let src = minimal("en", "").replace(
            r#""compatible_patients": ["butter"]}"#,
            r#""compatible_patients": ["butter"], "provenance": {"strategy": "fill-mask", "model": "bert-base-uncased"}}"#,
        );
        let lex = load_lexicon(src.as_bytes()).unwrap();
        assert_eq!(lex.verbs[0].provenance.as_ref().unwrap()["strategy"], "fill-mask");
        let unknown = minimal("en", "").replace(
            r#""gender": "m", "number": "sg", "surface": {"nom": "the chef""#,
            r#""gender": "m", "number": "sg", "note": 1, "surface": {"nom": "the chef""#,
        );
        assert_eq!(load_lexicon(unknown.as_bytes()).unwrap_err().code, "schema");
    }

    #[test]
    fn form_lookup_cascades_by_agreement() {
        let v = VerbEntry {
            lemma: "sciogliere".into(),
            class: VerbClass::Cos,
            forms: BTreeMap::from([(
                Voice::Passive,
                BTreeMap::from([
                    ("past".to_string(), "fu sciolto".to_string()),
                    ("past.pl".to_string(), "furono sciolti".to_string()),
                    ("past.f.pl".to_string(), "furono sciolte".to_string()),
                ]),
            )]),
            si_required_intransitive: true,
            compatible_patients: vec![],
            compatible_agents: None,
            provenance: None,
        };
        assert_eq!(v.form(Voice::Passive, "past", Gender::M, Number::Sg), Some("fu sciolto"));
        assert_eq!(v.form(Voice::Passive, "past", Gender::M, Number::Pl), Some("furono sciolti"));
        assert_eq!(v.form(Voice::Passive, "past", Gender::F, Number::Pl), Some("furono sciolte"));
        assert_eq!(v.form(Voice::Active, "past", Gender::M, Number::Sg), None);
        assert_eq!(v.tenses(Voice::Passive).into_iter().collect::<Vec<_>>(), vec!["past"]);
    }
}
