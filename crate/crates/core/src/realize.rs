//! Surface realization: selection and concatenation of pre-inflected chunks.

use thiserror::Error;

use crate::catalog::Binding;
use crate::lexicon::{Lexicon, NpEntry};
use crate::model::{Case, PpKind, RoleLabel, SentenceSpec, SlotSpec, Voice};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RealizeError {
    #[error("unknown {kind} {key:?}")]
    MissingKey { kind: &'static str, key: String },
    #[error("verb {verb} has no {voice} form for tense {tense:?}")]
    MissingForm { verb: String, voice: Voice, tense: String },
    #[error("NP {key} has no {case} form")]
    MissingCase { key: String, case: Case },
    #[error("binding has no {0} filler")]
    MissingFiller(PpKind),
    #[error("no relative pronoun for head {0}")]
    MissingRelPronoun(String),
    #[error("unsupported slot: {0}")]
    UnsupportedSlot(String),
}

struct Resolved<'a> {
    agent: &'a NpEntry,
    patient: &'a NpEntry,
}

impl<'a> Resolved<'a> {
    fn np(&self, role: RoleLabel) -> &'a NpEntry {
        match role {
            RoleLabel::Agent => self.agent,
            RoleLabel::Patient => self.patient,
        }
    }
}

fn np_role(slot: &SlotSpec) -> Option<(RoleLabel, Case)> {
    match slot {
        SlotSpec::Np { role, case } => Some((*role, *case)),
        _ => None,
    }
}

/// Index of the NP the verb agrees with.
fn agreement_controller(slots: &[SlotSpec], verb_at: usize, marks_case: bool) -> Option<usize> {
    let nps = || slots.iter().enumerate().filter_map(|(i, s)| np_role(s).map(|(_, c)| (i, c)));
    if marks_case {
        let nominative =
            nps().filter(|(_, c)| *c == Case::Nom).min_by_key(|(i, _)| (*i > verb_at, i.abs_diff(verb_at)));
        if let Some((i, _)) = nominative {
            return Some(i);
        }
    }
    nps().filter(|(i, _)| *i < verb_at).map(|(i, _)| i).next_back().or_else(|| nps().map(|(i, _)| i).next())
}

/// Slot order after language word-order rules.
fn linear_order(slots: &[SlotSpec], lexicon: &Lexicon) -> Vec<usize> {
    let mut order: Vec<usize> = (0..slots.len()).collect();
    if !lexicon.verb_final_relative {
        return order;
    }
    let rel = slots.iter().position(|s| matches!(s, SlotSpec::RelMarker { .. }));
    let verb = slots.iter().position(|s| matches!(s, SlotSpec::Verb { .. }));
    if let (Some(rel), Some(verb)) = (rel, verb) {
        if verb > rel {
            let mut verbal = vec![verb];
            if verb > 0 && matches!(slots[verb - 1], SlotSpec::SiClitic) {
                verbal.insert(0, verb - 1);
            }
            order.retain(|i| !verbal.contains(i));
            order.extend(verbal);
        }
    }
    order
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Realizes one sentence schema with its binding.
pub fn realize(spec: &SentenceSpec, binding: &Binding, lexicon: &Lexicon) -> Result<String, RealizeError> {
    let missing = |kind: &'static str, key: &str| RealizeError::MissingKey { kind, key: key.to_string() };
    let verb = lexicon.verb(&binding.verb).ok_or_else(|| missing("verb", &binding.verb))?;
    let nps = Resolved {
        agent: lexicon.agent(&binding.agent).ok_or_else(|| missing("agent", &binding.agent))?,
        patient: lexicon.patient(&binding.patient).ok_or_else(|| missing("patient", &binding.patient))?,
    };
    let slots = &spec.slots;
    let surface = |np: &NpEntry, case: Case| {
        np.surface.get(case).map(str::to_string).ok_or_else(|| RealizeError::MissingCase { key: np.key.clone(), case })
    };

    let mut chunks: Vec<String> = Vec::with_capacity(slots.len());
    for i in linear_order(slots, lexicon) {
        let chunk = match &slots[i] {
            SlotSpec::Np { role, case } => surface(nps.np(*role), *case)?,
            SlotSpec::Verb { voice, tense_key } => {
                let tense = tense_key.as_deref().unwrap_or(&binding.tense_key);
                let controller = agreement_controller(slots, i, lexicon.marks_case())
                    .and_then(|c| np_role(&slots[c]))
                    .map(|(role, _)| nps.np(role));
                let (gender, number) = controller
                    .map(|np| (np.gender, np.number))
                    .unwrap_or((crate::model::Gender::M, crate::model::Number::Sg));
                verb.form(*voice, tense, gender, number)
                    .ok_or_else(|| RealizeError::MissingForm {
                        verb: verb.lemma.clone(),
                        voice: *voice,
                        tense: tense.to_string(),
                    })?
                    .to_string()
            }
            SlotSpec::Pp { pp_kind: PpKind::PlainPNP, pp_arg_role: None } => {
                binding.p_np.clone().ok_or(RealizeError::MissingFiller(PpKind::PlainPNP))?
            }
            SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: None } => {
                binding.by_np.clone().ok_or(RealizeError::MissingFiller(PpKind::ByNP))?
            }
            SlotSpec::Pp { pp_kind: PpKind::ByNP, pp_arg_role: Some(role) } => {
                let np = nps.np(*role);
                match &np.surface.by {
                    Some(by) => by.clone(),
                    None => format!("{} {}", lexicon.by_marker, surface(np, Case::Unmarked)?),
                }
            }
            other @ SlotSpec::Pp { .. } => return Err(RealizeError::UnsupportedSlot(format!("{other:?}"))),
            SlotSpec::RelMarker { case } => {
                let head = slots[..i]
                    .iter()
                    .rev()
                    .find_map(np_role)
                    .map(|(role, _)| nps.np(role))
                    .ok_or_else(|| RealizeError::MissingRelPronoun("<none>".into()))?;
                lexicon
                    .rel_pronouns
                    .get(head.gender, head.number, *case)
                    .ok_or_else(|| RealizeError::MissingRelPronoun(head.key.clone()))?
                    .to_string()
            }
            SlotSpec::SiClitic => lexicon.si_marker.clone().unwrap_or_default(),
        };
        chunks.push(chunk);
    }

    let joined = chunks.iter().flat_map(|c| c.split_whitespace()).collect::<Vec<_>>().join(" ");
    Ok(capitalize(&joined))
}
