mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use blm_core::builder::{
    build_dataset, load_inputs, shared_key_values, BuildError, BuildInput, DisjointKey, GenerationConfig,
};
use blm_core::catalog::{cosplus_template, Binding, Direction, TemplateCatalog};
use blm_core::lexicon::{load_lexicon, Lexicon};
use blm_core::model::{meta, validate_instance, write_jsonl, Dataset, Language, LexVariation};
use blm_core::pipeline::with_jobs;
use blm_core::realize::realize;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lexicons").join(name)
}

fn lexicon(name: &str) -> Lexicon {
    load_lexicon(&std::fs::read(data(name)).unwrap()).unwrap()
}

fn config(dataset: Dataset, language: Language, lex: LexVariation, train: usize, test: usize) -> GenerationConfig {
    let source = match language {
        Language::En => "en.json",
        Language::It => "it.json",
        _ => "de.json",
    };
    GenerationConfig {
        dataset,
        language,
        lex_variation: lex,
        count_train: train,
        count_test: test,
        seed: 11,
        disjoint_key: None,
        source: data(source),
        template_file: None,
    }
}

fn build(c: &GenerationConfig) -> Result<blm_core::builder::SplitResult, BuildError> {
    let (input, catalog) = load_inputs(c, Path::new("")).unwrap();
    build_dataset(c, &input, &catalog)
}

#[test]
fn shipped_lexicons_load() {
    for name in ["en.json", "it.json", "de.json"] {
        lexicon(name);
    }
}

#[test]
fn german_case_t2i_figure() {
    let lex = load_lexicon(include_bytes!("fixtures/de_case_figure.json")).unwrap();
    let b = Binding::new("schmelzen", "Chef", "Käse", None, None, "present");
    let t = cosplus_template(Direction::T2I);
    let context: Vec<String> = t.context_rows.iter().map(|r| realize(r, &b, &lex).unwrap()).collect();
    assert_eq!(
        context,
        [
            "Der Chef schmiltzt den Käse",
            "Der Chef der den Käse schmiltzt",
            "Den Käse den der Chef schmiltzt",
            "Der Käse der schmiltzt"
        ]
    );
    let answers: Vec<String> = t.answer_rows.iter().map(|r| realize(&r.spec, &b, &lex).unwrap()).collect();
    assert_eq!(answers, ["Der Chef schmiltzt", "Der Käse schmiltzt", "Den Käse schmiltzt der Chef"]);
}

#[test]
fn italian_and_mixed_german_agreement() {
    let it = lexicon("it.json");
    let t = cosplus_template(Direction::T2I);
    let b = Binding::new("sciogliere", "cuoca", "burro", None, None, "present");
    assert_eq!(realize(&t.answer_rows[1].spec, &b, &it).unwrap(), "Il burro si scioglie");
    assert_eq!(realize(&t.context_rows[2], &b, &it).unwrap(), "Il burro che la cuoca scioglie");
    let de = lexicon("de.json");
    let b = Binding::new("schmelzen", "Köchin", "Butter", None, None, "present");
    assert_eq!(realize(&t.context_rows[1], &b, &de).unwrap(), "Die Köchin die die Butter schmilzt");
}

#[test]
fn every_dataset_language_and_lex_generates_valid_disjoint_splits() {
    let catalog = TemplateCatalog::builtin();
    for dataset in [Dataset::Cos, Dataset::Od, Dataset::CosPlusT2I, Dataset::CosPlusI2T] {
        for language in dataset.languages() {
            for lex in [LexVariation::MinLex, LexVariation::MaxLex] {
                let c = config(dataset, *language, lex, 90, 30);
                let r = build(&c).unwrap_or_else(|e| panic!("{dataset} {language} {lex}: {e}"));
                assert_eq!((r.train.len(), r.test.len()), (90, 30));
                assert_eq!(shared_key_values(&r.train, &r.test, c.key()), 0);
                for inst in r.train.iter().chain(&r.test) {
                    let report = validate_instance(inst, &catalog).unwrap();
                    assert!(report.is_valid(), "{report:?}");
                    if lex == LexVariation::MinLex {
                        let verbs: BTreeSet<&str> = inst.meta[meta::CONTEXT_VERBS]
                            .split('|')
                            .chain(inst.meta[meta::ANSWER_VERBS].split('|'))
                            .collect();
                        assert_eq!(verbs.len(), 1);
                    }
                }
            }
        }
    }
}

#[test]
fn de_case_uses_only_masculine_material() {
    let de = lexicon("de.json");
    let r = build(&config(Dataset::CosPlusT2I, Language::DeCase, LexVariation::MinLex, 80, 20)).unwrap();
    let feminine: BTreeSet<&str> = de
        .agents
        .iter()
        .chain(&de.patients)
        .filter(|n| n.gender != blm_core::model::Gender::M)
        .filter_map(|n| n.surface.nom.as_deref())
        .collect();
    for inst in r.train.iter().chain(&r.test) {
        for text in inst.context.iter().chain(inst.answers.iter().map(|a| &a.text)) {
            let lower = text.to_lowercase();
            assert!(!feminine.iter().any(|f| lower.contains(&f.to_lowercase())), "{text}");
        }
    }
}

#[test]
fn verb_lemma_split_over_thirty_verbs() {
    let mut c = config(Dataset::Cos, Language::En, LexVariation::MinLex, 2700, 300);
    c.disjoint_key = Some(DisjointKey::VerbLemma);
    let r = build(&c).unwrap();
    let verbs = |set: &[blm_core::model::BlmInstance]| -> BTreeSet<String> {
        set.iter().map(|i| i.meta[meta::CONTEXT_VERBS].split('|').next().unwrap().to_string()).collect()
    };
    assert!(verbs(&r.train).is_disjoint(&verbs(&r.test)));
    assert_eq!(verbs(&r.train).len() + verbs(&r.test).len(), 30);
}

#[test]
fn maxlex_with_verb_lemma_key_is_infeasible() {
    let mut c = config(Dataset::Cos, Language::En, LexVariation::MaxLex, 200, 50);
    c.disjoint_key = Some(DisjointKey::VerbLemma);
    assert!(matches!(build(&c), Err(BuildError::InfeasibleSplit { requested: 50, .. })));
}

#[test]
fn output_bytes_do_not_depend_on_thread_count() {
    let c = config(Dataset::Od, Language::It, LexVariation::MaxLex, 300, 60);
    let bytes = |jobs| {
        let r = with_jobs(Some(jobs), || build(&c).unwrap());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, r.train.iter().chain(&r.test)).unwrap();
        (buf, r.manifest)
    };
    assert_eq!(bytes(1), bytes(4));
}

#[test]
fn minlex_rejects_unknown_source_kind() {
    let c = config(Dataset::Cos, Language::En, LexVariation::MinLex, 10, 2);
    let err = build_dataset(&c, &BuildInput::Pool(Default::default()), &TemplateCatalog::builtin()).unwrap_err();
    assert!(matches!(err, BuildError::Config(_)));
}

#[test]
fn caush_targets_are_uniform() {
    // 1000 draws over four targets: count ~ Binomial(1000, 0.25), sd ~ 13.7;
    // [200, 300] is a +-3.6 sd band.
    let gold = common::generate(Dataset::CausHNatural, Language::He, LexVariation::MaxLex, 800, 200, 8);
    let mut counts = std::collections::BTreeMap::new();
    for inst in &gold {
        *counts.entry(inst.correct().unwrap().cid).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 4);
    assert!(counts.values().all(|n| (200..=300).contains(n)), "{counts:?}");
}
