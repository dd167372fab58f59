//! Corpus, rendering and suite properties across the builtin family.

use std::collections::BTreeSet;

use babel_core::toylang::ast::{standard_check_inputs, DEFAULT_STEP_CAP};
use babel_core::toylang::render::{parse_body, render_body, render_document};
use babel_core::toylang::{
    build_mixture, build_vocabulary, generate_corpus, generate_parallel_suites, interpret, AstSampler, Family, MixtureSpec, Op,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn builtin_vocabulary_size() {
    let fam = Family::builtin();
    assert_eq!(build_vocabulary(&fam.languages).unwrap().len(), 146);
}

#[test]
fn render_parse_round_trip_in_every_language() {
    let fam = Family::builtin_with(&["A", "B", "C"]);
    let checks = standard_check_inputs();
    for lang in &fam.languages {
        let sampler = AstSampler::with_banned(fam.banned_ops(&lang.id));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let p = sampler.sample(&mut rng, &checks);
            let back = parse_body(&render_body(&p, lang), lang).unwrap();
            assert_eq!(back, p);
            for x in &checks {
                assert_eq!(interpret(&back, x, DEFAULT_STEP_CAP).ok(), interpret(&p, x, DEFAULT_STEP_CAP).ok());
            }
        }
    }
}

#[test]
fn exclusive_operations_never_reach_other_languages() {
    let fam = Family::builtin();
    let vocab = build_vocabulary(&fam.languages).unwrap();
    let b = fam.language("B").unwrap();
    let corpus = generate_corpus(&vocab, &fam, "B", 9, 20_000).unwrap();
    let words: BTreeSet<String> = vocab.decode(&corpus.tokens).into_iter().collect();
    for op in [Op::Sort, Op::FilterGt, Op::Take] {
        assert!(!words.contains(b.keyword(op)), "{op:?} leaked into B");
    }
    // A's spellings of the differing identifiers never show up in B.
    let a = fam.language("A").unwrap();
    for op in fam.identifier_ops() {
        assert!(!words.contains(a.keyword(op)), "{}", a.keyword(op));
    }
}

#[test]
fn parallel_suites_agree_on_programs_and_answers() {
    let fam = Family::builtin();
    let suites = generate_parallel_suites(&fam, &["A", "B"], "B", 17, 60, Some(64)).unwrap();
    let (a, b) = (&suites["A"], &suites["B"]);
    assert_eq!(a.tasks.len(), 60);
    for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
        assert_eq!((ta.task_id, &ta.inputs, &ta.expected), (tb.task_id, &tb.inputs, &tb.expected));
        let prog = parse_body(&tb.canonical, &b.language).unwrap();
        let got: Vec<_> = tb.inputs.iter().map(|x| interpret(&prog, x, DEFAULT_STEP_CAP).unwrap()).collect();
        assert_eq!(got, tb.expected);
        assert!(ta.prompt.len() + ta.canonical.len() < 64);
    }
    assert_eq!(a.knowledge_subset(), b.knowledge_subset());
    assert!(!b.knowledge_subset().is_empty());
}

#[test]
fn mixtures_hit_their_budgets_and_are_reproducible() {
    let fam = Family::builtin();
    let vocab = build_vocabulary(&fam.languages).unwrap();
    let spec = MixtureSpec { entries: [("A".to_string(), 4_000), ("B".to_string(), 40_000)].into(), schedule: Default::default() };
    let s1 = build_mixture(&vocab, &fam, &spec, 5).unwrap();
    let s2 = build_mixture(&vocab, &fam, &spec, 5).unwrap();
    assert_eq!(s1.tokens, s2.tokens);
    let counts = s1.tokens_per_language();
    for (lang, budget) in &spec.entries {
        let got = counts[lang];
        assert!(got >= *budget && got < budget + 200, "{lang}: {got} vs {budget}");
    }
    // Documents render deterministically and end with `;`.
    let p = AstSampler::with_banned(BTreeSet::new()).sample(&mut ChaCha8Rng::seed_from_u64(1), &standard_check_inputs());
    assert_eq!(render_document(&p, fam.language("A").unwrap()).last().map(String::as_str), Some(";"));
}
