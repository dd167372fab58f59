//! Mechanically checked completion tasks and greedy pass@1 evaluation.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ast::{interpret, AstSampler, Program, Value, DEFAULT_STEP_CAP};
use super::render::{parse_body, render_completion, render_prompt};
use super::spec::{Family, LangId, LanguageSpec, Op};
use super::vocab::Vocabulary;
use super::LangError;
use crate::model::{greedy_decode, Checkpoint, ModelError};
use crate::util::sha256_hex;

pub const SUITE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SUITE_SIZE: usize = 200;
/// Inputs each task is checked on.
pub const INPUTS_PER_TASK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: u32,
    /// Prompt tokens, `# <description> <define> x =`, without BOS.
    pub prompt: Vec<String>,
    /// A reference solution: body tokens then `;`.
    pub canonical: Vec<String>,
    pub inputs: Vec<Value>,
    /// Interpreter output of the canonical solution on each input.
    pub expected: Vec<Value>,
    /// Exclusive operations the solution needs.
    pub required_knowledge: BTreeSet<Op>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub schema_version: u32,
    pub language: LanguageSpec,
    pub seed: u64,
    pub tasks: Vec<EvalTask>,
}

impl EvalSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let s: EvalSuite = serde_json::from_str(text).map_err(|e| LangError::InvalidSpec(e.to_string()))?;
        if s.schema_version != SUITE_SCHEMA_VERSION {
            return Err(LangError::InvalidSpec(format!("suite schema {}", s.schema_version)));
        }
        Ok(s)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("suite serializes"))
    }

    /// Ids of tasks tagged with exclusive knowledge (the by-construction subset).
    pub fn knowledge_subset(&self) -> BTreeSet<u32> {
        self.tasks.iter().filter(|t| !t.required_knowledge.is_empty()).map(|t| t.task_id).collect()
    }
}

/// Builds `n_tasks` tasks for `language`. Every tenth task window has three
/// tasks that use at least one exclusive operation (whatever language owns it);
/// the rest are drawn from the language's own corpus distribution. With
/// `max_doc_tokens`, tasks whose framed document would not fit are redrawn.
pub fn generate_suite(
    family: &Family,
    language: &str,
    seed: u64,
    n_tasks: usize,
    max_doc_tokens: Option<usize>,
) -> Result<EvalSuite, LangError> {
    let mut suites = generate_parallel_suites(family, &[language], language, seed, n_tasks, max_doc_tokens)?;
    Ok(suites.remove(language).expect("requested language"))
}

/// One suite per language over the same programs, task ids and inputs, so
/// results can be compared task by task. Ordinary tasks follow the corpus
/// distribution of `sampler_language`; a task is redrawn if any rendering
/// exceeds `max_doc_tokens`.
pub fn generate_parallel_suites(
    family: &Family,
    languages: &[&str],
    sampler_language: &str,
    seed: u64,
    n_tasks: usize,
    max_doc_tokens: Option<usize>,
) -> Result<BTreeMap<LangId, EvalSuite>, LangError> {
    if n_tasks == 0 {
        return Err(LangError::EmptySuite);
    }
    let specs = languages.iter().map(|l| family.language(l)).collect::<Result<Vec<_>, _>>()?;
    family.language(sampler_language)?;
    let exclusive: BTreeSet<Op> = family.exclusive.keys().copied().collect();
    let own = AstSampler::with_banned(family.banned_ops(sampler_language));
    let open = AstSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks: Vec<Vec<EvalTask>> = vec![Vec::with_capacity(n_tasks); specs.len()];
    let mut seen = BTreeSet::new();
    while tasks[0].len() < n_tasks {
        let i = tasks[0].len();
        let want_knowledge = !exclusive.is_empty() && i % 10 < 3;
        let inputs: Vec<Value> = (0..INPUTS_PER_TASK).map(|_| Value::List(own.random_list(&mut rng))).collect();
        let sampler = if want_knowledge { &open } else { &own };
        let program = sampler.sample(&mut rng, &inputs);
        let required: BTreeSet<Op> = program.ops().intersection(&exclusive).copied().collect();
        if want_knowledge && required.is_empty() {
            continue;
        }
        let rendered: Vec<(Vec<String>, Vec<String>)> =
            specs.iter().map(|s| (render_prompt(&program, s), render_completion(&program, s))).collect();
        if max_doc_tokens.is_some_and(|m| rendered.iter().any(|(p, c)| p.len() + c.len() + 1 > m)) {
            continue;
        }
        // Identical prompts would make the task set a multiset.
        if !seen.insert(rendered[0].0.clone()) {
            continue;
        }
        let expected = inputs
            .iter()
            .map(|x| interpret(&program, x, DEFAULT_STEP_CAP))
            .collect::<Result<Vec<_>, _>>()?;
        for (out, (prompt, canonical)) in tasks.iter_mut().zip(rendered) {
            out.push(EvalTask {
                task_id: i as u32,
                prompt,
                canonical,
                inputs: inputs.clone(),
                expected: expected.clone(),
                required_knowledge: required.clone(),
            });
        }
    }
    Ok(specs
        .into_iter()
        .zip(tasks)
        .map(|(spec, tasks)| {
            (spec.id.clone(), EvalSuite { schema_version: SUITE_SCHEMA_VERSION, language: spec.clone(), seed, tasks })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: u32,
    pub passed: bool,
    /// The completion parsed as a program in the suite's language.
    pub parsed: bool,
    /// The prompt or the generation ran into the context limit.
    pub context_overflow: bool,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub language: LangId,
    pub outcomes: Vec<TaskOutcome>,
    pub pass_rate: f64,
    pub parse_rate: f64,
}

impl EvalResult {
    pub fn solved(&self) -> BTreeSet<u32> {
        self.outcomes.iter().filter(|o| o.passed).map(|o| o.task_id).collect()
    }
}

fn check(program: &Program, task: &EvalTask) -> bool {
    task.inputs
        .iter()
        .zip(&task.expected)
        .all(|(x, want)| interpret(program, x, DEFAULT_STEP_CAP).ok().as_ref() == Some(want))
}

/// Greedy pass@1: decode after the prompt until `;` or EOS, parse, run the
/// program on every task input and compare with the expected values.
pub fn evaluate(checkpoint: &Checkpoint, suite: &EvalSuite, vocab: &Vocabulary) -> Result<EvalResult, LangError> {
    if suite.tasks.is_empty() {
        return Err(LangError::EmptySuite);
    }
    if checkpoint.vocab_hash != vocab.content_hash() || checkpoint.model.config.vocab_size != vocab.len() {
        return Err(LangError::VocabMismatch("checkpoint was trained with a different vocabulary".into()));
    }
    let model = &checkpoint.model;
    let ctx = model.config.context_length;
    let semi = vocab.id(";").ok_or_else(|| LangError::UnknownToken(";".into()))?;
    let mut outcomes = Vec::with_capacity(suite.tasks.len());
    for task in &suite.tasks {
        let mut prompt = vec![vocab.bos()];
        prompt.extend(vocab.encode(&task.prompt)?);
        let mut outcome = TaskOutcome {
            task_id: task.task_id,
            passed: false,
            parsed: false,
            context_overflow: false,
            completion: String::new(),
        };
        if prompt.len() >= ctx {
            outcome.context_overflow = true;
            outcomes.push(outcome);
            continue;
        }
        let out = match greedy_decode(model, &prompt, ctx - prompt.len(), vocab.eos(), &[semi]) {
            Ok(o) => o,
            Err(ModelError::SequenceTooLong { .. }) => {
                outcome.context_overflow = true;
                outcomes.push(outcome);
                continue;
            }
            Err(e) => return Err(LangError::VocabMismatch(e.to_string())),
        };
        let generated = vocab.decode(&out[prompt.len()..]);
        outcome.completion = generated.join(" ");
        if generated.last().map(String::as_str) != Some(";") {
            outcome.context_overflow = out.len() >= ctx;
        } else if let Ok(program) = parse_body(&generated, &suite.language) {
            outcome.parsed = true;
            outcome.passed = check(&program, task);
        }
        outcomes.push(outcome);
    }
    let n = outcomes.len() as f64;
    Ok(EvalResult {
        language: suite.language.id.clone(),
        pass_rate: outcomes.iter().filter(|o| o.passed).count() as f64 / n,
        parse_rate: outcomes.iter().filter(|o| o.parsed).count() as f64 / n,
        outcomes,
    })
}

/// Random list inputs for ad-hoc checks, seeded.
pub fn random_inputs(seed: u64, n: usize) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = AstSampler::default();
    (0..n).map(|_| Value::List(s.random_list(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::toylang::vocab::build_vocabulary;

    #[test]
    fn parallel_suites_share_programs() {
        let fam = Family::builtin();
        let s = generate_parallel_suites(&fam, &["A", "B"], "B", 3, 40, Some(64)).unwrap();
        let (a, b) = (&s["A"], &s["B"]);
        assert_eq!(a.tasks.len(), 40);
        for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(ta.task_id, tb.task_id);
            assert_eq!(ta.expected, tb.expected);
            let pa = parse_body(&ta.canonical, &a.language).unwrap();
            let pb = parse_body(&tb.canonical, &b.language).unwrap();
            assert_eq!(pa, pb);
            assert!(ta.prompt.len() + ta.canonical.len() < 64);
        }
        assert_eq!(a.knowledge_subset(), b.knowledge_subset());
        assert_eq!(generate_suite(&fam, "B", 3, 40, Some(64)).unwrap(), *b);
    }

    #[test]
    fn suite_is_deterministic_and_checkers_match_canonical() {
        let fam = Family::builtin();
        let a = generate_suite(&fam, "B", 5, 60, None).unwrap();
        assert_eq!(a, generate_suite(&fam, "B", 5, 60, None).unwrap());
        for t in &a.tasks {
            let p = parse_body(&t.canonical, &a.language).unwrap();
            assert!(check(&p, t));
        }
        // 3 of every 10 tasks carry exclusive knowledge, the rest none.
        assert_eq!(a.knowledge_subset().len(), 18);
        assert!(a.tasks.iter().all(|t| (t.task_id % 10 < 3) == !t.required_knowledge.is_empty()));
    }

    #[test]
    fn suite_json_round_trip() {
        let s = generate_suite(&Family::builtin(), "A", 1, 10, Some(40)).unwrap();
        assert!(s.tasks.iter().all(|t| t.prompt.len() + t.canonical.len() < 40));
        assert_eq!(EvalSuite::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn empty_suite_is_an_error() {
        let fam = Family::builtin();
        assert!(matches!(generate_suite(&fam, "A", 1, 0, None), Err(LangError::EmptySuite)));
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let ck = init_model(ModelConfig::with_vocab(vocab.len()), 1, &vocab.content_hash()).unwrap();
        let mut suite = generate_suite(&fam, "A", 1, 1, None).unwrap();
        suite.tasks.clear();
        assert!(matches!(evaluate(&ck, &suite, &vocab), Err(LangError::EmptySuite)));
    }

    #[test]
    fn random_model_scores_near_zero() {
        let fam = Family::builtin();
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let mut cfg = ModelConfig::with_vocab(vocab.len());
        cfg.n_layers = 2;
        cfg.d_model = 32;
        cfg.d_ffn = 64;
        cfg.context_length = 96;
        let ck = init_model(cfg, 3, &vocab.content_hash()).unwrap();
        let suite = generate_suite(&fam, "A", 2, 50, Some(96)).unwrap();
        let r = evaluate(&ck, &suite, &vocab).unwrap();
        assert_eq!(r.outcomes.len(), 50);
        assert!(r.pass_rate < 0.05);
    }

    #[test]
    fn vocabulary_mismatch_rejected() {
        let fam = Family::builtin();
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let ck = init_model(ModelConfig::with_vocab(vocab.len()), 1, "other").unwrap();
        let suite = generate_suite(&fam, "A", 1, 2, None).unwrap();
        assert!(matches!(evaluate(&ck, &suite, &vocab), Err(LangError::VocabMismatch(_))));
    }
}
