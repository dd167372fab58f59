//! Synthetic programming languages that share one semantics and differ only in
//! surface keywords, plus corpora and a mechanically checked task suite.

pub mod ast;
pub mod corpus;
pub mod eval;
pub mod render;
pub mod spec;
pub mod vocab;

use thiserror::Error;

pub use ast::{interpret, AstSampler, Expr, Program, Value};
pub use corpus::{build_mixture, generate_corpus, Corpus, MixedStream, MixtureSpec, Schedule};
pub use eval::{evaluate, generate_parallel_suites, generate_suite, EvalResult, EvalSuite, EvalTask};
pub use spec::{Family, LangId, LanguageSpec, Op};
pub use vocab::{build_vocabulary, Vocabulary};

#[derive(Debug, Error)]
pub enum LangError {
    #[error("invalid language spec: {0}")]
    InvalidSpec(String),
    #[error("language {language}: keyword {keyword:?} used by both {first} and {second}")]
    KeywordCollision { language: String, keyword: String, first: Op, second: Op },
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token budget {budget} is below the minimum of {min}")]
    BudgetTooSmall { budget: u64, min: u64 },
    #[error("mixture has no tokens")]
    EmptyMixture,
    #[error("program exceeded the step cap of {cap}")]
    Diverges { cap: u64 },
    #[error("type error: {0}")]
    Type(String),
    #[error("integer overflow")]
    Overflow,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("token file: {0}")]
    TokenFile(String),
    #[error("evaluation suite is empty")]
    EmptySuite,
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
}
