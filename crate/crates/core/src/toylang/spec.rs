//! Surface syntax of the synthetic language family.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LangError;
use crate::util::sha256_hex;

pub type LangId = String;

/// Abstract operations shared by every language in a family.
///
/// `Define` is the function-definition keyword; it carries no runtime semantics
/// but differs across languages like any other keyword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Op {
    Length,
    Sum,
    Max,
    Reverse,
    Sort,
    MapAdd,
    FilterGt,
    Take,
    Add,
    Mul,
    IfLt,
    Range,
    Define,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Int,
    List,
    /// Either, resolved by the surrounding context (only `IF_LT` branches).
    Any,
}

impl Op {
    pub const ALL: [Op; 13] = [
        Op::Length,
        Op::Sum,
        Op::Max,
        Op::Reverse,
        Op::Sort,
        Op::MapAdd,
        Op::FilterGt,
        Op::Take,
        Op::Add,
        Op::Mul,
        Op::IfLt,
        Op::Range,
        Op::Define,
    ];

    /// Operations that appear inside program bodies.
    pub const SEMANTIC: [Op; 12] = [
        Op::Length,
        Op::Sum,
        Op::Max,
        Op::Reverse,
        Op::Sort,
        Op::MapAdd,
        Op::FilterGt,
        Op::Take,
        Op::Add,
        Op::Mul,
        Op::IfLt,
        Op::Range,
    ];

    /// Language-neutral word used in task descriptions.
    pub fn name(self) -> &'static str {
        match self {
            Op::Length => "LENGTH",
            Op::Sum => "SUM",
            Op::Max => "MAX",
            Op::Reverse => "REVERSE",
            Op::Sort => "SORT",
            Op::MapAdd => "MAP_ADD",
            Op::FilterGt => "FILTER_GT",
            Op::Take => "TAKE",
            Op::Add => "ADD",
            Op::Mul => "MUL",
            Op::IfLt => "IF_LT",
            Op::Range => "RANGE",
            Op::Define => "DEFINE",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Argument types. `Ty::Any` slots must all agree and fix the result type.
    pub fn arg_types(self) -> &'static [Ty] {
        match self {
            Op::Length | Op::Sum | Op::Max | Op::Reverse | Op::Sort => &[Ty::List],
            Op::MapAdd | Op::FilterGt | Op::Take => &[Ty::Int, Ty::List],
            Op::Add | Op::Mul => &[Ty::Int, Ty::Int],
            Op::IfLt => &[Ty::Int, Ty::Int, Ty::Any, Ty::Any],
            Op::Range => &[Ty::Int],
            Op::Define => &[],
        }
    }

    pub fn arity(self) -> usize {
        self.arg_types().len()
    }

    pub fn result_type(self) -> Ty {
        match self {
            Op::Length | Op::Sum | Op::Max | Op::Add | Op::Mul => Ty::Int,
            Op::Reverse | Op::Sort | Op::MapAdd | Op::FilterGt | Op::Take | Op::Range => Ty::List,
            Op::IfLt | Op::Define => Ty::Any,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Word used for the program input inside descriptions.
pub const INPUT_WORD: &str = "INPUT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub id: LangId,
    pub keyword_map: BTreeMap<Op, String>,
    pub structural_tokens: Vec<String>,
    pub literal_alphabet: Vec<String>,
}

pub fn default_structural_tokens() -> Vec<String> {
    ["#", "=", ";", "(", ")", "[", "]"].iter().map(|s| s.to_string()).collect()
}

/// Integer literals 0..=99 plus the input variable `x`.
pub fn default_literal_alphabet() -> Vec<String> {
    let mut lits: Vec<String> = (0..100).map(|i| i.to_string()).collect();
    lits.push("x".to_string());
    lits
}

impl LanguageSpec {
    pub fn new(id: &str, keywords: &[(Op, &str)]) -> Self {
        LanguageSpec {
            id: id.to_string(),
            keyword_map: keywords.iter().map(|(op, kw)| (*op, kw.to_string())).collect(),
            structural_tokens: default_structural_tokens(),
            literal_alphabet: default_literal_alphabet(),
        }
    }

    pub fn keyword(&self, op: Op) -> &str {
        &self.keyword_map[&op]
    }

    /// Reverse lookup used by the parser.
    pub fn op_for_keyword(&self, kw: &str) -> Option<Op> {
        self.keyword_map.iter().find(|(_, k)| k.as_str() == kw).map(|(op, _)| *op)
    }

    pub fn validate(&self) -> Result<(), LangError> {
        if self.id.is_empty() {
            return Err(LangError::InvalidSpec("empty language id".into()));
        }
        for op in Op::ALL {
            match self.keyword_map.get(&op) {
                None => {
                    return Err(LangError::InvalidSpec(format!(
                        "language {} has no keyword for {op}",
                        self.id
                    )))
                }
                Some(kw) if kw.is_empty() || kw.chars().any(char::is_whitespace) => {
                    return Err(LangError::InvalidSpec(format!(
                        "language {}: keyword {kw:?} for {op} is not a single token",
                        self.id
                    )))
                }
                Some(_) => {}
            }
        }
        let mut seen: BTreeMap<&str, Op> = BTreeMap::new();
        for (op, kw) in &self.keyword_map {
            if let Some(prev) = seen.insert(kw.as_str(), *op) {
                return Err(LangError::KeywordCollision {
                    language: self.id.clone(),
                    keyword: kw.clone(),
                    first: prev,
                    second: *op,
                });
            }
        }
        let reserved: BTreeSet<&str> = self
            .structural_tokens
            .iter()
            .chain(self.literal_alphabet.iter())
            .map(String::as_str)
            .chain(Op::ALL.iter().map(|op| op.name()))
            .chain(std::iter::once(INPUT_WORD))
            .collect();
        for kw in self.keyword_map.values() {
            if reserved.contains(kw.as_str()) {
                return Err(LangError::InvalidSpec(format!(
                    "language {}: keyword {kw:?} shadows a reserved token",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A set of languages plus the knowledge-exclusivity assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub languages: Vec<LanguageSpec>,
    /// Operations whose usage examples are generated only for the mapped language.
    #[serde(default)]
    pub exclusive: BTreeMap<Op, LangId>,
}

/// Minimum number of operations whose keywords must differ for every language pair.
pub const MIN_IDENTIFIER_PAIRS: usize = 5;

impl Family {
    /// Two-language family: `A` plays the dominant language, `B` the new one.
    ///
    /// Eight operations differ in surface form; `SORT`, `FILTER_GT` and `TAKE`
    /// share their keyword and are exclusive to `A`.
    pub fn builtin() -> Self {
        Self::builtin_with(&["A", "B"])
    }

    /// Builtin family restricted to the given ids from {A, B, C}.
    pub fn builtin_with(ids: &[&str]) -> Self {
        let a = LanguageSpec::new(
            "A",
            &[
                (Op::Length, "len"),
                (Op::Sum, "sum"),
                (Op::Max, "max"),
                (Op::Reverse, "reversed"),
                (Op::Sort, "sort"),
                (Op::MapAdd, "shift"),
                (Op::FilterGt, "keep_gt"),
                (Op::Take, "take"),
                (Op::Add, "add"),
                (Op::Mul, "mul"),
                (Op::IfLt, "if_lt"),
                (Op::Range, "range"),
                (Op::Define, "def"),
            ],
        );
        let b = LanguageSpec::new(
            "B",
            &[
                (Op::Length, "count"),
                (Op::Sum, "array_sum"),
                (Op::Max, "biggest"),
                (Op::Reverse, "flip"),
                (Op::Sort, "sort"),
                (Op::MapAdd, "offset"),
                (Op::FilterGt, "keep_gt"),
                (Op::Take, "take"),
                (Op::Add, "plus"),
                (Op::Mul, "times"),
                (Op::IfLt, "when_lt"),
                (Op::Range, "range"),
                (Op::Define, "function"),
            ],
        );
        let c = LanguageSpec::new(
            "C",
            &[
                (Op::Length, "size"),
                (Op::Sum, "total"),
                (Op::Max, "top"),
                (Op::Reverse, "backwards"),
                (Op::Sort, "sort"),
                (Op::MapAdd, "bump"),
                (Op::FilterGt, "keep_gt"),
                (Op::Take, "take"),
                (Op::Add, "sum2"),
                (Op::Mul, "prod2"),
                (Op::IfLt, "cond_lt"),
                (Op::Range, "range"),
                (Op::Define, "fn"),
            ],
        );
        let languages = [a, b, c]
            .into_iter()
            .filter(|l| ids.contains(&l.id.as_str()))
            .collect();
        let exclusive = if ids.contains(&"A") {
            [Op::Sort, Op::FilterGt, Op::Take]
                .into_iter()
                .map(|op| (op, "A".to_string()))
                .collect()
        } else {
            BTreeMap::new()
        };
        Family { languages, exclusive }
    }

    pub fn language(&self, id: &str) -> Result<&LanguageSpec, LangError> {
        self.languages
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| LangError::UnknownLanguage(id.to_string()))
    }

    pub fn ids(&self) -> Vec<LangId> {
        self.languages.iter().map(|l| l.id.clone()).collect()
    }

    /// Operations the generator must never emit for `lang`.
    pub fn banned_ops(&self, lang: &str) -> BTreeSet<Op> {
        self.exclusive
            .iter()
            .filter(|(_, owner)| owner.as_str() != lang)
            .map(|(op, _)| *op)
            .collect()
    }

    /// Body operations whose keywords differ between every pair of languages.
    pub fn identifier_ops(&self) -> Vec<Op> {
        Op::SEMANTIC
            .into_iter()
            .filter(|op| {
                let kws: BTreeSet<&str> =
                    self.languages.iter().map(|l| l.keyword(*op)).collect();
                kws.len() == self.languages.len()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), LangError> {
        if self.languages.is_empty() {
            return Err(LangError::InvalidSpec("family has no languages".into()));
        }
        let mut ids = BTreeSet::new();
        for l in &self.languages {
            l.validate()?;
            if !ids.insert(l.id.as_str()) {
                return Err(LangError::InvalidSpec(format!("duplicate language id {}", l.id)));
            }
        }
        for (op, owner) in &self.exclusive {
            if *op == Op::Define {
                return Err(LangError::InvalidSpec("DEFINE cannot be exclusive".into()));
            }
            self.language(owner)?;
        }
        for (i, a) in self.languages.iter().enumerate() {
            for b in &self.languages[i + 1..] {
                let differing = Op::SEMANTIC
                    .iter()
                    .filter(|op| a.keyword(**op) != b.keyword(**op))
                    .count();
                if differing < MIN_IDENTIFIER_PAIRS {
                    return Err(LangError::InvalidSpec(format!(
                        "languages {} and {} differ in only {differing} keywords (need {MIN_IDENTIFIER_PAIRS})",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("family serializes").as_slice())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("family serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let fam: Family =
            serde_json::from_str(text).map_err(|e| LangError::InvalidSpec(e.to_string()))?;
        fam.validate()?;
        Ok(fam)
    }
}
