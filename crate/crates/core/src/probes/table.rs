//! Identifier table: keywords that name the same operation with different
//! tokens in each language, used to attribute lens tokens to a language.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::toylang::{Family, LangId, Op, Vocabulary};

/// Minimum identifiers per elicited language.
pub const MIN_IDENTIFIERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifierEntry {
    pub elicit_language: LangId,
    /// Keyword the probe prompts aim to make the model emit.
    pub target_keyword: String,
    /// The same operation's keyword in every language, including the elicited one.
    pub equivalents: BTreeMap<LangId, String>,
}

/// JSON shape: `{elicit_language: {target_keyword: {language: keyword}}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentifierTable {
    pub map: BTreeMap<LangId, BTreeMap<String, BTreeMap<LangId, String>>>,
}

impl IdentifierTable {
    /// One entry per operation whose keyword differs across every language pair.
    pub fn from_family(family: &Family, elicit: &[&str]) -> Result<Self, ProbeError> {
        let mut map = BTreeMap::new();
        for lang in elicit {
            let spec = family.language(lang)?;
            let mut rows = BTreeMap::new();
            for op in family.identifier_ops() {
                let eq = family
                    .languages
                    .iter()
                    .map(|l| (l.id.clone(), l.keyword(op).to_string()))
                    .collect();
                rows.insert(spec.keyword(op).to_string(), eq);
            }
            map.insert(lang.to_string(), rows);
        }
        Ok(IdentifierTable { map })
    }

    pub fn entries(&self, elicit: &str) -> Vec<IdentifierEntry> {
        self.map
            .get(elicit)
            .map(|rows| {
                rows.iter()
                    .map(|(kw, eq)| IdentifierEntry {
                        elicit_language: elicit.to_string(),
                        target_keyword: kw.clone(),
                        equivalents: eq.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Languages named anywhere in the table, sorted.
    pub fn languages(&self) -> Vec<LangId> {
        let mut set = BTreeSet::new();
        for rows in self.map.values() {
            for eq in rows.values() {
                set.extend(eq.keys().cloned());
            }
        }
        set.into_iter().collect()
    }

    /// Operation each target keyword of `elicit` names, resolved via `family`.
    pub fn target_ops(&self, family: &Family, elicit: &str) -> Result<Vec<(String, Op)>, ProbeError> {
        let spec = family.language(elicit)?;
        self.entries(elicit)
            .into_iter()
            .map(|e| {
                spec.op_for_keyword(&e.target_keyword)
                    .map(|op| (e.target_keyword.clone(), op))
                    .ok_or_else(|| ProbeError::InvalidTable(format!("{:?} is not a {elicit} keyword", e.target_keyword)))
            })
            .collect()
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), ProbeError> {
        let bad = |m: String| Err(ProbeError::InvalidTable(m));
        if self.map.is_empty() {
            return bad("table is empty".into());
        }
        for (lang, rows) in &self.map {
            if rows.len() < MIN_IDENTIFIERS {
                return bad(format!("{lang} has {} identifiers, need {MIN_IDENTIFIERS}", rows.len()));
            }
            for (kw, eq) in rows {
                if eq.get(lang) != Some(kw) {
                    return bad(format!("{kw:?} must map to itself for {lang}"));
                }
                let mut ids = BTreeSet::new();
                for tok in std::iter::once(kw).chain(eq.values()) {
                    if vocab.id(tok).is_none() {
                        return bad(format!("{tok:?} is not in the vocabulary"));
                    }
                }
                for tok in eq.values() {
                    if !ids.insert(vocab.id(tok)) {
                        return bad(format!("equivalents of {kw:?} share a token"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        serde_json::from_str(text).map_err(|e| ProbeError::InvalidTable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylang::build_vocabulary;

    #[test]
    fn builtin_table_is_valid() {
        let fam = Family::builtin();
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let t = IdentifierTable::from_family(&fam, &["B"]).unwrap();
        t.validate(&vocab).unwrap();
        let entries = t.entries("B");
        assert_eq!(entries.len(), 8);
        let count = entries.iter().find(|e| e.target_keyword == "count").unwrap();
        assert_eq!(count.equivalents["A"], "len");
        assert_eq!(t.languages(), vec!["A".to_string(), "B".to_string()]);
        assert_eq!(IdentifierTable::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn json_shape() {
        let t = IdentifierTable::from_family(&Family::builtin(), &["B"]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["B"]["count"]["A"], "len");
    }

    #[test]
    fn rejects_shared_equivalents_and_short_tables() {
        let fam = Family::builtin();
        let vocab = build_vocabulary(&fam.languages).unwrap();
        let mut t = IdentifierTable::from_family(&fam, &["B"]).unwrap();
        t.map.get_mut("B").unwrap().get_mut("count").unwrap().insert("A".into(), "count".into());
        assert!(t.validate(&vocab).is_err());
        let mut short = IdentifierTable::from_family(&fam, &["B"]).unwrap();
        let rows = short.map.get_mut("B").unwrap();
        while rows.len() > 4 {
            let k = rows.keys().next().unwrap().clone();
            rows.remove(&k);
        }
        assert!(short.validate(&vocab).is_err());
    }
}
