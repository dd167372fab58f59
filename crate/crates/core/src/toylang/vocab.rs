use std::collections::{BTreeMap, HashMap};

use super::spec::{LanguageSpec, Op, INPUT_WORD};
use super::LangError;
use crate::util::sha256_hex;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Closed word-level vocabulary. Token ids are dense and start at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn push(&mut self, tok: &str) {
        if !self.index.contains_key(tok) {
            self.index.insert(tok.to_string(), self.tokens.len() as u32);
            self.tokens.push(tok.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, tok: &str) -> Option<u32> {
        self.index.get(tok).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }

    pub fn pad(&self) -> u32 {
        self.index[PAD]
    }

    pub fn encode<S: AsRef<str>>(&self, toks: &[S]) -> Result<Vec<u32>, LangError> {
        toks.iter()
            .map(|t| self.id(t.as_ref()).ok_or_else(|| LangError::UnknownToken(t.as_ref().to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|i| self.token(*i).unwrap_or("<unk>").to_string())
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, u32> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_map()).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let map: BTreeMap<String, u32> =
            serde_json::from_str(text).map_err(|e| LangError::InvalidSpec(e.to_string()))?;
        let mut tokens = vec![String::new(); map.len()];
        for (tok, id) in &map {
            let slot = tokens
                .get_mut(*id as usize)
                .ok_or_else(|| LangError::InvalidSpec(format!("token id {id} out of range")))?;
            if !slot.is_empty() {
                return Err(LangError::InvalidSpec(format!("duplicate id {id}")));
            }
            *slot = tok.clone();
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let vocab = Vocabulary { tokens, index };
        for special in [PAD, BOS, EOS] {
            vocab
                .id(special)
                .ok_or_else(|| LangError::InvalidSpec(format!("vocabulary lacks {special}")))?;
        }
        Ok(vocab)
    }

    /// Hex sha256 of the canonical JSON map.
    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_vec(&self.to_map()).expect("vocab serializes").as_slice())
    }
}

/// Builds the shared vocabulary: specials, then per language (sorted by id)
/// structural tokens and literals, then description words, then keywords.
/// Identical strings always share one id.
pub fn build_vocabulary(specs: &[LanguageSpec]) -> Result<Vocabulary, LangError> {
    if specs.is_empty() {
        return Err(LangError::InvalidSpec("no language specs".into()));
    }
    let mut sorted: Vec<&LanguageSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for s in &sorted {
        s.validate()?;
    }
    let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
    for special in [PAD, BOS, EOS] {
        v.push(special);
    }
    for s in &sorted {
        s.structural_tokens.iter().for_each(|t| v.push(t));
        s.literal_alphabet.iter().for_each(|t| v.push(t));
    }
    for op in Op::SEMANTIC {
        v.push(op.name());
    }
    v.push(INPUT_WORD);
    for s in &sorted {
        for op in Op::ALL {
            v.push(s.keyword(op));
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylang::spec::{default_literal_alphabet, default_structural_tokens, Family};

    fn unique_spec(id: &str, prefix: &str) -> LanguageSpec {
        let kws: Vec<(Op, String)> =
            Op::ALL.iter().map(|op| (*op, format!("{prefix}{}", op.name().to_lowercase()))).collect();
        LanguageSpec {
            id: id.into(),
            keyword_map: kws.into_iter().collect(),
            structural_tokens: default_structural_tokens(),
            literal_alphabet: default_literal_alphabet(),
        }
    }

    #[test]
    fn union_size_arithmetic() {
        let a = unique_spec("A", "a_");
        let b = unique_spec("B", "b_");
        let v = build_vocabulary(&[a.clone(), b]).unwrap();
        let shared = default_structural_tokens().len() + default_literal_alphabet().len();
        let desc_words = Op::SEMANTIC.len() + 1;
        assert_eq!(v.len(), 3 + shared + desc_words + 2 * Op::ALL.len());

        let single = build_vocabulary(std::slice::from_ref(&a)).unwrap();
        for kw in a.keyword_map.values() {
            let hits = (0..single.len() as u32).filter(|i| single.token(*i) == Some(kw.as_str())).count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn shared_keyword_gets_one_id() {
        let fam = Family::builtin();
        let v = build_vocabulary(&fam.languages).unwrap();
        // Both builtin languages spell SORT as "sort".
        let ids: Vec<u32> = (0..v.len() as u32).filter(|i| v.token(*i) == Some("sort")).collect();
        assert_eq!(ids.len(), 1);
        let a = fam.language("A").unwrap();
        let b = fam.language("B").unwrap();
        assert_eq!(v.id(a.keyword(Op::Sort)), v.id(b.keyword(Op::Sort)));
        assert_ne!(v.id(a.keyword(Op::Length)), v.id(b.keyword(Op::Length)));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let fam = Family::builtin();
        let v1 = build_vocabulary(&fam.languages).unwrap();
        let mut rev = fam.languages.clone();
        rev.reverse();
        let v2 = build_vocabulary(&rev).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.content_hash(), v2.content_hash());
        let back = Vocabulary::from_json(&v1.to_json()).unwrap();
        assert_eq!(back, v1);
    }

    #[test]
    fn collision_rejected() {
        let mut a = unique_spec("A", "a_");
        a.keyword_map.insert(Op::Mul, "a_add".into());
        assert!(matches!(build_vocabulary(&[a]), Err(LangError::KeywordCollision { .. })));
        assert!(build_vocabulary(&[]).is_err());
    }
}
