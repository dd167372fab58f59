//! Corpus generation, mixtures and the token-id binary format.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ast::{standard_check_inputs, AstSampler};
use super::render::render_document;
use super::spec::{Family, LangId};
use super::vocab::Vocabulary;
use super::LangError;
use crate::util::{derive_seed, write_atomic};

pub const MIN_TOKEN_BUDGET: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub seed: u64,
    pub family_hash: String,
    pub token_budget: u64,
}

/// A single-language token stream: `<bos> doc <eos>` repeated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub language: LangId,
    pub source: CorpusSource,
    pub tokens: Vec<u32>,
    pub documents: usize,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// Generates documents until the stream reaches `token_budget`, so the total
/// overshoots by less than one document.
pub fn generate_corpus(
    vocab: &Vocabulary,
    family: &Family,
    language: &str,
    seed: u64,
    token_budget: u64,
) -> Result<Corpus, LangError> {
    if token_budget < MIN_TOKEN_BUDGET {
        return Err(LangError::BudgetTooSmall { budget: token_budget, min: MIN_TOKEN_BUDGET });
    }
    let spec = family.language(language)?;
    let sampler = AstSampler::with_banned(family.banned_ops(language));
    let checks = standard_check_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let mut tokens = Vec::with_capacity(token_budget as usize + 64);
    let mut documents = 0;
    while (tokens.len() as u64) < token_budget {
        let program = sampler.sample(&mut rng, &checks);
        tokens.push(bos);
        tokens.extend(vocab.encode(&render_document(&program, spec))?);
        tokens.push(eos);
        documents += 1;
    }
    Ok(Corpus {
        language: language.to_string(),
        source: CorpusSource { seed, family_hash: family.content_hash(), token_budget },
        tokens,
        documents,
    })
}

/// Token-level histogram, indexed by token id.
pub fn token_histogram(tokens: &[u32], vocab_size: usize) -> Vec<u64> {
    let mut h = vec![0u64; vocab_size];
    for t in tokens {
        h[*t as usize] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Documents from all languages are shuffled together with a seeded permutation.
    #[default]
    DocShuffle,
    /// Languages concatenated in id order.
    Sequential,
}

/// Token budget per language (η_i) plus the interleaving policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub entries: BTreeMap<LangId, u64>,
    #[serde(default)]
    pub schedule: Schedule,
}

impl MixtureSpec {
    pub fn single(lang: &str, tokens: u64) -> Self {
        MixtureSpec { entries: [(lang.to_string(), tokens)].into_iter().collect(), schedule: Schedule::DocShuffle }
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn validate(&self) -> Result<(), LangError> {
        if self.total() == 0 {
            return Err(LangError::EmptyMixture);
        }
        Ok(())
    }
}

/// Interleaved multi-language stream with a parallel language tag per token.
#[derive(Debug, Clone)]
pub struct MixedStream {
    pub languages: Vec<LangId>,
    pub tokens: Vec<u32>,
    pub lang_of: Vec<u8>,
}

impl MixedStream {
    pub fn tokens_per_language(&self) -> BTreeMap<LangId, u64> {
        let mut counts = vec![0u64; self.languages.len()];
        for l in &self.lang_of {
            counts[*l as usize] += 1;
        }
        self.languages.iter().cloned().zip(counts).collect()
    }
}

/// Materializes a mixture. Each language's corpus uses a seed derived from
/// `seed` and the language id, so adding a language leaves the others intact.
pub fn build_mixture(
    vocab: &Vocabulary,
    family: &Family,
    mixture: &MixtureSpec,
    seed: u64,
) -> Result<MixedStream, LangError> {
    mixture.validate()?;
    let bos = vocab.bos();
    let mut languages = Vec::new();
    let mut docs: Vec<(u8, &[u32])> = Vec::new();
    let mut corpora = Vec::new();
    for (lang, budget) in &mixture.entries {
        if *budget == 0 {
            continue;
        }
        let corpus = generate_corpus(vocab, family, lang, derive_seed(seed, &format!("corpus/{lang}")), *budget)?;
        languages.push(lang.clone());
        corpora.push(corpus);
    }
    for (li, corpus) in corpora.iter().enumerate() {
        let mut start = 0;
        for i in 1..=corpus.tokens.len() {
            if i == corpus.tokens.len() || corpus.tokens[i] == bos {
                docs.push((li as u8, &corpus.tokens[start..i]));
                start = i;
            }
        }
    }
    if mixture.schedule == Schedule::DocShuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "interleave"));
        docs.shuffle(&mut rng);
    }
    let total: usize = docs.iter().map(|(_, d)| d.len()).sum();
    let mut tokens = Vec::with_capacity(total);
    let mut lang_of = Vec::with_capacity(total);
    for (li, d) in docs {
        tokens.extend_from_slice(d);
        lang_of.extend(std::iter::repeat_n(li, d.len()));
    }
    Ok(MixedStream { languages, tokens, lang_of })
}

const TOKEN_FILE_MAGIC: &[u8; 4] = b"BTOK";
const TOKEN_FILE_VERSION: u32 = 1;

/// First four bytes of the vocabulary hash, read little-endian.
pub fn vocab_tag(vocab_hash_hex: &str) -> u32 {
    let bytes = hex::decode(&vocab_hash_hex[..8]).expect("hash is hex");
    u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
}

/// 16-byte header (magic, version, vocab tag, count) then little-endian u32 ids.
pub fn encode_token_file(tokens: &[u32], vocab_hash_hex: &str) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * tokens.len());
    buf.extend_from_slice(TOKEN_FILE_MAGIC);
    buf.extend_from_slice(&TOKEN_FILE_VERSION.to_le_bytes());
    buf.extend_from_slice(&vocab_tag(vocab_hash_hex).to_le_bytes());
    buf.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
    for t in tokens {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    buf
}

pub fn decode_token_file(bytes: &[u8], vocab_hash_hex: &str) -> Result<Vec<u32>, LangError> {
    if bytes.len() < 16 || &bytes[..4] != TOKEN_FILE_MAGIC {
        return Err(LangError::TokenFile("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != TOKEN_FILE_VERSION {
        return Err(LangError::TokenFile(format!("unsupported version {}", word(4))));
    }
    if word(8) != vocab_tag(vocab_hash_hex) {
        return Err(LangError::TokenFile("vocabulary hash mismatch".into()));
    }
    let count = word(12) as usize;
    if bytes.len() != 16 + 4 * count {
        return Err(LangError::TokenFile(format!("expected {count} ids, file has {} bytes", bytes.len())));
    }
    Ok(bytes[16..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_token_file(path: &Path, tokens: &[u32], vocab_hash_hex: &str) -> std::io::Result<()> {
    write_atomic(path, &encode_token_file(tokens, vocab_hash_hex))
}

pub fn read_token_file(path: &Path, vocab_hash_hex: &str) -> Result<Vec<u32>, LangError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| LangError::TokenFile(e.to_string()))?;
    decode_token_file(&bytes, vocab_hash_hex)
}

/// Writes the stream as whitespace-joined text, one document per line.
pub fn write_corpus_text<W: Write>(w: &mut W, vocab: &Vocabulary, tokens: &[u32]) -> std::io::Result<()> {
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let mut line: Vec<&str> = Vec::new();
    for t in tokens {
        if *t == bos {
            continue;
        }
        if *t == eos {
            writeln!(w, "{}", line.join(" "))?;
            line.clear();
            continue;
        }
        line.push(vocab.token(*t).unwrap_or("<unk>"));
    }
    if !line.is_empty() {
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylang::spec::Op;
    use crate::toylang::vocab::build_vocabulary;

    fn setup() -> (Family, Vocabulary) {
        let fam = Family::builtin();
        let v = build_vocabulary(&fam.languages).unwrap();
        (fam, v)
    }

    #[test]
    fn deterministic_stream() {
        let (fam, v) = setup();
        let a = generate_corpus(&v, &fam, "A", 7, 10_000).unwrap();
        let b = generate_corpus(&v, &fam, "A", 7, 10_000).unwrap();
        assert_eq!(a.tokens, b.tokens);
        let c = generate_corpus(&v, &fam, "A", 8, 10_000).unwrap();
        assert_ne!(a.tokens, c.tokens);
    }

    #[test]
    fn budget_within_one_program() {
        let (fam, v) = setup();
        let c = generate_corpus(&v, &fam, "B", 1, 5_000).unwrap();
        let last_doc = c.tokens.iter().rev().position(|t| *t == v.bos()).unwrap() + 1;
        assert!(c.token_count() >= 5_000);
        assert!(c.token_count() - last_doc < 5_000);
        assert!(matches!(
            generate_corpus(&v, &fam, "B", 1, 999),
            Err(LangError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn exclusive_ops_never_leak() {
        let (fam, v) = setup();
        let c = generate_corpus(&v, &fam, "B", 3, 50_000).unwrap();
        let b = fam.language("B").unwrap();
        for op in fam.banned_ops("B") {
            let id = v.id(b.keyword(op)).unwrap();
            assert!(!c.tokens.contains(&id), "{op} leaked into B corpus");
            assert!(!c.tokens.contains(&v.id(op.name()).unwrap()));
        }
        // The owner does use them.
        let a = generate_corpus(&v, &fam, "A", 3, 50_000).unwrap();
        let sort = v.id(fam.language("A").unwrap().keyword(Op::Sort)).unwrap();
        assert!(a.tokens.contains(&sort));
    }

    #[test]
    fn mixture_tracks_languages() {
        let (fam, v) = setup();
        let mut m = MixtureSpec::single("A", 2_000);
        m.entries.insert("B".into(), 6_000);
        let s = build_mixture(&v, &fam, &m, 5).unwrap();
        let counts = s.tokens_per_language();
        assert!(counts["A"] >= 2_000 && counts["B"] >= 6_000);
        assert_eq!(s.tokens.len(), s.lang_of.len());
        let s2 = build_mixture(&v, &fam, &m, 5).unwrap();
        assert_eq!(s.tokens, s2.tokens);
        let empty = MixtureSpec { entries: [("A".to_string(), 0)].into_iter().collect(), schedule: Schedule::DocShuffle };
        assert!(matches!(build_mixture(&v, &fam, &empty, 5), Err(LangError::EmptyMixture)));
    }

    #[test]
    fn token_file_round_trip_and_checks() {
        let (fam, v) = setup();
        let c = generate_corpus(&v, &fam, "A", 1, 2_000).unwrap();
        let hash = v.content_hash();
        let bytes = encode_token_file(&c.tokens, &hash);
        assert_eq!(bytes.len(), 16 + 4 * c.tokens.len());
        assert_eq!(&bytes[..4], b"BTOK");
        assert_eq!(decode_token_file(&bytes, &hash).unwrap(), c.tokens);
        let other = "ffffffff".to_string() + &hash[8..];
        assert!(decode_token_file(&bytes, &other).is_err());
        assert!(decode_token_file(&bytes[..bytes.len() - 1], &hash).is_err());
    }
}
