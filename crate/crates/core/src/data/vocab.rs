//! Token vocabularies with reserved ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
/// Placeholder class tokens; fixed set, always reserved.
pub const PLACEHOLDER_CLASSES: [&str; 3] = ["$num", "$url", "$spec"];
/// Reserved tokens in id order: sentence end, unknown, placeholder classes.
pub const RESERVED_TOKENS: [&str; 5] = [EOS_TOKEN, UNK_TOKEN, "$num", "$url", "$spec"];

pub const EOS_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Bijective token/id map with dense ids; reserved tokens occupy ids 0..5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, token) in id_to_token.iter().enumerate() {
            if token_to_id.insert(token.clone(), id as u32).is_some() {
                return Err(Error::usage(format!("duplicate vocabulary token `{token}`")));
            }
        }
        for (id, reserved) in RESERVED_TOKENS.iter().enumerate() {
            if id_to_token.get(id).map(String::as_str) != Some(*reserved) {
                return Err(Error::usage(format!(
                    "vocabulary must start with reserved tokens {RESERVED_TOKENS:?}"
                )));
            }
        }
        Ok(Vocabulary { id_to_token, token_to_id })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, falling back to the unknown id.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(String::as_str)
    }

    /// Maps tokens to ids (unknowns become `<unk>`) and appends `</s>`.
    pub fn ids_with_eos(&self, tokens: &[String]) -> Vec<u32> {
        let mut ids: Vec<u32> = tokens.iter().map(|t| self.id_or_unk(t)).collect();
        ids.push(EOS_ID);
        ids
    }

    /// One token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for token in &self.id_to_token {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read vocabulary {}: {e}", path.display())))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Self::from_tokens(tokens)
    }

    /// SHA-256 of the vocabulary file bytes, hex-encoded. Used to tie
    /// checkpoints to the vocabularies they were trained with.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_file_string().as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Builds a vocabulary of at most `k` tokens (reserved tokens included) from
/// token lines.
///
/// The `k - 5` most frequent non-reserved tokens are kept; ties break
/// lexicographically. Reserved tokens are never evicted and do not consume
/// frequency slots.
pub fn build_vocab<'a, I>(lines: I, k: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if k < RESERVED_TOKENS.len() {
        return Err(Error::usage(format!(
            "vocabulary size {k} smaller than {} reserved tokens",
            RESERVED_TOKENS.len()
        )));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut saw_line = false;
    for line in lines {
        saw_line = true;
        for token in line {
            if !RESERVED_TOKENS.contains(&token.as_str()) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    if !saw_line {
        return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
    }

    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k - RESERVED_TOKENS.len());

    let mut id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    id_to_token.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(id_to_token)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(spec: &[&str]) -> Vec<Vec<String>> {
        spec.iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn keeps_most_frequent_token() {
        let corpus = lines(&["a a b"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), RESERVED_TOKENS.len() + 1).unwrap();
        assert_eq!(v.len(), RESERVED_TOKENS.len() + 1);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
    }

    #[test]
    fn frequency_tie_breaks_lexicographically() {
        // Oracle: a and b both occur twice; "a" < "b".
        let corpus = lines(&["b a", "a b"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), RESERVED_TOKENS.len() + 1).unwrap();
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
    }

    #[test]
    fn small_corpus_fits_entirely() {
        let corpus = lines(&["x y z"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), 100).unwrap();
        assert_eq!(v.len(), RESERVED_TOKENS.len() + 3);
        for t in ["x", "y", "z"] {
            assert!(v.contains(t));
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus: Vec<Vec<String>> = Vec::new();
        assert!(build_vocab(corpus.iter().map(Vec::as_slice), 100).is_err());
    }

    #[test]
    fn reserved_tokens_occupy_low_ids() {
        let corpus = lines(&["a"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), 100).unwrap();
        assert_eq!(v.token(EOS_ID), EOS_TOKEN);
        assert_eq!(v.token(UNK_ID), UNK_TOKEN);
        assert_eq!(v.id("$num"), Some(2));
        assert_eq!(v.id_or_unk("never-seen"), UNK_ID);
    }

    #[test]
    fn vocabulary_is_order_invariant_given_same_counts() {
        let a = lines(&["p q", "q r", "p p"]);
        let b = lines(&["q r", "p p", "p q"]);
        let va = build_vocab(a.iter().map(Vec::as_slice), 7).unwrap();
        let vb = build_vocab(b.iter().map(Vec::as_slice), 7).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn file_round_trip_preserves_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let corpus = lines(&["hello world hello"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), 10).unwrap();
        v.write_file(&path).unwrap();
        let back = Vocabulary::read_file(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.content_hash(), back.content_hash());
    }

    #[test]
    fn ids_with_eos_appends_sentence_end() {
        let corpus = lines(&["a b"]);
        let v = build_vocab(corpus.iter().map(Vec::as_slice), 10).unwrap();
        let ids = v.ids_with_eos(&["a".into(), "zzz".into()]);
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[1], UNK_ID);
        assert_eq!(*ids.last().unwrap(), EOS_ID);
    }
}
