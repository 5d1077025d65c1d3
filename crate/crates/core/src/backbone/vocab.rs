use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{GleeError, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const MASK: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;
pub const MAX_VOCAB: usize = 4096;

pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

pub fn is_special(id: u32) -> bool {
    id < NUM_SPECIALS
}

/// Token ↔ id map with the four specials pinned at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from the non-special words, assigned ids from 4 upward.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(GleeError::config(
                    "vocabulary",
                    format!("token {w:?} is empty or contains whitespace"),
                ));
            }
            if index.contains_key(&w) {
                return Err(GleeError::config(
                    "vocabulary",
                    format!("duplicate or reserved token {w:?}"),
                ));
            }
            index.insert(w.clone(), tokens.len() as u32);
            tokens.push(w);
        }
        if tokens.len() > MAX_VOCAB {
            return Err(GleeError::config(
                "vocabulary",
                format!("{} tokens exceeds the limit of {MAX_VOCAB}", tokens.len()),
            ));
        }
        Ok(Vocabulary { tokens, index })
    }

    /// `count` synthetic words named `w4`, `w5`, ... after the specials.
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < NUM_SPECIALS as usize {
            return Err(GleeError::config("vocab_size", "must be at least 4"));
        }
        Vocabulary::new((NUM_SPECIALS as usize..size).map(|i| format!("w{i}")))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Words after the specials, in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS as usize..]
    }

    /// One token per line; line `i` (0-based) holds id `i + 4`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for w in self.words() {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Vocabulary::new(text.lines().map(str::trim_end).filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| GleeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GleeError::io(path, e))?;
        Vocabulary::from_text(&text)
    }

    /// Whitespace/punctuation tokenizer: `[CLS]` first, then padded or
    /// truncated to exactly `max_len` ids.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<Vec<u32>> {
        if max_len < 3 {
            return Err(GleeError::config("max_len", "must be at least 3"));
        }
        let mut ids = vec![CLS];
        ids.extend(self.word_ids(text));
        ids.truncate(max_len);
        ids.resize(max_len, PAD);
        Ok(ids)
    }

    /// Ids of the words in `text`, without `[CLS]` or padding.
    pub fn word_ids(&self, text: &str) -> Vec<u32> {
        split_words(text)
            .into_iter()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined words for non-special ids; specials other than `[MASK]` are dropped.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id == MASK || !is_special(id))
            .map(|&id| self.token(id).unwrap_or("[UNK]"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Splits on whitespace, keeps bracketed specials such as `[MASK]` intact and
/// makes every other ASCII punctuation character its own word.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        while !rest.is_empty() {
            if let Some(special) = SPECIAL_TOKENS.iter().find(|s| rest.starts_with(*s)) {
                out.push(&rest[..special.len()]);
                rest = &rest[special.len()..];
                continue;
            }
            let first = rest.chars().next().unwrap();
            if first.is_ascii_punctuation() {
                out.push(&rest[..1]);
                rest = &rest[1..];
                continue;
            }
            let end = rest
                .char_indices()
                .find(|&(i, c)| {
                    c.is_ascii_punctuation()
                        || SPECIAL_TOKENS.iter().any(|s| rest[i..].starts_with(s))
                })
                .map_or(rest.len(), |(i, _)| i);
            out.push(&rest[..end]);
            rest = &rest[end..];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vocabulary {
        let mut words: Vec<String> = (4..5).map(|i| format!("filler{i}")).collect();
        words.extend(["a".to_string(), "b".to_string()]);
        Vocabulary::new(words).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        let v = ab();
        assert_eq!(v.id("a"), Some(5));
        assert_eq!(v.id("b"), Some(6));
        assert_eq!(v.tokenize("a b", 4).unwrap(), vec![2, 5, 6, 0]);
        assert_eq!(v.tokenize("zzz", 4).unwrap(), vec![2, 1, 0, 0]);
        assert_eq!(v.tokenize("a b a b a b a", 5).unwrap().len(), 5);
    }

    #[test]
    fn tokenize_rejects_short_max_len() {
        assert!(ab().tokenize("a", 2).is_err());
    }

    #[test]
    fn mask_survives_trailing_punctuation() {
        assert_eq!(split_words("It was [MASK]."), vec!["It", "was", "[MASK]", "."]);
        assert_eq!(split_words("x[MASK]y"), vec!["x", "[MASK]", "y"]);
        assert_eq!(ab().word_ids("a [MASK]."), vec![5, MASK, UNK]);
    }

    #[test]
    fn text_file_round_trip() {
        let v = ab();
        let text = v.to_text();
        assert_eq!(text.lines().next(), Some("filler4"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
    }

    #[test]
    fn duplicates_and_specials_rejected() {
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["[MASK]"]).is_err());
    }
}
