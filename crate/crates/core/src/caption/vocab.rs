use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{MftError, Result};
use crate::Token;

pub const PAD: Token = 0;
pub const BOS: Token = 1;
pub const EOS: Token = 2;
pub const UNK: Token = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases and splits on whitespace; punctuation becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if ch.is_ascii_punctuation() && ch != '\'' {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(ch.to_string());
        } else {
            word.push(ch);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Bijection between word strings and contiguous ids, with the four
/// reserved ids fixed at 0..=3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, Token>,
}

impl Vocabulary {
    /// Vocabulary over the given words (in order, duplicates ignored).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in RESERVED {
            v.push(w.to_string());
        }
        for w in words {
            v.push(w.into());
        }
        v
    }

    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.words.len() as Token);
            self.words.push(w);
        }
    }

    /// Keeps tokens seen at least `min_freq` times, most frequent first
    /// (alphabetical among equals).
    pub fn build<'a, I>(sentences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for w in s {
                *freq.entry(w.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|(w, c)| *c >= min_freq && !RESERVED.contains(w))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_words(kept.into_iter().map(|(w, _)| w.to_string()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// True when only the reserved tokens are present.
    pub fn is_empty(&self) -> bool {
        self.words.len() <= RESERVED.len()
    }

    pub fn id(&self, word: &str) -> Token {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: Token) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<Token> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<Token> {
        self.encode_words(&tokenize(text))
    }

    /// Space-joined words up to (excluding) the first `<eos>`.
    pub fn decode(&self, tokens: &[Token]) -> String {
        tokens
            .iter()
            .take_while(|&&t| t != EOS)
            .map(|&t| self.word(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&VocabFile {
            tokens: self.words.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.tokens.len() < RESERVED.len()
            || file.tokens[..RESERVED.len()] != RESERVED.map(String::from)
        {
            return Err(MftError::parse("vocabulary", "reserved tokens missing or reordered"));
        }
        let v = Self::from_words(file.tokens[RESERVED.len()..].iter().cloned());
        if v.len() != file.tokens.len() {
            return Err(MftError::parse("vocabulary", "duplicate tokens"));
        }
        Ok(v)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("A man, then  he runs."),
            vec!["a", "man", ",", "then", "he", "runs", "."]
        );
        assert_eq!(tokenize("it's"), vec!["it's"]);
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::from_words(["dog", "cat"]);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<bos>"), BOS);
        assert_eq!(v.id("<eos>"), EOS);
        assert_eq!(v.id("<unk>"), UNK);
        assert_eq!(v.id("dog"), 4);
        assert_eq!(v.id("zebra"), UNK);
    }

    #[test]
    fn min_frequency_filter() {
        let s1: Vec<String> = tokenize("a dog runs");
        let s2: Vec<String> = tokenize("a dog sits");
        let v = Vocabulary::build([s1.as_slice(), s2.as_slice()], 2);
        assert_eq!(v.len(), 6);
        assert_eq!(v.encode("a dog runs"), vec![v.id("a"), v.id("dog"), UNK]);
    }

    #[test]
    fn json_roundtrip_and_decode() {
        let v = Vocabulary::from_words(["x", "y"]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(v.decode(&[4, 5, EOS, 4]), "x y");
        assert!(Vocabulary::from_json(r#"{"tokens": ["a"]}"#).is_err());
    }
}
