use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Token/id mapping with reserved ids 0 (padding) and 1 (unknown).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from training texts, keeping tokens seen at least
    /// `min_count` times. Ids are assigned by descending frequency, then
    /// lexicographically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(kept.into_iter().map(|(t, _)| t));
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).map(|t| self.id(&t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        let t: Vec<_> = tokenize("Great, GREAT value!! 10/10").collect();
        assert_eq!(t, ["great", "great", "value", "10", "10"]);
    }

    #[test]
    fn rare_tokens_dropped() {
        let v = Vocabulary::build(["good good"], 10);
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
    }

    #[test]
    fn threshold_boundary() {
        let ten = "tasty ".repeat(10);
        let nine = "bland ".repeat(9);
        let v = Vocabulary::build([ten.as_str(), nine.as_str()], 10);
        assert!(v.contains("tasty"));
        assert_eq!(v.id("bland"), UNK);
        assert!(v.id("tasty") >= 2);
    }

    #[test]
    fn reserved_tokens_cannot_collide() {
        // "<pad>" tokenizes to "pad", never to the reserved spelling.
        let text = "<pad> <unk> ".repeat(10);
        let v = Vocabulary::build([text.as_str()], 1);
        assert!(v.id("pad") >= 2);
        assert_ne!(v.id("pad"), PAD);
        assert_ne!(v.id("unk"), UNK);
    }
}
