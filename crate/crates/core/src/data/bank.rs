use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Vocabulary, PAD};

/// Bank limits: at most `max_reviews` reviews of `max_words` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankShape {
    pub max_reviews: usize,
    pub max_words: usize,
}

impl Default for BankShape {
    fn default() -> Self {
        Self {
            max_reviews: 20,
            max_words: 30,
        }
    }
}

/// Fixed-size, zero-padded set of encoded reviews for one user or item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewBank {
    pub owner: String,
    /// `max_reviews` rows of `max_words` token ids.
    pub tokens: Vec<Vec<u32>>,
    pub review_valid: Vec<bool>,
    pub word_valid: Vec<Vec<bool>>,
    /// Interaction index each review row came from.
    pub sources: Vec<Option<usize>>,
}

impl ReviewBank {
    pub fn empty(owner: impl Into<String>, shape: BankShape) -> Self {
        Self {
            owner: owner.into(),
            tokens: vec![vec![PAD; shape.max_words]; shape.max_reviews],
            review_valid: vec![false; shape.max_reviews],
            word_valid: vec![vec![false; shape.max_words]; shape.max_reviews],
            sources: vec![None; shape.max_reviews],
        }
    }

    pub fn shape(&self) -> BankShape {
        BankShape {
            max_reviews: self.tokens.len(),
            max_words: self.tokens.first().map_or(0, Vec::len),
        }
    }

    pub fn num_valid(&self) -> usize {
        self.review_valid.iter().filter(|&&v| v).count()
    }

    /// Appends an encoded review into the next free row. Returns false when
    /// the bank is full or the review has no tokens.
    pub fn push(&mut self, ids: &[u32], source: Option<usize>) -> bool {
        let Some(row) = self.review_valid.iter().position(|v| !v) else {
            return false;
        };
        if ids.is_empty() {
            return false;
        }
        let w = self.tokens[row].len();
        for (j, &id) in ids.iter().take(w).enumerate() {
            self.tokens[row][j] = id;
            self.word_valid[row][j] = true;
        }
        self.review_valid[row] = true;
        self.sources[row] = source;
        true
    }

    /// Flat token ids and a flat "masked" flag per position.
    pub fn flat(&self) -> (Vec<usize>, Vec<bool>) {
        let ids = self.tokens.iter().flatten().map(|&t| t as usize).collect();
        let masked = self.word_valid.iter().flatten().map(|&v| !v).collect();
        (ids, masked)
    }

    /// Swaps review rows according to `perm` (new row r = old row perm[r]).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            owner: self.owner.clone(),
            tokens: perm.iter().map(|&p| self.tokens[p].clone()).collect(),
            review_valid: perm.iter().map(|&p| self.review_valid[p]).collect(),
            word_valid: perm.iter().map(|&p| self.word_valid[p].clone()).collect(),
            sources: perm.iter().map(|&p| self.sources[p]).collect(),
        }
    }
}

/// Owner-indexed banks for both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Banks {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub user_banks: Vec<ReviewBank>,
    pub item_banks: Vec<ReviewBank>,
}

fn fill<'a>(
    owners: &[String],
    key: impl Fn(&'a super::Interaction) -> &'a str,
    split: &'a DatasetSplit,
    vocab: &Vocabulary,
    shape: BankShape,
) -> Vec<ReviewBank> {
    let mut by_owner: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &split.train {
        by_owner.entry(key(&split.interactions[i])).or_default().push(i);
    }
    owners
        .iter()
        .map(|o| {
            let mut bank = ReviewBank::empty(o.clone(), shape);
            if let Some(idx) = by_owner.get(o.as_str()) {
                let mut idx = idx.clone();
                // newest first; later input wins a timestamp tie
                idx.sort_by(|&a, &b| {
                    let (ta, tb) = (split.interactions[a].timestamp, split.interactions[b].timestamp);
                    tb.cmp(&ta).then(b.cmp(&a))
                });
                for i in idx {
                    if bank.num_valid() == shape.max_reviews {
                        break;
                    }
                    bank.push(&vocab.encode(&split.interactions[i].review_text), Some(i));
                }
            }
            bank
        })
        .collect()
}

/// Builds user and item banks from training interactions only. Owners are
/// every user and item present anywhere in the split, sorted by id.
pub fn build_banks(split: &DatasetSplit, vocab: &Vocabulary, shape: BankShape) -> Banks {
    let mut users: Vec<String> = split.interactions.iter().map(|x| x.user_id.clone()).collect();
    let mut items: Vec<String> = split.interactions.iter().map(|x| x.item_id.clone()).collect();
    users.sort();
    users.dedup();
    items.sort();
    items.dedup();
    let user_banks = fill(&users, |x| &x.user_id, split, vocab, shape);
    let item_banks = fill(&items, |x| &x.item_id, split, vocab, shape);
    Banks {
        users,
        items,
        user_banks,
        item_banks,
    }
}
