use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    build_banks, k_core_filter, parse_corpus, time_split, BankShape, Banks, DatasetSplit, Interaction,
    ParseReport, Part, Vocabulary,
};
use crate::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub k_core: usize,
    pub min_count: usize,
    pub shape: BankShape,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            k_core: 5,
            min_count: 10,
            shape: BankShape::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub vocab_size: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub skipped_lines: usize,
}

/// A training example: owner indices into [`Banks`] and the target rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    /// Index into the split's interaction list.
    pub source: usize,
}

/// Prepared dataset: split, vocabulary and banks, versioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: u32,
    pub seed: u64,
    pub config: PrepareConfig,
    pub stats: Stats,
    pub vocab: Vocabulary,
    pub split: DatasetSplit,
    pub banks: Banks,
}

impl Snapshot {
    /// Filter, split, build the vocabulary on training text, then banks.
    pub fn from_interactions(
        interactions: Vec<Interaction>,
        report: &ParseReport,
        config: PrepareConfig,
    ) -> Result<Self> {
        let filtered = k_core_filter(&interactions, config.k_core)?;
        if filtered.is_empty() {
            return Err(Error::Empty("corpus after k-core filtering"));
        }
        let split = time_split(filtered);
        Ok(Self::from_split(split, report, config))
    }

    pub fn from_split(split: DatasetSplit, report: &ParseReport, config: PrepareConfig) -> Self {
        let vocab = Vocabulary::build(
            split
                .train
                .iter()
                .map(|&i| split.interactions[i].review_text.as_str()),
            config.min_count,
        );
        let banks = build_banks(&split, &vocab, config.shape);
        let stats = Stats {
            users: banks.users.len(),
            items: banks.items.len(),
            interactions: split.interactions.len(),
            vocab_size: vocab.len(),
            train: split.train.len(),
            dev: split.dev.len(),
            test: split.test.len(),
            skipped_lines: report.skipped,
        };
        Self {
            format_version: SNAPSHOT_VERSION,
            seed: config.seed,
            config,
            stats,
            vocab,
            split,
            banks,
        }
    }

    pub fn prepare(corpus: impl AsRef<Path>, config: PrepareConfig) -> Result<Self> {
        let (interactions, report) = parse_corpus(corpus)?;
        if interactions.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        Self::from_interactions(interactions, &report, config)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let version: serde_json::Value = serde_json::from_slice(&bytes)?;
        match version.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SNAPSHOT_VERSION) => {}
            other => {
                return Err(Error::Version(format!(
                    "snapshot format {other:?}, expected {SNAPSHOT_VERSION}"
                )))
            }
        }
        Ok(serde_json::from_value(version)?)
    }

    pub fn user_index(&self, id: &str) -> Result<usize> {
        self.banks
            .users
            .binary_search_by(|u| u.as_str().cmp(id))
            .map_err(|_| Error::UnknownId {
                kind: "user",
                id: id.to_string(),
            })
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.banks
            .items
            .binary_search_by(|u| u.as_str().cmp(id))
            .map_err(|_| Error::UnknownId {
                kind: "item",
                id: id.to_string(),
            })
    }

    pub fn examples(&self, part: Part) -> Vec<Example> {
        self.split
            .indices(part)
            .iter()
            .map(|&i| {
                let x = &self.split.interactions[i];
                Example {
                    user: self.user_index(&x.user_id).expect("owner lists cover the split"),
                    item: self.item_index(&x.item_id).expect("owner lists cover the split"),
                    rating: x.rating,
                    source: i,
                }
            })
            .collect()
    }

    pub fn train_mean(&self) -> f64 {
        let n = self.split.train.len().max(1) as f64;
        self.split
            .train
            .iter()
            .map(|&i| self.split.interactions[i].rating)
            .sum::<f64>()
            / n
    }

    /// Dev/test interactions whose review sits in some bank. Empty for any
    /// snapshot built by [`Snapshot::from_split`].
    pub fn leaked_reviews(&self) -> Vec<usize> {
        let held_out: BTreeSet<usize> = self.split.dev.iter().chain(&self.split.test).copied().collect();
        let mut leaked: Vec<usize> = self
            .banks
            .user_banks
            .iter()
            .chain(&self.banks.item_banks)
            .flat_map(|b| b.sources.iter().flatten())
            .filter(|s| held_out.contains(s))
            .copied()
            .collect();
        leaked.sort_unstable();
        leaked.dedup();
        leaked
    }
}
