use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Interaction;

/// Chronological leave-last-out split. Indices refer to `interactions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub interactions: Vec<Interaction>,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Dev,
    Test,
}

impl DatasetSplit {
    pub fn indices(&self, part: Part) -> &[usize] {
        match part {
            Part::Train => &self.train,
            Part::Dev => &self.dev,
            Part::Test => &self.test,
        }
    }
}

/// Per user: the latest interaction goes to test, the one before it to dev,
/// the rest to train. Timestamp ties keep input order. Users with fewer than
/// three interactions contribute to train only.
pub fn time_split(interactions: Vec<Interaction>) -> DatasetSplit {
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, x) in interactions.iter().enumerate() {
        by_user.entry(&x.user_id).or_default().push(i);
    }
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for idx in by_user.values_mut() {
        idx.sort_by_key(|&i| interactions[i].timestamp);
        if idx.len() >= 3 {
            test.push(idx.pop().unwrap());
            dev.push(idx.pop().unwrap());
        }
        train.extend_from_slice(idx);
    }
    train.sort_unstable();
    dev.sort_unstable();
    test.sort_unstable();
    DatasetSplit {
        interactions,
        train,
        dev,
        test,
    }
}
