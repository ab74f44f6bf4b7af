//! Pointer-behaviour statistics and exports of per-head affinity matrices.
//!
//! Every sampled pair falls into exactly one of three buckets: all pointers
//! distinct on both sides, all pointers on the same review pair, or some
//! repetition in between. The one-to-many flag is tracked separately and
//! overlaps the buckets.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Banks, Example, Snapshot};
use crate::model::{ForwardCtx, Mpcn, PointerTrace};
use crate::{Error, Result, RngState, Scalar};

pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    AllUnique,
    OneRepeated,
    AllRepeated,
}

/// Buckets the `(user_review, item_review)` pairs chosen by the heads.
pub fn classify(pairs: &[(usize, usize)]) -> Pattern {
    let distinct = |side: &dyn Fn(&(usize, usize)) -> usize| {
        pairs.iter().map(side).collect::<BTreeSet<_>>().len()
    };
    let n = pairs.len();
    if distinct(&|p| p.0) == n && distinct(&|p| p.1) == n {
        Pattern::AllUnique
    } else if pairs.iter().all(|p| *p == pairs[0]) {
        Pattern::AllRepeated
    } else {
        Pattern::OneRepeated
    }
}

/// Some review on one side is paired with two or more distinct reviews on
/// the other side.
pub fn is_one_to_many(pairs: &[(usize, usize)]) -> bool {
    let fans = |key: fn(&(usize, usize)) -> (usize, usize)| {
        let set: BTreeSet<(usize, usize)> = pairs.iter().map(key).collect();
        let mut owners: Vec<usize> = set.iter().map(|p| p.0).collect();
        let n = owners.len();
        owners.dedup();
        owners.len() < n
    };
    fans(|p| (p.0, p.1)) || fans(|p| (p.1, p.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerBehaviorReport {
    pub pointers: usize,
    pub sample_size: usize,
    pub all_unique: f64,
    pub one_repeated: f64,
    pub all_repeated: f64,
    pub one_to_many: f64,
    pub counts: PatternCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub all_unique: usize,
    pub one_repeated: usize,
    pub all_repeated: usize,
    pub one_to_many: usize,
}

impl PointerBehaviorReport {
    pub fn from_traces(pointers: usize, traces: &[PointerTrace]) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Empty("pointer analysis sample"));
        }
        let mut counts = PatternCounts::default();
        for t in traces {
            let pairs = t.pairs();
            match classify(&pairs) {
                Pattern::AllUnique => counts.all_unique += 1,
                Pattern::OneRepeated => counts.one_repeated += 1,
                Pattern::AllRepeated => counts.all_repeated += 1,
            }
            if is_one_to_many(&pairs) {
                counts.one_to_many += 1;
            }
        }
        let pct = |c: usize| 100.0 * c as f64 / traces.len() as f64;
        Ok(Self {
            pointers,
            sample_size: traces.len(),
            all_unique: pct(counts.all_unique),
            one_repeated: pct(counts.one_repeated),
            all_repeated: pct(counts.all_repeated),
            one_to_many: pct(counts.one_to_many),
            counts,
        })
    }

    pub fn partition_total(&self) -> f64 {
        self.all_unique + self.one_repeated + self.all_repeated
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pointer behaviour (n_p = {}, {} test pairs)", self.pointers, self.sample_size);
        let _ = writeln!(s, "  (1) all unique     {:6.2}%", self.all_unique);
        let _ = writeln!(s, "  (2) 1 repeated     {:6.2}%", self.one_repeated);
        let _ = writeln!(s, "  (3) all repeated   {:6.2}%", self.all_repeated);
        let _ = writeln!(s, "  (4) one-to-many    {:6.2}%", self.one_to_many);
        s
    }
}

/// Evaluation-mode traces for `examples`, in input order.
pub fn traces<T: Scalar>(model: &Mpcn<T>, examples: &[Example], banks: &Banks) -> Result<Vec<PointerTrace>> {
    examples
        .par_iter()
        .map(|ex| Ok(model.predict_example(ex, banks, &mut ForwardCtx::eval())?.1))
        .collect()
}

/// Up to `sample_size` examples drawn without replacement, kept in their
/// original order.
pub fn sample_examples(examples: &[Example], sample_size: usize, seed: u64) -> Vec<Example> {
    if examples.len() <= sample_size {
        return examples.to_vec();
    }
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    RngState::new(seed).shuffle(&mut idx);
    idx.truncate(sample_size);
    idx.sort_unstable();
    idx.into_iter().map(|i| examples[i]).collect()
}

pub fn analyze_pointers<T: Scalar>(
    model: &Mpcn<T>,
    examples: &[Example],
    banks: &Banks,
    sample_size: usize,
    seed: u64,
) -> Result<PointerBehaviorReport> {
    let np = if model.config().use_review_coattention {
        model.config().pointers
    } else {
        0
    };
    if np < 2 {
        return Err(Error::Config(format!(
            "pointer analysis needs at least 2 review pointers, model has {np}"
        )));
    }
    if sample_size == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let sample = sample_examples(examples, sample_size, seed);
    let t = traces(model, &sample, banks)?;
    PointerBehaviorReport::from_traces(np, &t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerPair {
    pub pa: usize,
    pub pb: usize,
}

/// One line of a trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub user_id: String,
    pub item_id: String,
    pub pointers: Vec<PointerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_matrices: Option<Vec<Vec<Vec<f64>>>>,
}

impl TraceRecord {
    pub fn new(snapshot: &Snapshot, ex: &Example, trace: &PointerTrace, with_matrices: bool) -> Self {
        Self {
            user_id: snapshot.banks.users[ex.user].clone(),
            item_id: snapshot.banks.items[ex.item].clone(),
            pointers: trace
                .heads
                .iter()
                .map(|h| PointerPair {
                    pa: h.user_review,
                    pb: h.item_review,
                })
                .collect(),
            s_matrices: with_matrices.then(|| trace.heads.iter().map(|h| h.affinity.clone()).collect()),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("CSV: {e}"))
}

/// One CSV row per matrix row; values use shortest round-trip formatting.
pub fn matrix_to_csv(m: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in m {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn matrix_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            rec.map_err(csv_err)?
                .iter()
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad CSV cell `{c}`: {e}")))
                })
                .collect()
        })
        .collect()
}

/// Files written by [`export_affinity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityExport {
    pub user_id: String,
    pub item_id: String,
    pub matrices: Vec<PathBuf>,
    pub pointers: Vec<PointerPair>,
    pub selection: PathBuf,
}

/// Writes `head<h>.csv` for every head's review-level affinity and
/// `selection.csv` with the chosen indices into `dir`.
pub fn export_affinity<T: Scalar>(
    model: &Mpcn<T>,
    snapshot: &Snapshot,
    user_id: &str,
    item_id: &str,
    dir: impl AsRef<Path>,
) -> Result<AffinityExport> {
    let dir = dir.as_ref();
    let u = snapshot.user_index(user_id)?;
    let i = snapshot.item_index(item_id)?;
    let (_, trace) = model.predict(
        &snapshot.banks.user_banks[u],
        &snapshot.banks.item_banks[i],
        &mut ForwardCtx::eval(),
    )?;
    if trace.heads.is_empty() {
        return Err(Error::Config("model has no review-level pointers to export".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut matrices = Vec::new();
    let sel_path = dir.join("selection.csv");
    let mut selection = csv::Writer::from_path(&sel_path).map_err(csv_err)?;
    selection.write_record(["head", "user_review", "item_review"]).map_err(csv_err)?;
    for (h, head) in trace.heads.iter().enumerate() {
        let path = dir.join(format!("head{h}.csv"));
        std::fs::write(&path, matrix_to_csv(&head.affinity)?).map_err(|e| Error::io(&path, e))?;
        matrices.push(path);
        selection
            .write_record([h.to_string(), head.user_review.to_string(), head.item_review.to_string()])
            .map_err(csv_err)?;
    }
    selection.flush().map_err(|e| Error::io(&sel_path, e))?;
    Ok(AffinityExport {
        user_id: user_id.to_string(),
        item_id: item_id.to_string(),
        matrices,
        pointers: trace
            .heads
            .iter()
            .map(|h| PointerPair {
                pa: h.user_review,
                pb: h.item_review,
            })
            .collect(),
        selection: sel_path,
    })
}
