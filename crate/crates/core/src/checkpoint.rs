//! Versioned parameter checkpoints: a header describing the model and a flat
//! list of named arrays in registration order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Snapshot;
use crate::model::{Model, ModelSpec};
use crate::train::{TrainConfig, TrainOutcome};
use crate::{Error, Precision, Result, Scalar};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub precision: Precision,
    pub model: ModelSpec,
    /// Global rating mean the model was built with.
    pub rating_mean: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TrainOutcome>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>, rating_mean: f64, seed: u64) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            precision: if T::NAME == "f64" { Precision::F64 } else { Precision::F32 },
            model: model.spec(),
            rating_mean,
            seed,
            train: None,
            outcome: None,
            arrays: model
                .params()
                .to_arrays()
                .into_iter()
                .map(|(name, shape, data)| NamedArray { name, shape, data })
                .collect(),
        }
    }

    /// Rebuilds the model and loads the stored arrays, checking names and shapes.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let mut model = Model::build(&self.model, self.rating_mean, self.seed)?;
        let arrays: Vec<(String, Vec<usize>, Vec<f64>)> = self
            .arrays
            .iter()
            .map(|a| (a.name.clone(), a.shape.clone(), a.data.clone()))
            .collect();
        model.params_mut().load_arrays(&arrays)?;
        Ok(model)
    }

    /// Checks that the checkpoint was trained against a dataset with the
    /// same vocabulary, bank shape and id spaces as `snapshot`.
    pub fn check_compatible(&self, snapshot: &Snapshot) -> Result<()> {
        let mismatch = |what: &str, ours: usize, theirs: usize| {
            Err(Error::Version(format!(
                "checkpoint {what} is {ours}, snapshot has {theirs}"
            )))
        };
        match &self.model {
            ModelSpec::Mpcn {
                vocab_size,
                bank_shape,
                ..
            } => {
                if *vocab_size != snapshot.vocab.len() {
                    return mismatch("vocabulary size", *vocab_size, snapshot.vocab.len());
                }
                if *bank_shape != snapshot.config.shape {
                    return Err(Error::Version(format!(
                        "checkpoint bank shape {bank_shape:?} differs from snapshot {:?}",
                        snapshot.config.shape
                    )));
                }
            }
            ModelSpec::Mf { users, items, .. }
            | ModelSpec::Fm { users, items, .. }
            | ModelSpec::Mlp { users, items, .. } => {
                if *users != snapshot.banks.users.len() {
                    return mismatch("user count", *users, snapshot.banks.users.len());
                }
                if *items != snapshot.banks.items.len() {
                    return mismatch("item count", *items, snapshot.banks.items.len());
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            other => {
                return Err(Error::Version(format!(
                    "checkpoint format {other:?}, expected {CHECKPOINT_VERSION}"
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Version(format!("checkpoint header: {e}")))
    }
}
