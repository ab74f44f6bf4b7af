//! `key = value` experiment files. Keys mirror the field names of
//! [`ExperimentConfig`]; `#` starts a comment.

use std::path::Path;
use std::str::FromStr;

use mpcn::model::{BaselineConfig, ModelKind, MpcnConfig};
use mpcn::train::TrainConfig;
use mpcn::{Error, Precision, Result};

/// Every hyperparameter and ablation switch of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub precision: Precision,
    pub mpcn: MpcnConfig,
    pub baseline: BaselineConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Mpcn,
            precision: Precision::F32,
            mpcn: MpcnConfig::default(),
            baseline: BaselineConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "model",
    "precision",
    "embed_dim",
    "pointers",
    "ffn_layers",
    "aggregation",
    "use_gates",
    "use_fm",
    "use_word_coattention",
    "use_review_coattention",
    "fm_factors",
    "tau",
    "dropout",
    "pointer_mode",
    "embed_init_std",
    "mf_biases",
    "init_std",
    "lr",
    "max_epochs",
    "patience",
    "l2",
    "l2_exclude",
    "batch_size",
    "seed",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Applies one assignment. Dimensions shared by all models (`embed_dim`,
    /// `fm_factors`, `dropout`) set both the MPCN and the baseline value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model" => self.model = v.parse()?,
            "precision" => self.precision = v.parse()?,
            "embed_dim" => {
                self.mpcn.embed_dim = parse(key, v)?;
                self.baseline.embed_dim = self.mpcn.embed_dim;
            }
            "pointers" => self.mpcn.pointers = parse(key, v)?,
            "ffn_layers" => self.mpcn.ffn_layers = parse(key, v)?,
            "aggregation" => self.mpcn.aggregation = v.parse()?,
            "use_gates" => self.mpcn.use_gates = parse_bool(key, v)?,
            "use_fm" => self.mpcn.use_fm = parse_bool(key, v)?,
            "use_word_coattention" => self.mpcn.use_word_coattention = parse_bool(key, v)?,
            "use_review_coattention" => self.mpcn.use_review_coattention = parse_bool(key, v)?,
            "fm_factors" => {
                self.mpcn.fm_factors = parse(key, v)?;
                self.baseline.fm_factors = self.mpcn.fm_factors;
            }
            "tau" => self.mpcn.tau = parse(key, v)?,
            "dropout" => {
                self.mpcn.dropout = parse(key, v)?;
                self.baseline.dropout = self.mpcn.dropout;
            }
            "pointer_mode" => self.mpcn.pointer_mode = v.parse()?,
            "embed_init_std" => self.mpcn.embed_init_std = parse(key, v)?,
            "mf_biases" => self.baseline.mf_biases = parse_bool(key, v)?,
            "init_std" => self.baseline.init_std = parse(key, v)?,
            "lr" => self.train.lr = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "l2" => self.train.l2 = parse(key, v)?,
            "l2_exclude" => {
                self.train.l2_exclude = v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
            }
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "adam_beta1" => self.train.adam.beta1 = parse(key, v)?,
            "adam_beta2" => self.train.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.train.adam.eps = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// The assignments that reproduce this configuration.
    pub fn to_text(&self) -> String {
        let m = &self.mpcn;
        let t = &self.train;
        let lines = [
            ("model", self.model.to_string()),
            ("precision", self.precision.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("pointers", m.pointers.to_string()),
            ("ffn_layers", m.ffn_layers.to_string()),
            ("aggregation", m.aggregation.as_str().to_string()),
            ("use_gates", m.use_gates.to_string()),
            ("use_fm", m.use_fm.to_string()),
            ("use_word_coattention", m.use_word_coattention.to_string()),
            ("use_review_coattention", m.use_review_coattention.to_string()),
            ("fm_factors", m.fm_factors.to_string()),
            ("tau", m.tau.to_string()),
            ("dropout", m.dropout.to_string()),
            ("pointer_mode", m.pointer_mode.to_string()),
            ("embed_init_std", m.embed_init_std.to_string()),
            ("mf_biases", self.baseline.mf_biases.to_string()),
            ("init_std", self.baseline.init_std.to_string()),
            ("lr", t.lr.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("l2", t.l2.to_string()),
            ("l2_exclude", t.l2_exclude.join(", ")),
            ("batch_size", t.batch_size.to_string()),
            ("seed", t.seed.to_string()),
            ("adam_beta1", t.adam.beta1.to_string()),
            ("adam_beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
