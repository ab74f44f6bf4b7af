use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// How per-pointer outputs and the sum embedding are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Concat,
    Additive,
    Neural,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "concat" => Ok(Self::Concat),
            "additive" => Ok(Self::Additive),
            "neural" => Ok(Self::Neural),
            other => Err(Error::Config(format!("unknown aggregation scheme `{other}`"))),
        }
    }
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Concat => "concat",
            Self::Additive => "additive",
            Self::Neural => "neural",
        }
    }
}

/// Whether review pointers are hard (straight-through) or the relaxed
/// Gumbel-Softmax vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PointerMode {
    #[default]
    Hard,
    Soft,
}

impl std::fmt::Display for PointerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hard => "hard",
            Self::Soft => "soft",
        })
    }
}

impl FromStr for PointerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            other => Err(Error::Config(format!("unknown pointer mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcnConfig {
    pub embed_dim: usize,
    pub pointers: usize,
    /// Depth of the feed-forward map applied before both affinity matrices.
    pub ffn_layers: usize,
    pub aggregation: Aggregation,
    pub use_gates: bool,
    pub use_fm: bool,
    pub use_word_coattention: bool,
    pub use_review_coattention: bool,
    pub fm_factors: usize,
    pub tau: f64,
    pub dropout: f64,
    pub pointer_mode: PointerMode,
    pub embed_init_std: f64,
}

impl Default for MpcnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 50,
            pointers: 3,
            ffn_layers: 1,
            aggregation: Aggregation::Neural,
            use_gates: true,
            use_fm: true,
            use_word_coattention: true,
            use_review_coattention: true,
            fm_factors: 10,
            tau: 1.0,
            dropout: 0.2,
            pointer_mode: PointerMode::Hard,
            embed_init_std: 0.05,
        }
    }
}

impl MpcnConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.embed_dim == 0 || self.fm_factors == 0 {
            return bad("dimensions must be positive");
        }
        if self.pointers == 0 {
            return bad("pointer count must be at least 1");
        }
        if self.ffn_layers > 2 {
            return bad("feed-forward depth must be 0, 1 or 2");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    /// Number of co-attention outputs per side.
    pub fn effective_pointers(&self) -> usize {
        if self.use_review_coattention {
            self.pointers
        } else {
            1
        }
    }

    /// Width of `a_f` (and `b_f`).
    pub fn side_dim(&self) -> usize {
        match self.aggregation {
            Aggregation::Concat => (self.effective_pointers() + 1) * self.embed_dim,
            Aggregation::Additive | Aggregation::Neural => self.embed_dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        MpcnConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = MpcnConfig::default();
        for c in [
            MpcnConfig { pointers: 0, ..base },
            MpcnConfig { ffn_layers: 3, ..base },
            MpcnConfig { tau: 0.0, ..base },
            MpcnConfig { dropout: 1.0, ..base },
        ] {
            assert!(c.validate().is_err());
        }
        assert!("mean".parse::<Aggregation>().is_err());
    }

    #[test]
    fn concat_width() {
        let c = MpcnConfig {
            aggregation: Aggregation::Concat,
            pointers: 3,
            embed_dim: 8,
            ..MpcnConfig::default()
        };
        assert_eq!(c.side_dim(), 32);
    }
}
