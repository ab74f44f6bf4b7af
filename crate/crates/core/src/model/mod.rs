//! Rating models: the multi-pointer co-attention network and the
//! interaction-only baselines, behind one [`Model`] enum.

pub mod baselines;
pub mod config;
pub mod init;
pub mod layers;
pub mod mpcn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baselines::{BaselineConfig, FmBaseline, MatrixFactorization, Mlp};
pub use config::{Aggregation, MpcnConfig, PointerMode};
pub use layers::ForwardCtx;
pub use mpcn::{HeadTrace, Mpcn, PointerTrace};

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::data::{BankShape, Banks, Example};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mpcn,
    Mf,
    Fm,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mpcn, ModelKind::Mf, ModelKind::Fm, ModelKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mpcn => "mpcn",
            ModelKind::Mf => "mf",
            ModelKind::Fm => "fm",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpcn" => Ok(ModelKind::Mpcn),
            "mf" => Ok(ModelKind::Mf),
            "fm" => Ok(ModelKind::Fm),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected mpcn, mf, fm or mlp)"
            ))),
        }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Mpcn {
        config: MpcnConfig,
        vocab_size: usize,
        bank_shape: BankShape,
    },
    Mf {
        config: BaselineConfig,
        users: usize,
        items: usize,
    },
    Fm {
        config: BaselineConfig,
        users: usize,
        items: usize,
    },
    Mlp {
        config: BaselineConfig,
        users: usize,
        items: usize,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Mpcn { .. } => ModelKind::Mpcn,
            ModelSpec::Mf { .. } => ModelKind::Mf,
            ModelSpec::Fm { .. } => ModelKind::Fm,
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model<T: Scalar> {
    Mpcn(Mpcn<T>),
    Mf(MatrixFactorization<T>),
    Fm(FmBaseline<T>),
    Mlp(Mlp<T>),
}

impl<T: Scalar> Model<T> {
    /// Fresh model. `rating_mean` initialises the global bias terms.
    pub fn build(spec: &ModelSpec, rating_mean: f64, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Mpcn {
                config,
                vocab_size,
                bank_shape,
            } => Model::Mpcn(Mpcn::new(*config, *vocab_size, *bank_shape, rating_mean, seed)?),
            ModelSpec::Mf { config, users, items } => {
                Model::Mf(MatrixFactorization::new(*config, *users, *items, rating_mean, seed)?)
            }
            ModelSpec::Fm { config, users, items } => {
                Model::Fm(FmBaseline::new(*config, *users, *items, rating_mean, seed)?)
            }
            ModelSpec::Mlp { config, users, items } => {
                Model::Mlp(Mlp::new(*config, *users, *items, rating_mean, seed)?)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mpcn(_) => ModelKind::Mpcn,
            Model::Mf(_) => ModelKind::Mf,
            Model::Fm(_) => ModelKind::Fm,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Mpcn(m) => ModelSpec::Mpcn {
                config: *m.config(),
                vocab_size: m.vocab_size(),
                bank_shape: m.bank_shape(),
            },
            Model::Mf(m) => ModelSpec::Mf {
                config: *m.config(),
                users: m.params().get(crate::autodiff::ParamId(0)).rows(),
                items: m.params().get(crate::autodiff::ParamId(1)).rows(),
            },
            Model::Fm(m) => ModelSpec::Fm {
                config: *m.config(),
                users: m.params().get(crate::autodiff::ParamId(0)).rows(),
                items: m.params().get(crate::autodiff::ParamId(1)).rows(),
            },
            Model::Mlp(m) => ModelSpec::Mlp {
                config: *m.config(),
                users: m.params().get(crate::autodiff::ParamId(0)).rows(),
                items: m.params().get(crate::autodiff::ParamId(1)).rows(),
            },
        }
    }

    pub fn as_mpcn(&self) -> Option<&Mpcn<T>> {
        match self {
            Model::Mpcn(m) => Some(m),
            _ => None,
        }
    }

    pub fn params(&self) -> &ParamStore<T> {
        match self {
            Model::Mpcn(m) => m.params(),
            Model::Mf(m) => m.params(),
            Model::Fm(m) => m.params(),
            Model::Mlp(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            Model::Mpcn(m) => m.params_mut(),
            Model::Mf(m) => m.params_mut(),
            Model::Fm(m) => m.params_mut(),
            Model::Mlp(m) => m.params_mut(),
        }
    }

    /// Records the prediction for `ex` on `g`, whose first leaves must be
    /// this model's parameters in store order.
    pub fn predict_node(
        &self,
        g: &mut Graph<'_, T>,
        leaves: &[NodeId],
        ex: &Example,
        banks: &Banks,
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId> {
        match self {
            Model::Mpcn(m) => {
                let user = banks.user_banks.get(ex.user).ok_or_else(|| Error::UnknownId {
                    kind: "user",
                    id: ex.user.to_string(),
                })?;
                let item = banks.item_banks.get(ex.item).ok_or_else(|| Error::UnknownId {
                    kind: "item",
                    id: ex.item.to_string(),
                })?;
                Ok(m.forward(g, leaves, user, item, ctx)?.0)
            }
            Model::Mf(m) => m.predict_node(g, leaves, ex),
            Model::Fm(m) => m.predict_node(g, leaves, ex),
            Model::Mlp(m) => m.predict_node(g, leaves, ex, ctx),
        }
    }

    /// Single prediction outside training.
    pub fn predict(&self, ex: &Example, banks: &Banks, ctx: &mut ForwardCtx) -> Result<f64> {
        let mut g = Graph::new();
        let leaves = self.params().register(&mut g);
        let node = self.predict_node(&mut g, &leaves, ex, banks, ctx)?;
        Ok(g.value(node).item().to_f64_lossy())
    }
}

/// Finite-difference check of every parameter of `model` on the summed
/// squared error over `examples`. Each example runs in training mode with its
/// own fixed noise stream, so soft pointers and dropout-free configurations
/// give a smooth, deterministic loss.
pub fn gradcheck(
    label: &str,
    model: &Model<f64>,
    examples: &[Example],
    banks: &Banks,
    seed: u64,
    eps: f64,
    tolerance: f64,
) -> Result<crate::autodiff::gradcheck::GradCheckReport> {
    use crate::autodiff::Tensor;
    use crate::RngState;

    let root = RngState::new(seed);
    let loss_graph = |m: &Model<f64>, store: &ParamStore<f64>| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut total = 0.0;
        let mut grads: Vec<Tensor<f64>> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        for (k, ex) in examples.iter().enumerate() {
            let mut g = Graph::new();
            let leaves = store.register(&mut g);
            let mut ctx = ForwardCtx::train(root.derive(k as u64));
            let pred = m.predict_node(&mut g, &leaves, ex, banks, &mut ctx)?;
            let y = g.constant(Tensor::scalar(ex.rating));
            let d = g.sub(pred, y)?;
            let l = g.square(d)?;
            total += g.value(l).item();
            let mut gr = g.backward(l)?;
            for (acc, &leaf) in grads.iter_mut().zip(&leaves) {
                acc.accumulate(&gr.take(leaf));
            }
        }
        Ok((total, grads))
    };
    let (_, analytic) = loss_graph(model, model.params())?;
    crate::autodiff::gradcheck::check_store(label, model.params(), &analytic, eps, tolerance, |store| {
        Ok(loss_graph(model, store)?.0)
    })
}
