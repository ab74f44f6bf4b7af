//! Interaction-only baselines: biased matrix factorization, a factorization
//! machine over `[p_u; q_i]`, and a three-layer pyramid MLP.

use serde::{Deserialize, Serialize};

use super::init;
use super::layers::{self, FmParams, ForwardCtx};
use crate::autodiff::{ops, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::data::Example;
use crate::{Error, Result, RngState, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub embed_dim: usize,
    pub fm_factors: usize,
    pub dropout: f64,
    /// MF only: add user/item biases and the global mean.
    pub mf_biases: bool,
    pub init_std: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            embed_dim: 50,
            fm_factors: 10,
            dropout: 0.2,
            mf_biases: true,
            init_std: 0.1,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.fm_factors == 0 {
            return Err(Error::Config("baseline dimensions too small".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn check_ids(ex: &Example, users: usize, items: usize) -> Result<()> {
    if ex.user >= users {
        return Err(Error::UnknownId {
            kind: "user",
            id: ex.user.to_string(),
        });
    }
    if ex.item >= items {
        return Err(Error::UnknownId {
            kind: "item",
            id: ex.item.to_string(),
        });
    }
    Ok(())
}

/// Shared user/item embedding tables.
#[derive(Debug, Clone)]
struct Tables {
    users: usize,
    items: usize,
    p: ParamId,
    q: ParamId,
}

impl Tables {
    fn new<T: Scalar>(store: &mut ParamStore<T>, users: usize, items: usize, cfg: &BaselineConfig, rng: &mut RngState) -> Self {
        Self {
            users,
            items,
            p: store.add("user_emb", init::normal(&[users, cfg.embed_dim], cfg.init_std, rng)),
            q: store.add("item_emb", init::normal(&[items, cfg.embed_dim], cfg.init_std, rng)),
        }
    }

    fn lookup<T: Scalar>(&self, g: &mut Graph<'_, T>, leaves: &[NodeId], ex: &Example) -> Result<(NodeId, NodeId)> {
        check_ids(ex, self.users, self.items)?;
        let p = g.embedding(leaves[self.p.0], &[ex.user], &[false])?;
        let q = g.embedding(leaves[self.q.0], &[ex.item], &[false])?;
        Ok((p, q))
    }
}

/// `p_u . q_i + b_u + b_i + mu`.
#[derive(Debug, Clone)]
pub struct MatrixFactorization<T: Scalar> {
    config: BaselineConfig,
    tables: Tables,
    biases: Option<(ParamId, ParamId)>,
    global_mean: f64,
    store: ParamStore<T>,
}

impl<T: Scalar> MatrixFactorization<T> {
    pub fn new(config: BaselineConfig, users: usize, items: usize, global_mean: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let tables = Tables::new(&mut store, users, items, &config, &mut rng);
        let biases = config.mf_biases.then(|| {
            (
                store.add("user_bias", Tensor::zeros(&[users, 1])),
                store.add("item_bias", Tensor::zeros(&[items, 1])),
            )
        });
        Ok(Self {
            config,
            tables,
            biases,
            global_mean: if config.mf_biases { global_mean } else { 0.0 },
            store,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn predict_node(&self, g: &mut Graph<'_, T>, leaves: &[NodeId], ex: &Example) -> Result<NodeId> {
        let (p, q) = self.tables.lookup(g, leaves, ex)?;
        let mut out = g.dot(p, q)?;
        if let Some((bu, bi)) = self.biases {
            let b_u = g.embedding(leaves[bu.0], &[ex.user], &[false])?;
            let b_u = g.reshape(b_u, &[1])?;
            let b_i = g.embedding(leaves[bi.0], &[ex.item], &[false])?;
            let b_i = g.reshape(b_i, &[1])?;
            let mu = g.constant(Tensor::scalar(T::from_f64_lossy(self.global_mean)));
            out = g.add(out, b_u)?;
            out = g.add(out, b_i)?;
            out = g.add(out, mu)?;
        }
        Ok(out)
    }
}

/// Factorization machine over the concatenated user and item embeddings.
#[derive(Debug, Clone)]
pub struct FmBaseline<T: Scalar> {
    config: BaselineConfig,
    tables: Tables,
    fm: [ParamId; 3],
    store: ParamStore<T>,
}

impl<T: Scalar> FmBaseline<T> {
    pub fn new(config: BaselineConfig, users: usize, items: usize, global_mean: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let tables = Tables::new(&mut store, users, items, &config, &mut rng);
        let n = 2 * config.embed_dim;
        let fm = [
            store.add("fm.w0", Tensor::scalar(T::from_f64_lossy(global_mean))),
            store.add("fm.w", init::normal(&[n], 0.01, &mut rng)),
            store.add("fm.v", init::normal(&[n, config.fm_factors], 0.1, &mut rng)),
        ];
        Ok(Self {
            config,
            tables,
            fm,
            store,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn predict_node(&self, g: &mut Graph<'_, T>, leaves: &[NodeId], ex: &Example) -> Result<NodeId> {
        let (p, q) = self.tables.lookup(g, leaves, ex)?;
        let x = g.concat(&[p, q])?;
        let [w0, w, v] = self.fm;
        layers::fm_predict(
            g,
            x,
            &FmParams {
                w0: leaves[w0.0],
                w: leaves[w.0],
                v: leaves[v.0],
            },
        )
    }
}

/// `[p_u; q_i]` through `2d -> d -> d/2` ReLU layers and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp<T: Scalar> {
    config: BaselineConfig,
    tables: Tables,
    layers: [(ParamId, ParamId); 3],
    store: ParamStore<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(config: BaselineConfig, users: usize, items: usize, global_mean: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let tables = Tables::new(&mut store, users, items, &config, &mut rng);
        let d = config.embed_dim;
        let widths = [2 * d, d, d / 2, 1];
        let mut mk = |k: usize, bias: Tensor<T>| {
            (
                store.add(format!("mlp{k}.w"), init::xavier(widths[k], widths[k + 1], &mut rng)),
                store.add(format!("mlp{k}.b"), bias),
            )
        };
        let layers = [
            mk(0, Tensor::zeros(&[widths[1]])),
            mk(1, Tensor::zeros(&[widths[2]])),
            mk(2, Tensor::scalar(T::from_f64_lossy(global_mean))),
        ];
        Ok(Self {
            config,
            tables,
            layers,
            store,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn predict_node(
        &self,
        g: &mut Graph<'_, T>,
        leaves: &[NodeId],
        ex: &Example,
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId> {
        let (p, q) = self.tables.lookup(g, leaves, ex)?;
        let x = g.concat(&[p, q])?;
        let n = g.value(x).len();
        let mut h = g.reshape(x, &[1, n])?;
        for (k, (w, b)) in self.layers.iter().enumerate() {
            h = g.linear(h, leaves[w.0], leaves[b.0])?;
            if k < 2 {
                h = g.relu(h)?;
                h = ops::dropout(g, h, self.config.dropout, ctx.training, &mut ctx.rng)?;
            }
        }
        g.reshape(h, &[1])
    }
}
