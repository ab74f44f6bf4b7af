use serde::{Deserialize, Serialize};

use super::config::{Aggregation, MpcnConfig};
use super::init;
use super::layers::{self, Dense, FmParams, ForwardCtx, GateParams, PointerOptions, SideEncoding};
use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::data::{BankShape, Banks, Example, ReviewBank};
use crate::{Error, Result, RngState, Scalar};

/// Selection made by one pointer head for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTrace {
    pub user_review: usize,
    pub item_review: usize,
    /// Review-level affinity, masked entries at the mask value.
    pub affinity: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub word_affinity: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointerTrace {
    pub heads: Vec<HeadTrace>,
}

impl PointerTrace {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.heads.iter().map(|h| (h.user_review, h.item_review)).collect()
    }
}

#[derive(Debug, Clone)]
struct HeadLayout {
    m: ParamId,
    ffn: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    gate: Option<[ParamId; 4]>,
    heads: Vec<HeadLayout>,
    word: HeadLayout,
    agg: Option<(ParamId, ParamId)>,
    fm: Option<[ParamId; 3]>,
}

/// Multi-pointer co-attention rating model.
#[derive(Debug, Clone)]
pub struct Mpcn<T: Scalar> {
    config: MpcnConfig,
    vocab_size: usize,
    shape: BankShape,
    store: ParamStore<T>,
    layout: Layout,
}

fn to_rows<T: Scalar>(t: &Tensor<T>) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|v| v.to_f64_lossy()).collect())
        .collect()
}

impl<T: Scalar> Mpcn<T> {
    /// Randomly initialised model. `rating_mean` seeds the FM global bias.
    pub fn new(config: MpcnConfig, vocab_size: usize, shape: BankShape, rating_mean: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 || shape.max_reviews == 0 || shape.max_words == 0 {
            return Err(Error::Config("vocabulary and bank shape must be non-empty".into()));
        }
        let mut rng = RngState::new(seed);
        let d = config.embed_dim;
        let mut store = ParamStore::new();
        let embedding = store.add(
            "embedding",
            init::normal(&[vocab_size, d], config.embed_init_std, &mut rng),
        );
        let gate = config.use_gates.then(|| {
            [
                store.add("gate.w_g", init::xavier(d, d, &mut rng)),
                store.add("gate.b_g", Tensor::zeros(&[d])),
                store.add("gate.w_u", init::xavier(d, d, &mut rng)),
                store.add("gate.b_u", Tensor::zeros(&[d])),
            ]
        });
        let head = |store: &mut ParamStore<T>, prefix: &str, rng: &mut RngState| HeadLayout {
            m: store.add(format!("{prefix}.m"), init::xavier(d, d, rng)),
            ffn: (0..config.ffn_layers)
                .map(|k| {
                    (
                        store.add(format!("{prefix}.ffn{k}.w"), init::xavier(d, d, rng)),
                        store.add(format!("{prefix}.ffn{k}.b"), Tensor::zeros(&[d])),
                    )
                })
                .collect(),
        };
        let heads = if config.use_review_coattention {
            (0..config.pointers)
                .map(|h| head(&mut store, &format!("head{h}"), &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let word = head(&mut store, "word", &mut rng);
        let agg = (config.aggregation == Aggregation::Neural).then(|| {
            let fan_in = (config.effective_pointers() + 1) * d;
            (
                store.add("agg.w", init::xavier(fan_in, d, &mut rng)),
                store.add("agg.b", Tensor::zeros(&[d])),
            )
        });
        let fm = config.use_fm.then(|| {
            let n = 2 * config.side_dim();
            [
                store.add("fm.w0", Tensor::scalar(T::from_f64_lossy(rating_mean))),
                store.add("fm.w", init::normal(&[n], 0.01, &mut rng)),
                store.add("fm.v", init::normal(&[n, config.fm_factors], 0.01, &mut rng)),
            ]
        });
        Ok(Self {
            config,
            vocab_size,
            shape,
            store,
            layout: Layout {
                embedding,
                gate,
                heads,
                word,
                agg,
                fm,
            },
        })
    }

    pub fn config(&self) -> &MpcnConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn bank_shape(&self) -> BankShape {
        self.shape
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Parameter names belonging to pointer head `h`.
    pub fn head_param_names(&self, h: usize) -> Vec<String> {
        let prefix = format!("head{h}.");
        self.store
            .iter()
            .filter(|p| p.name.starts_with(&prefix))
            .map(|p| p.name.clone())
            .collect()
    }

    fn dense(leaves: &[NodeId], ids: &[(ParamId, ParamId)]) -> Vec<Dense> {
        ids.iter()
            .map(|(w, b)| Dense {
                w: leaves[w.0],
                b: leaves[b.0],
            })
            .collect()
    }

    fn encode(&self, g: &mut Graph<'_, T>, leaves: &[NodeId], bank: &ReviewBank) -> Result<SideEncoding> {
        if bank.shape() != self.shape {
            return Err(Error::Shape {
                op: "embed_reviews",
                left: vec![self.shape.max_reviews, self.shape.max_words],
                right: vec![bank.shape().max_reviews, bank.shape().max_words],
            });
        }
        layers::embed_reviews(g, leaves[self.layout.embedding.0], bank)
    }

    /// Records everything up to the prediction layer and returns the
    /// aggregated side vectors `(a_f, b_f)` with the pointer trace.
    pub fn features(
        &self,
        g: &mut Graph<'_, T>,
        leaves: &[NodeId],
        user: &ReviewBank,
        item: &ReviewBank,
        ctx: &mut ForwardCtx,
    ) -> Result<(NodeId, NodeId, PointerTrace)> {
        let cfg = &self.config;
        let drop = cfg.dropout;
        let ua = self.encode(g, leaves, user)?;
        let ib = self.encode(g, leaves, item)?;
        let (a, b) = match self.layout.gate {
            Some([wg, bg, wu, bu]) => {
                let p = GateParams {
                    wg: leaves[wg.0],
                    bg: leaves[bg.0],
                    wu: leaves[wu.0],
                    bu: leaves[bu.0],
                };
                (
                    layers::review_gate(g, ua.reviews, &p, &ua.review_masked)?,
                    layers::review_gate(g, ib.reviews, &p, &ib.review_masked)?,
                )
            }
            None => (ua.reviews, ib.reviews),
        };
        let word_m = leaves[self.layout.word.m.0];
        let word_ffn = Self::dense(leaves, &self.layout.word.ffn);
        let mut trace = PointerTrace::default();
        let mut outs_a = Vec::new();
        let mut outs_b = Vec::new();

        if !cfg.use_review_coattention {
            // Word-level co-attention over each side's whole document.
            let am: Vec<bool> = ua.word_masked.concat();
            let bm: Vec<bool> = ib.word_masked.concat();
            let wc = layers::word_coattention(g, ua.words, ib.words, &am, &bm, word_m, &word_ffn, drop, ctx)?;
            outs_a.push(wc.user);
            outs_b.push(wc.item);
        } else {
            let opts = PointerOptions {
                tau: cfg.tau,
                mode: cfg.pointer_mode,
                training: ctx.training,
            };
            let degenerate = ua.is_empty() || ib.is_empty();
            for head in &self.layout.heads {
                let ffn = Self::dense(leaves, &head.ffn);
                let s = layers::review_affinity(
                    g,
                    a,
                    b,
                    leaves[head.m.0],
                    &ffn,
                    &ua.review_masked,
                    &ib.review_masked,
                    drop,
                    ctx,
                )?;
                let (pa, ia, pb, ib_idx) = if degenerate {
                    // No pairing signal: fall back to the first real review,
                    // or row 0 of an empty bank.
                    let ia = ua.first_valid().unwrap_or(0);
                    let ibx = ib.first_valid().unwrap_or(0);
                    let pa = g.constant(Tensor::one_hot(self.shape.max_reviews, ia));
                    let pb = g.constant(Tensor::one_hot(self.shape.max_reviews, ibx));
                    (pa, ia, pb, ibx)
                } else {
                    let (pa, pb) =
                        layers::select_pointers(g, s, &ua.review_masked, &ib.review_masked, opts, &mut ctx.rng)?;
                    (pa.node, pa.index, pb.node, pb.index)
                };
                let mut head_trace = HeadTrace {
                    user_review: ia,
                    item_review: ib_idx,
                    affinity: to_rows(g.value(s)),
                    word_affinity: None,
                };
                if cfg.use_word_coattention {
                    let ra = layers::gather_review(g, ua.words, pa, self.shape.max_words)?;
                    let rb = layers::gather_review(g, ib.words, pb, self.shape.max_words)?;
                    let wc = layers::word_coattention(
                        g,
                        ra,
                        rb,
                        &ua.word_masked[ia],
                        &ib.word_masked[ib_idx],
                        word_m,
                        &word_ffn,
                        drop,
                        ctx,
                    )?;
                    if ctx.capture_words {
                        head_trace.word_affinity = Some(to_rows(g.value(wc.affinity)));
                    }
                    outs_a.push(wc.user);
                    outs_b.push(wc.item);
                } else {
                    let r = self.shape.max_reviews;
                    let d = cfg.embed_dim;
                    let pa_row = g.reshape(pa, &[1, r])?;
                    let pb_row = g.reshape(pb, &[1, r])?;
                    let sa = g.matmul(pa_row, a)?;
                    let sb = g.matmul(pb_row, b)?;
                    outs_a.push(g.reshape(sa, &[d])?);
                    outs_b.push(g.reshape(sb, &[d])?);
                }
                trace.heads.push(head_trace);
            }
        }

        let agg = self.layout.agg.map(|(w, b)| Dense {
            w: leaves[w.0],
            b: leaves[b.0],
        });
        let af = layers::aggregate_pointers(g, &outs_a, ua.sum, cfg.aggregation, agg.as_ref(), drop, ctx)?;
        let bf = layers::aggregate_pointers(g, &outs_b, ib.sum, cfg.aggregation, agg.as_ref(), drop, ctx)?;
        Ok((af, bf, trace))
    }

    /// Records the full forward pass for one user/item pair and returns the
    /// rating node together with the pointer trace.
    pub fn forward(
        &self,
        g: &mut Graph<'_, T>,
        leaves: &[NodeId],
        user: &ReviewBank,
        item: &ReviewBank,
        ctx: &mut ForwardCtx,
    ) -> Result<(NodeId, PointerTrace)> {
        let (af, bf, trace) = self.features(g, leaves, user, item, ctx)?;
        let rating = match self.layout.fm {
            Some([w0, w, v]) => {
                let x = g.concat(&[af, bf])?;
                layers::fm_predict(
                    g,
                    x,
                    &FmParams {
                        w0: leaves[w0.0],
                        w: leaves[w.0],
                        v: leaves[v.0],
                    },
                )?
            }
            None => g.dot(af, bf)?,
        };
        Ok((rating, trace))
    }

    /// Forward pass outside any training loop.
    pub fn predict(&self, user: &ReviewBank, item: &ReviewBank, ctx: &mut ForwardCtx) -> Result<(T, PointerTrace)> {
        let mut g = Graph::new();
        let leaves = self.store.register(&mut g);
        let (r, trace) = self.forward(&mut g, &leaves, user, item, ctx)?;
        Ok((g.value(r).item(), trace))
    }

    pub fn predict_example(&self, ex: &Example, banks: &Banks, ctx: &mut ForwardCtx) -> Result<(T, PointerTrace)> {
        self.predict(&banks.user_banks[ex.user], &banks.item_banks[ex.item], ctx)
    }
}
