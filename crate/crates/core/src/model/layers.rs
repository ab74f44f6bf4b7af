//! Building blocks of the co-attention model, each recorded on a [`Graph`].

use crate::autodiff::ops::{self, mask_value, GumbelSample};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::data::ReviewBank;
use crate::{Error, Result, RngState, Scalar};

use super::config::{Aggregation, PointerMode};

/// Per-forward state: training flag and the noise stream for dropout and
/// Gumbel draws.
#[derive(Debug, Clone)]
pub struct ForwardCtx {
    pub training: bool,
    pub rng: RngState,
    /// Keep word-level affinity matrices in the trace.
    pub capture_words: bool,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            training: false,
            rng: RngState::new(0),
            capture_words: false,
        }
    }

    pub fn train(rng: RngState) -> Self {
        Self {
            training: true,
            rng,
            capture_words: false,
        }
    }
}

/// Leaf ids of an affine layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: NodeId,
    pub b: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    pub wg: NodeId,
    pub bg: NodeId,
    pub wu: NodeId,
    pub bu: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct FmParams {
    pub w0: NodeId,
    pub w: NodeId,
    pub v: NodeId,
}

/// Embedded bank of one side.
#[derive(Debug, Clone)]
pub struct SideEncoding {
    /// Word embeddings, `[reviews * words, d]`, zero at padding.
    pub words: NodeId,
    /// Review embeddings (sum of word embeddings), `[reviews, d]`.
    pub reviews: NodeId,
    /// Sum of all word embeddings of the side, `[d]`.
    pub sum: NodeId,
    pub review_masked: Vec<bool>,
    pub word_masked: Vec<Vec<bool>>,
    pub max_words: usize,
}

impl SideEncoding {
    pub fn is_empty(&self) -> bool {
        self.review_masked.iter().all(|&m| m)
    }

    pub fn first_valid(&self) -> Option<usize> {
        self.review_masked.iter().position(|&m| !m)
    }
}

/// Looks up every token of `bank` and sums them per review.
pub fn embed_reviews<T: Scalar>(g: &mut Graph<'_, T>, embedding: NodeId, bank: &ReviewBank) -> Result<SideEncoding> {
    let shape = bank.shape();
    let d = g.shape(embedding)[1];
    let (ids, masked) = bank.flat();
    let words = g.embedding(embedding, &ids, &masked)?;
    let cube = g.reshape(words, &[shape.max_reviews, shape.max_words, d])?;
    let reviews = g.sum(cube, 1)?;
    let sum = g.sum(reviews, 0)?;
    Ok(SideEncoding {
        words,
        reviews,
        sum,
        review_masked: bank.review_valid.iter().map(|v| !v).collect(),
        word_masked: bank.word_valid.iter().map(|r| r.iter().map(|v| !v).collect()).collect(),
        max_words: shape.max_words,
    })
}

fn row_mask(masked_rows: &[bool], cols: usize) -> Vec<bool> {
    masked_rows.iter().flat_map(|&m| std::iter::repeat_n(m, cols)).collect()
}

/// `sigmoid(x W_g + b_g) * tanh(x W_u + b_u)` per review; masked rows stay zero.
pub fn review_gate<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    p: &GateParams,
    review_masked: &[bool],
) -> Result<NodeId> {
    let gate = g.linear(x, p.wg, p.bg)?;
    let gate = g.sigmoid(gate)?;
    let upd = g.linear(x, p.wu, p.bu)?;
    let upd = g.tanh(upd)?;
    let out = g.hadamard(gate, upd)?;
    let d = g.shape(x)[1];
    g.masked_fill(out, row_mask(review_masked, d), T::zero())
}

/// ReLU feed-forward stack, dropout after every layer. Zero layers is the
/// identity.
pub fn feed_forward<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    layers: &[Dense],
    dropout: f64,
    ctx: &mut ForwardCtx,
) -> Result<NodeId> {
    let mut h = x;
    for l in layers {
        h = g.linear(h, l.w, l.b)?;
        h = g.relu(h)?;
        h = ops::dropout(g, h, dropout, ctx.training, &mut ctx.rng)?;
    }
    Ok(h)
}

/// `F(a) M F(b)^T` for row-stacked `a` and `b`.
pub fn bilinear_affinity<T: Scalar>(
    g: &mut Graph<'_, T>,
    a: NodeId,
    b: NodeId,
    m: NodeId,
    ffn: &[Dense],
    dropout: f64,
    ctx: &mut ForwardCtx,
) -> Result<NodeId> {
    let fa = feed_forward(g, a, ffn, dropout, ctx)?;
    let fb = feed_forward(g, b, ffn, dropout, ctx)?;
    let left = g.matmul(fa, m)?;
    let fbt = g.transpose(fb)?;
    g.matmul(left, fbt)
}

/// Review-level affinity with rows of masked user reviews and columns of
/// masked item reviews set to the mask value.
#[allow(clippy::too_many_arguments)]
pub fn review_affinity<T: Scalar>(
    g: &mut Graph<'_, T>,
    a: NodeId,
    b: NodeId,
    m: NodeId,
    ffn: &[Dense],
    user_masked: &[bool],
    item_masked: &[bool],
    dropout: f64,
    ctx: &mut ForwardCtx,
) -> Result<NodeId> {
    let s = bilinear_affinity(g, a, b, m, ffn, dropout, ctx)?;
    let mask: Vec<bool> = user_masked
        .iter()
        .flat_map(|&mu| item_masked.iter().map(move |&mi| mu || mi))
        .collect();
    g.masked_fill(s, mask, mask_value())
}

#[derive(Debug, Clone, Copy)]
pub struct PointerOptions {
    pub tau: f64,
    pub mode: PointerMode,
    pub training: bool,
}

fn check_selectable(user_masked: &[bool], item_masked: &[bool]) -> Result<()> {
    if user_masked.iter().all(|&m| m) || item_masked.iter().all(|&m| m) {
        return Err(Error::AllMasked { op: "select_pointers" });
    }
    Ok(())
}

/// Pointers from the row-wise and column-wise maxima of `s` through the
/// Gumbel-Softmax. The user pointer is drawn before the item pointer.
pub fn select_pointers<T: Scalar>(
    g: &mut Graph<'_, T>,
    s: NodeId,
    user_masked: &[bool],
    item_masked: &[bool],
    opts: PointerOptions,
    rng: &mut RngState,
) -> Result<(GumbelSample, GumbelSample)> {
    check_selectable(user_masked, item_masked)?;
    let (ku, ki) = (user_masked.len(), item_masked.len());
    let (na, nb) = if opts.training {
        (rng.gumbel_vec(ku), rng.gumbel_vec(ki))
    } else {
        (vec![T::zero(); ku], vec![T::zero(); ki])
    };
    let hard = opts.mode == PointerMode::Hard || !opts.training;
    select_pointers_with_noise(g, s, user_masked, item_masked, &na, &nb, opts.tau, hard)
}

#[allow(clippy::too_many_arguments)]
pub fn select_pointers_with_noise<T: Scalar>(
    g: &mut Graph<'_, T>,
    s: NodeId,
    user_masked: &[bool],
    item_masked: &[bool],
    noise_user: &[T],
    noise_item: &[T],
    tau: f64,
    hard: bool,
) -> Result<(GumbelSample, GumbelSample)> {
    check_selectable(user_masked, item_masked)?;
    let row_max = g.max(s, 1)?;
    let col_max = g.max(s, 0)?;
    let pa = ops::gumbel_softmax_with_noise(g, row_max, noise_user, tau, hard)?;
    let pb = ops::gumbel_softmax_with_noise(g, col_max, noise_item, tau, hard)?;
    Ok((pa, pb))
}

/// Word matrix `[words, d]` of the review picked by `pointer`, computed as a
/// contraction of the one-hot pointer with the stacked bank.
pub fn gather_review<T: Scalar>(
    g: &mut Graph<'_, T>,
    words: NodeId,
    pointer: NodeId,
    max_words: usize,
) -> Result<NodeId> {
    let r = g.value(pointer).len();
    let d = g.shape(words)[1];
    let stacked = g.reshape(words, &[r, max_words * d])?;
    let p = g.reshape(pointer, &[1, r])?;
    let picked = g.matmul(p, stacked)?;
    g.reshape(picked, &[max_words, d])
}

#[derive(Debug, Clone, Copy)]
pub struct WordCoAttention {
    pub user: NodeId,
    pub item: NodeId,
    pub affinity: NodeId,
    pub user_weights: Option<NodeId>,
    pub item_weights: Option<NodeId>,
}

fn indicator<T: Scalar>(masked: &[bool]) -> (Vec<T>, usize) {
    let v: Vec<T> = masked
        .iter()
        .map(|&m| if m { T::zero() } else { T::one() })
        .collect();
    let n = masked.iter().filter(|&&m| !m).count();
    (v, n)
}

/// Mean-pooled word-level co-attention. Averages and softmaxes only range
/// over unpadded words; a side with no words yields a zero vector.
#[allow(clippy::too_many_arguments)]
pub fn word_coattention<T: Scalar>(
    g: &mut Graph<'_, T>,
    a: NodeId,
    b: NodeId,
    a_masked: &[bool],
    b_masked: &[bool],
    m: NodeId,
    ffn: &[Dense],
    dropout: f64,
    ctx: &mut ForwardCtx,
) -> Result<WordCoAttention> {
    let (la, lb) = (a_masked.len(), b_masked.len());
    let d = g.shape(a)[1];
    let w = bilinear_affinity(g, a, b, m, ffn, dropout, ctx)?;
    let (ind_b, nb) = indicator::<T>(b_masked);
    let (ind_a, na) = indicator::<T>(a_masked);

    let side = |g: &mut Graph<'_, T>, logits: NodeId, masked: &[bool], rows: NodeId, len: usize| -> Result<(NodeId, Option<NodeId>)> {
        if masked.iter().all(|&x| x) {
            return Ok((g.constant(Tensor::zeros(&[d])), None));
        }
        let logits = g.reshape(logits, &[len])?;
        let weights = ops::masked_softmax(g, logits, masked)?;
        let wr = g.reshape(weights, &[1, len])?;
        let out = g.matmul(wr, rows)?;
        Ok((g.reshape(out, &[d])?, Some(weights)))
    };

    // user side: mean over item words of each row of w
    let col = g.constant(Tensor::new(vec![lb, 1], ind_b)?);
    let ua = g.matmul(w, col)?;
    let ua = g.scale(ua, T::one() / T::from_usize_lossy(nb.max(1)))?;
    let (user, user_weights) = side(g, ua, a_masked, a, la)?;

    let row = g.constant(Tensor::new(vec![1, la], ind_a)?);
    let vb = g.matmul(row, w)?;
    let vb = g.scale(vb, T::one() / T::from_usize_lossy(na.max(1)))?;
    let (item, item_weights) = side(g, vb, b_masked, b, lb)?;

    Ok(WordCoAttention {
        user,
        item,
        affinity: w,
        user_weights,
        item_weights,
    })
}

/// Combines per-pointer outputs with the side's sum embedding.
pub fn aggregate_pointers<T: Scalar>(
    g: &mut Graph<'_, T>,
    outputs: &[NodeId],
    sum: NodeId,
    scheme: Aggregation,
    layer: Option<&Dense>,
    dropout: f64,
    ctx: &mut ForwardCtx,
) -> Result<NodeId> {
    let mut parts = outputs.to_vec();
    parts.push(sum);
    match scheme {
        Aggregation::Concat => g.concat(&parts),
        Aggregation::Additive => {
            let mut acc = parts[0];
            for &p in &parts[1..] {
                acc = g.add(acc, p)?;
            }
            Ok(acc)
        }
        Aggregation::Neural => {
            let layer = layer.ok_or_else(|| Error::Config("neural aggregation needs its layer".into()))?;
            let x = g.concat(&parts)?;
            let n = g.value(x).len();
            let x = g.reshape(x, &[1, n])?;
            let h = g.linear(x, layer.w, layer.b)?;
            let h = g.relu(h)?;
            let h = ops::dropout(g, h, dropout, ctx.training, &mut ctx.rng)?;
            let d = g.value(h).len();
            g.reshape(h, &[d])
        }
    }
}

/// Second-order factorization machine over the vector `x`, using
/// `0.5 * sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2]` for the pairwise term.
pub fn fm_predict<T: Scalar>(g: &mut Graph<'_, T>, x: NodeId, p: &FmParams) -> Result<NodeId> {
    let n = g.value(x).len();
    if g.shape(p.v)[0] != n || g.value(p.w).len() != n {
        return Err(Error::Shape {
            op: "fm_predict",
            left: vec![n],
            right: g.shape(p.v).to_vec(),
        });
    }
    let xr = g.reshape(x, &[1, n])?;
    let w = g.reshape(p.w, &[n, 1])?;
    let linear = g.matmul(xr, w)?;
    let linear = g.reshape(linear, &[1])?;
    let xv = g.matmul(xr, p.v)?;
    let sq = g.square(xv)?;
    let x2 = g.square(xr)?;
    let v2 = g.square(p.v)?;
    let diag = g.matmul(x2, v2)?;
    let pair = g.sub(sq, diag)?;
    let pair = g.sum_all(pair)?;
    let pair = g.scale(pair, T::from_f64_lossy(0.5))?;
    let out = g.add(linear, pair)?;
    g.add(out, p.w0)
}
