// index loops here are the point: they are the naive oracles
#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use mpcn::autodiff::{Graph, Tensor};
use mpcn::data::BankShape;
use mpcn::model::layers::{self, Dense, FmParams, ForwardCtx, GateParams};
use mpcn::model::{Aggregation, Model, ModelSpec, Mpcn, MpcnConfig};
use mpcn::{RngState, Tensor64};

fn t(shape: &[usize], data: &[f64]) -> Tensor64 {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn rand_t(rng: &mut RngState, shape: &[usize], std: f64) -> Tensor64 {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal(std)).collect()).unwrap()
}

fn shape(r: usize, w: usize) -> BankShape {
    BankShape {
        max_reviews: r,
        max_words: w,
    }
}

#[test]
fn padded_reviews_embed_to_zero_and_single_tokens_to_their_row() {
    let mut rng = RngState::new(1);
    let emb = rand_t(&mut rng, &[6, 3], 1.0);
    let mut bank = mpcn::data::ReviewBank::empty("u", shape(3, 4));
    bank.push(&[4], None);
    let mut g = Graph::new();
    let e = g.param(&emb);
    let enc = layers::embed_reviews(&mut g, e, &bank).unwrap();
    let reviews = g.value(enc.reviews);
    assert_eq!(reviews.row(0), emb.row(4));
    assert!(reviews.row(1).iter().chain(reviews.row(2)).all(|&v| v == 0.0));
}

#[test]
fn review_embedding_ignores_token_order() {
    let mut rng = RngState::new(2);
    let emb = rand_t(&mut rng, &[9, 4], 1.0);
    let mut a = mpcn::data::ReviewBank::empty("u", shape(1, 5));
    let mut b = a.clone();
    a.push(&[2, 3, 5, 8], None);
    b.push(&[8, 5, 2, 3], None);
    let sum = |bank| {
        let mut g = Graph::new();
        let e = g.param(&emb);
        let enc = layers::embed_reviews(&mut g, e, bank).unwrap();
        g.value(enc.reviews).clone()
    };
    let (x, y) = (sum(&a), sum(&b));
    for (p, q) in x.data().iter().zip(y.data()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn out_of_vocabulary_token_is_an_index_error() {
    let emb = Tensor64::zeros(&[4, 2]);
    let mut bank = mpcn::data::ReviewBank::empty("u", shape(1, 2));
    bank.push(&[7], None);
    let mut g = Graph::new();
    let e = g.param(&emb);
    assert!(matches!(
        layers::embed_reviews(&mut g, e, &bank),
        Err(mpcn::Error::Index { .. })
    ));
}

#[test]
fn gate_of_zero_input_with_zero_params_is_zero_and_saturates_to_tanh() {
    let d = 3;
    let x = t(&[2, d], &[0.0, 0.0, 0.0, 0.4, -0.2, 0.9]);
    let mut rng = RngState::new(3);
    let wg = Tensor64::zeros(&[d, d]);
    let wu = rand_t(&mut rng, &[d, d], 1.0);
    let bu = rand_t(&mut rng, &[d], 1.0);
    let zero_b = Tensor64::zeros(&[d]);
    let big_b = Tensor64::full(&[d], 60.0);

    let mut g = Graph::new();
    let xs = g.constant(x.clone());
    let zero = g.param(&wg);
    let zb = g.param(&zero_b);
    let p0 = GateParams {
        wg: zero,
        bg: zb,
        wu: zero,
        bu: zb,
    };
    let out = layers::review_gate(&mut g, xs, &p0, &[false, false]).unwrap();
    assert!(g.value(out).data().iter().all(|&v| v == 0.0));

    let (wun, bun, bgn) = (g.param(&wu), g.param(&bu), g.param(&big_b));
    let p = GateParams {
        wg: zero,
        bg: bgn,
        wu: wun,
        bu: bun,
    };
    let out = layers::review_gate(&mut g, xs, &p, &[false, true]).unwrap();
    let expect = x.matmul(&wu).unwrap();
    let v = g.value(out);
    for c in 0..d {
        let want = (expect.at2(0, c) + bu.data()[c]).tanh();
        assert!((v.at2(0, c) - want).abs() < 1e-12);
        assert_eq!(v.at2(1, c), 0.0, "masked row stays zero");
    }
}

#[test]
fn affinity_with_identity_and_no_layers_is_plain_dot_products() {
    let mut rng = RngState::new(4);
    let a = rand_t(&mut rng, &[3, 4], 1.0);
    let b = rand_t(&mut rng, &[3, 4], 1.0);
    let eye = Tensor64::eye(4);
    let mut g = Graph::new();
    let (an, bn, m) = (g.constant(a.clone()), g.constant(b.clone()), g.param(&eye));
    let s = layers::review_affinity(&mut g, an, bn, m, &[], &[false; 3], &[false; 3], 0.0, &mut ForwardCtx::eval())
        .unwrap();
    let want = a.matmul(&b.transpose().unwrap()).unwrap();
    for (p, q) in g.value(s).data().iter().zip(want.data()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn affinity_matches_pairwise_loop_and_masks_rows_and_columns() {
    let mut rng = RngState::new(5);
    let d = 5;
    let a = rand_t(&mut rng, &[4, d], 1.0);
    let b = rand_t(&mut rng, &[4, d], 1.0);
    let m = rand_t(&mut rng, &[d, d], 1.0);
    let w = rand_t(&mut rng, &[d, d], 0.5);
    let bias = rand_t(&mut rng, &[d], 0.5);
    let um = [false, true, true, true];
    let im = [false, false, true, false];
    let mut g = Graph::new();
    let (an, bn, mn, wn, bb) = (
        g.constant(a.clone()),
        g.constant(b.clone()),
        g.param(&m),
        g.param(&w),
        g.param(&bias),
    );
    let s = layers::review_affinity(&mut g, an, bn, mn, &[Dense { w: wn, b: bb }], &um, &im, 0.0, &mut ForwardCtx::eval())
        .unwrap();
    let s = g.value(s).clone();
    let ffn = |row: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|c| {
                let z: f64 = (0..d).map(|k| row[k] * w.at2(k, c)).sum::<f64>() + bias.data()[c];
                z.max(0.0)
            })
            .collect()
    };
    let mut above = 0;
    for i in 0..4 {
        for j in 0..4 {
            if um[i] || im[j] {
                assert_eq!(s.at2(i, j), -1e9);
                continue;
            }
            above += 1;
            let (fa, fb) = (ffn(a.row(i)), ffn(b.row(j)));
            let mut want = 0.0;
            for p in 0..d {
                for q in 0..d {
                    want += fa[p] * m.at2(p, q) * fb[q];
                }
            }
            assert!((s.at2(i, j) - want).abs() < 1e-9);
        }
    }
    assert_eq!(above, 3, "only one user row survives masking");
}

#[test]
fn eval_pointers_follow_the_pooled_maximum() {
    let r = 6;
    let mut data = vec![0.0; r * r];
    data[2 * r + 5] = 9.0;
    data[2 * r + 1] = 3.0;
    data[4 * r + 5] = 2.0;
    let s = t(&[r, r], &data);
    let mut g = Graph::new();
    let sn = g.constant(s);
    let opts = layers::PointerOptions {
        tau: 1.0,
        mode: mpcn::model::PointerMode::Hard,
        training: false,
    };
    let (pa, pb) =
        layers::select_pointers(&mut g, sn, &[false; 6], &[false; 6], opts, &mut RngState::new(0)).unwrap();
    assert_eq!((pa.index, pb.index), (2, 5));
    assert_eq!(g.value(pa.node).data(), Tensor64::one_hot(6, 2).data());
    assert_eq!(g.value(pb.node).data(), Tensor64::one_hot(6, 5).data());
}

#[test]
fn single_review_banks_point_at_that_review() {
    let mut g = Graph::new();
    let s = g.constant(t(&[1, 1], &[-0.3]));
    let opts = layers::PointerOptions {
        tau: 1.0,
        mode: mpcn::model::PointerMode::Hard,
        training: true,
    };
    let (pa, pb) = layers::select_pointers(&mut g, s, &[false], &[false], opts, &mut RngState::new(9)).unwrap();
    assert_eq!(g.value(pa.node).data(), &[1.0]);
    assert_eq!(g.value(pb.node).data(), &[1.0]);
}

#[test]
fn fully_masked_affinity_cannot_be_pointed_into() {
    let mut g = Graph::new();
    let s = g.constant(Tensor64::full(&[2, 2], -1e9));
    let opts = layers::PointerOptions {
        tau: 1.0,
        mode: mpcn::model::PointerMode::Hard,
        training: false,
    };
    let r = layers::select_pointers(&mut g, s, &[true, true], &[false, false], opts, &mut RngState::new(0));
    assert!(matches!(r, Err(mpcn::Error::AllMasked { .. })));
}

#[test]
fn gathering_by_one_hot_matches_direct_indexing() {
    let mut rng = RngState::new(6);
    let (r, w, d) = (4, 3, 2);
    let words = rand_t(&mut rng, &[r * w, d], 1.0);
    for k in 0..r {
        let mut g = Graph::new();
        let wn = g.constant(words.clone());
        let p = g.constant(Tensor64::one_hot(r, k));
        let out = layers::gather_review(&mut g, wn, p, w).unwrap();
        assert_eq!(g.shape(out), &[w, d]);
        assert_eq!(g.value(out).data(), &words.data()[k * w * d..(k + 1) * w * d]);
    }
}

fn coattend(a: &Tensor64, b: &Tensor64, am: &[bool], bm: &[bool], m: &Tensor64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut g = Graph::new();
    let (an, bn, mn) = (g.constant(a.clone()), g.constant(b.clone()), g.param(m));
    let wc = layers::word_coattention(&mut g, an, bn, am, bm, mn, &[], 0.0, &mut ForwardCtx::eval()).unwrap();
    let weights = |n: Option<mpcn::NodeId>| n.map(|n| g.value(n).data().to_vec()).unwrap_or_default();
    (
        g.value(wc.user).data().to_vec(),
        g.value(wc.item).data().to_vec(),
        weights(wc.user_weights),
        weights(wc.item_weights),
    )
}

#[test]
fn uniform_word_affinity_gives_the_mean_of_unpadded_words() {
    let mut rng = RngState::new(7);
    let a = rand_t(&mut rng, &[4, 3], 1.0);
    let b = rand_t(&mut rng, &[4, 3], 1.0);
    let am = [false, false, true, false];
    let (ua, _, wa, _) = coattend(&a, &b, &am, &[false; 4], &Tensor64::zeros(&[3, 3]));
    for c in 0..3 {
        let mean = (a.at2(0, c) + a.at2(1, c) + a.at2(3, c)) / 3.0;
        assert!((ua[c] - mean).abs() < 1e-12);
    }
    assert_eq!(wa[2], 0.0);
}

#[test]
fn single_unpadded_word_is_returned_verbatim() {
    let mut rng = RngState::new(8);
    let a = rand_t(&mut rng, &[3, 2], 1.0);
    let b = rand_t(&mut rng, &[3, 2], 1.0);
    let m = rand_t(&mut rng, &[2, 2], 1.0);
    let (ua, _, _, _) = coattend(&a, &b, &[true, false, true], &[false, false, true], &m);
    for c in 0..2 {
        assert!((ua[c] - a.at2(1, c)).abs() < 1e-12);
    }
}

#[test]
fn word_attention_outputs_lie_in_the_convex_hull() {
    let mut rng = RngState::new(9);
    for trial in 0..20 {
        let a = rand_t(&mut rng, &[5, 3], 2.0);
        let b = rand_t(&mut rng, &[5, 3], 2.0);
        let m = rand_t(&mut rng, &[3, 3], 1.0);
        let am: Vec<bool> = (0..5).map(|k| k > 0 && rng.uniform() < 0.4).collect();
        let bm: Vec<bool> = (0..5).map(|k| k > 0 && rng.uniform() < 0.4).collect();
        let (ua, ub, wa, wb) = coattend(&a, &b, &am, &bm, &m);
        for (x, w, mask, out) in [(&a, &wa, &am, &ua), (&b, &wb, &bm, &ub)] {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-5, "trial {trial}");
            assert!(w.iter().all(|&p| p >= 0.0));
            assert!(w.iter().zip(mask.iter()).all(|(&p, &m)| !m || p == 0.0));
            for c in 0..3 {
                let rebuilt: f64 = (0..5).map(|k| w[k] * x.at2(k, c)).sum();
                assert!((rebuilt - out[c]).abs() < 1e-10);
            }
        }
    }
}

fn aggregate(outs: &[Tensor64], sum: &Tensor64, scheme: Aggregation) -> Vec<f64> {
    let mut g = Graph::new();
    let ids: Vec<_> = outs.iter().map(|o| g.constant(o.clone())).collect();
    let s = g.constant(sum.clone());
    let n = layers::aggregate_pointers(&mut g, &ids, s, scheme, None, 0.0, &mut ForwardCtx::eval()).unwrap();
    g.value(n).data().to_vec()
}

#[test]
fn aggregation_shapes_and_symmetries() {
    let mut rng = RngState::new(10);
    let d = 4;
    let outs: Vec<Tensor64> = (0..3).map(|_| rand_t(&mut rng, &[d], 1.0)).collect();
    let sum = rand_t(&mut rng, &[d], 1.0);

    let single = aggregate(&outs[..1], &Tensor64::zeros(&[d]), Aggregation::Additive);
    assert_eq!(single, outs[0].data());

    let cat = aggregate(&outs, &sum, Aggregation::Concat);
    assert_eq!(cat.len(), (3 + 1) * d);

    let rev: Vec<Tensor64> = outs.iter().rev().cloned().collect();
    let add_a = aggregate(&outs, &sum, Aggregation::Additive);
    let add_b = aggregate(&rev, &sum, Aggregation::Additive);
    for (p, q) in add_a.iter().zip(&add_b) {
        assert!((p - q).abs() < 1e-12);
    }
    assert_ne!(cat, aggregate(&rev, &sum, Aggregation::Concat));
}

#[test]
fn neural_aggregation_without_its_layer_is_a_config_error() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor64::zeros(&[2]));
    let r = layers::aggregate_pointers(&mut g, &[x], x, Aggregation::Neural, None, 0.0, &mut ForwardCtx::eval());
    assert!(matches!(r, Err(mpcn::Error::Config(_))));
}

fn fm_value(x: &[f64], w0: f64, w: &[f64], v: &Tensor64) -> f64 {
    let (w0t, wt) = (Tensor64::scalar(w0), t(&[w.len()], w));
    let mut g = Graph::new();
    let xn = g.constant(t(&[x.len()], x));
    let p = FmParams {
        w0: g.param(&w0t),
        w: g.param(&wt),
        v: g.param(v),
    };
    let out = layers::fm_predict(&mut g, xn, &p).unwrap();
    g.value(out).item()
}

#[test]
fn fm_hand_evaluation() {
    let v = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    assert!((fm_value(&[1.0, 2.0], 0.5, &[0.1, 0.2], &v) - 1.0).abs() < 1e-12);
    assert_eq!(fm_value(&[0.0, 0.0, 0.0], 0.0, &[0.0; 3], &Tensor64::zeros(&[3, 2])), 0.0);
    assert_eq!(fm_value(&[1.0, -2.0, 3.0], 0.0, &[0.0; 3], &Tensor64::zeros(&[3, 2])), 0.0);
}

#[test]
fn fm_efficient_form_matches_pairwise_sum() {
    let mut rng = RngState::new(11);
    for case in 0..100 {
        let n = 1 + rng.below(60);
        let k = 1 + rng.below(10);
        let x: Vec<f64> = (0..n).map(|_| rng.normal(1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.normal(1.0)).collect();
        let w0 = rng.normal(1.0);
        let v = rand_t(&mut rng, &[n, k], 1.0);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| v.row(i).to_vec()).collect();
        let want = naive_fm(&x, w0, &w, &rows);
        let got = fm_value(&x, w0, &w, &v);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "case {case}: {got} vs {want}");
    }
}

#[test]
fn fm_dimension_mismatch_is_an_error() {
    let (w0, w, v) = (Tensor64::scalar(0.0), Tensor64::zeros(&[3]), Tensor64::zeros(&[3, 2]));
    let mut g = Graph::new();
    let x = g.constant(Tensor64::zeros(&[4]));
    let p = FmParams {
        w0: g.param(&w0),
        w: g.param(&w),
        v: g.param(&v),
    };
    assert!(matches!(layers::fm_predict(&mut g, x, &p), Err(mpcn::Error::Shape { .. })));
}

fn tiny_model(cfg: MpcnConfig, seed: u64) -> Mpcn<f64> {
    Mpcn::new(cfg, 12, shape(4, 5), 3.5, seed).unwrap()
}

#[test]
fn inner_product_head_on_identical_sides_is_a_squared_norm() {
    let mut cfg = small_config(4, 2, 0, Aggregation::Concat);
    cfg.use_fm = false;
    cfg.use_gates = false;
    let mut model = tiny_model(cfg, 1);
    // symmetric bilinear forms make both sides see the same affinities
    for name in ["head0.m", "head1.m", "word.m"] {
        let id = model.params().find(name).unwrap();
        *model.params_mut().get_mut(id) = Tensor64::eye(4);
    }
    let mut rng = RngState::new(2);
    let bank = random_bank(&mut rng, shape(4, 5), 12, 3);
    let mut g = Graph::new();
    let leaves = model.params().register(&mut g);
    let (af, bf, _) = model.features(&mut g, &leaves, &bank, &bank, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(g.value(af).data(), g.value(bf).data());
    let norm: f64 = g.value(af).data().iter().map(|v| v * v).sum();
    let (r, _) = model.predict(&bank, &bank, &mut ForwardCtx::eval()).unwrap();
    assert!((r - norm).abs() < 1e-9 * norm.max(1.0));
}

#[test]
fn evaluation_forward_is_deterministic() {
    let model = tiny_model(small_config(4, 3, 1, Aggregation::Neural), 3);
    let mut rng = RngState::new(4);
    let ub = random_bank(&mut rng, shape(4, 5), 12, 4);
    let ib = random_bank(&mut rng, shape(4, 5), 12, 2);
    let a = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
    let b = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
}

#[test]
fn zeroing_one_head_only_changes_that_heads_trace() {
    let mut model = tiny_model(small_config(4, 3, 1, Aggregation::Concat), 5);
    let mut rng = RngState::new(6);
    let ub = random_bank(&mut rng, shape(4, 5), 12, 4);
    let ib = random_bank(&mut rng, shape(4, 5), 12, 4);
    let (_, before) = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
    for name in model.head_param_names(1) {
        let id = model.params().find(&name).unwrap();
        let p = model.params_mut().get_mut(id);
        *p = Tensor64::zeros(p.shape());
    }
    let (_, after) = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(before.heads[0], after.heads[0]);
    assert_eq!(before.heads[2], after.heads[2]);
    assert_ne!(before.heads[1].affinity, after.heads[1].affinity);
}

#[test]
fn empty_bank_falls_back_to_row_zero_and_first_valid_review() {
    let model = tiny_model(small_config(4, 2, 0, Aggregation::Additive), 7);
    let empty = mpcn::data::ReviewBank::empty("u", shape(4, 5));
    let mut ib = mpcn::data::ReviewBank::empty("i", shape(4, 5));
    ib.review_valid[0] = false;
    ib.push(&[3, 4], None);
    let (r, trace) = model.predict(&empty, &ib, &mut ForwardCtx::eval()).unwrap();
    assert!(r.is_finite());
    assert!(trace.pairs().iter().all(|&p| p == (0, 0)));
}

#[test]
fn pointers_land_on_unmasked_reviews() {
    let model = tiny_model(small_config(4, 3, 1, Aggregation::Neural), 9);
    let mut rng = RngState::new(10);
    for _ in 0..20 {
        let (nu, ni) = (1 + rng.below(4), 1 + rng.below(4));
        let ub = random_bank(&mut rng, shape(4, 5), 12, nu);
        let ib = random_bank(&mut rng, shape(4, 5), 12, ni);
        let (_, tr) = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
        for (a, b) in tr.pairs() {
            assert!(ub.review_valid[a] && ib.review_valid[b]);
        }
    }
}

#[test]
fn ablations_build_and_predict() {
    let mut rng = RngState::new(12);
    let ub = random_bank(&mut rng, shape(4, 5), 12, 3);
    let ib = random_bank(&mut rng, shape(4, 5), 12, 3);
    let variants: [fn(&mut MpcnConfig); 6] = [
        |c| c.use_gates = false,
        |c| c.use_fm = false,
        |c| c.use_word_coattention = false,
        |c| c.use_review_coattention = false,
        |c| c.ffn_layers = 2,
        |c| c.aggregation = Aggregation::Concat,
    ];
    for (k, f) in variants.iter().enumerate() {
        let mut cfg = small_config(4, 3, 1, Aggregation::Neural);
        f(&mut cfg);
        let model = tiny_model(cfg, k as u64);
        let (r, tr) = model.predict(&ub, &ib, &mut ForwardCtx::eval()).unwrap();
        assert!(r.is_finite(), "variant {k}");
        let want = if cfg.use_review_coattention { 3 } else { 0 };
        assert_eq!(tr.heads.len(), want);
    }
}

#[test]
fn spec_round_trips_through_the_model_enum() {
    let spec = ModelSpec::Mpcn {
        config: small_config(4, 3, 1, Aggregation::Neural),
        vocab_size: 12,
        bank_shape: shape(4, 5),
    };
    let m: Model<f32> = Model::build(&spec, 3.0, 1).unwrap();
    assert_eq!(m.spec(), spec);
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
}
