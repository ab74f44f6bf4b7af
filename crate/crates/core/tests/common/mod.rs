#![allow(dead_code)]

use mpcn::data::{BankShape, Banks, Example, ReviewBank};
use mpcn::model::{Aggregation, MpcnConfig, PointerMode};
use mpcn::RngState;

/// Bank with `valid` random reviews of 1..=max_words tokens in `[2, vocab)`.
pub fn random_bank(rng: &mut RngState, shape: BankShape, vocab: usize, valid: usize) -> ReviewBank {
    let mut bank = ReviewBank::empty("x", shape);
    for _ in 0..valid.min(shape.max_reviews) {
        let len = 1 + rng.below(shape.max_words);
        let ids: Vec<u32> = (0..len).map(|_| (2 + rng.below(vocab - 2)) as u32).collect();
        bank.push(&ids, None);
    }
    bank
}

pub fn banks_of(users: Vec<ReviewBank>, items: Vec<ReviewBank>) -> Banks {
    Banks {
        users: (0..users.len()).map(|u| format!("u{u}")).collect(),
        items: (0..items.len()).map(|i| format!("i{i}")).collect(),
        user_banks: users,
        item_banks: items,
    }
}

pub fn small_config(d: usize, pointers: usize, ffn_layers: usize, aggregation: Aggregation) -> MpcnConfig {
    MpcnConfig {
        embed_dim: d,
        pointers,
        ffn_layers,
        aggregation,
        fm_factors: 3,
        dropout: 0.0,
        pointer_mode: PointerMode::Soft,
        embed_init_std: 0.5,
        ..MpcnConfig::default()
    }
}

pub fn example(user: usize, item: usize, rating: f64) -> Example {
    Example {
        user,
        item,
        rating,
        source: 0,
    }
}

/// `0.5 * sum_{i<j} <v_i, v_j> x_i x_j + w0 + w.x` evaluated pair by pair.
pub fn naive_fm(x: &[f64], w0: f64, w: &[f64], v: &[Vec<f64>]) -> f64 {
    let mut out = w0;
    for i in 0..x.len() {
        out += w[i] * x[i];
    }
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dot: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
            out += dot * x[i] * x[j];
        }
    }
    out
}
