//! Generated corpora for tests, demos and scaled-down experiments.
//!
//! [`review_corpus`] plants a latent preference model and writes review text
//! whose words carry the signal: topic words name the item's category, the
//! sentiment words follow the rating, and each user mentions the categories
//! they favour. [`planted_mf`] produces small interaction sets rated by a
//! planted inner-product model, with text that identifies the user and item.

use super::{DatasetSplit, Interaction};
use crate::RngState;

const TOPICS: [&[&str]; 5] = [
    &[
        "coffee", "roast", "beans", "espresso", "brew", "aroma", "mug", "latte", "caffeine", "grind",
        "tea", "cocoa", "chocolate", "flavor", "snack",
    ],
    &[
        "phone", "charger", "battery", "cable", "screen", "case", "usb", "bluetooth", "headphones",
        "speaker", "adapter", "charging", "device", "volume", "button",
    ],
    &[
        "game", "rpg", "puzzle", "level", "graphics", "controller", "story", "multiplayer", "quest",
        "boss", "gameplay", "console", "characters", "missions", "sequel",
    ],
    &[
        "book", "author", "chapter", "novel", "plot", "writing", "pages", "characters", "ending",
        "read", "series", "story", "prose", "edition", "paperback",
    ],
    &[
        "skin", "lotion", "scent", "cream", "hair", "shampoo", "moisturizer", "fragrance", "soap",
        "brush", "nail", "polish", "serum", "face", "oil",
    ],
];

const POSITIVE: &[&str] = &[
    "great", "love", "excellent", "perfect", "amazing", "recommend", "wonderful", "best", "happy",
    "awesome", "fantastic", "favorite",
];
const NEUTRAL: &[&str] = &[
    "okay", "fine", "average", "decent", "alright", "expected", "ordinary", "fair",
];
const NEGATIVE: &[&str] = &[
    "terrible", "broke", "awful", "waste", "disappointed", "poor", "worst", "refund", "cheap",
    "bad", "returned", "useless",
];
const FILLER: &[&str] = &[
    "the", "a", "this", "it", "is", "was", "and", "i", "for", "with", "my", "but", "very", "really",
    "product", "bought", "would", "again", "just", "one", "when", "after", "so", "of",
];

#[derive(Debug, Clone, Copy)]
pub struct ReviewCorpusConfig {
    pub users: usize,
    pub items: usize,
    pub per_user: usize,
    /// Standard deviation of the per-review rating noise before rounding.
    pub rating_noise: f64,
    pub seed: u64,
}

impl Default for ReviewCorpusConfig {
    fn default() -> Self {
        Self {
            users: 450,
            items: 260,
            per_user: 12,
            rating_noise: 0.3,
            seed: 7,
        }
    }
}

fn pick<'a>(rng: &mut RngState, words: &[&'a str]) -> &'a str {
    words[rng.below(words.len())]
}

/// Review corpus with a planted category/quality preference model.
pub fn review_corpus(cfg: ReviewCorpusConfig) -> Vec<Interaction> {
    let mut rng = RngState::new(cfg.seed);
    let k = TOPICS.len();
    let item_topic: Vec<usize> = (0..cfg.items).map(|_| rng.below(k)).collect();
    let item_quality: Vec<f64> = (0..cfg.items).map(|_| rng.normal(1.0)).collect();
    // Zipf-like popularity so the item side has a dense head.
    let item_weight: Vec<f64> = (0..cfg.items).map(|i| 1.0 / (1.0 + i as f64).powf(0.5)).collect();
    let mut out = Vec::with_capacity(cfg.users * cfg.per_user);
    for u in 0..cfg.users {
        let bias = rng.normal(0.5);
        let affinity: Vec<f64> = (0..k).map(|_| rng.normal(1.0)).collect();
        let favourite = crate::autodiff::tensor::argmax(&affinity);
        let mut seen = std::collections::BTreeSet::new();
        let mut t = 1_300_000_000 + rng.below(10_000_000) as i64;
        while seen.len() < cfg.per_user.min(cfg.items) {
            // prefer the favourite category 40% of the time
            let item = if rng.uniform() < 0.4 {
                let cands: Vec<usize> = (0..cfg.items).filter(|&i| item_topic[i] == favourite).collect();
                if cands.is_empty() {
                    rng.below(cfg.items)
                } else {
                    cands[rng.below(cands.len())]
                }
            } else {
                let total: f64 = item_weight.iter().sum();
                let mut r = rng.uniform() * total;
                let mut chosen = cfg.items - 1;
                for (i, w) in item_weight.iter().enumerate() {
                    if r < *w {
                        chosen = i;
                        break;
                    }
                    r -= w;
                }
                chosen
            };
            if !seen.insert(item) {
                continue;
            }
            let topic = item_topic[item];
            let raw = 3.6 + 0.8 * item_quality[item] + bias + 0.6 * affinity[topic] + rng.normal(cfg.rating_noise);
            let rating = raw.round().clamp(1.0, 5.0);
            let mut words: Vec<&str> = Vec::new();
            let n_topic = 3 + rng.below(3);
            for _ in 0..n_topic {
                words.push(pick(&mut rng, TOPICS[topic]));
            }
            let (n_pos, n_neu, n_neg) = match rating as i64 {
                5 => (3, 0, 0),
                4 => (2, 1, 0),
                3 => (0, 2, 1),
                2 => (0, 1, 2),
                _ => (0, 0, 3),
            };
            for _ in 0..n_pos {
                words.push(pick(&mut rng, POSITIVE));
            }
            for _ in 0..n_neu {
                words.push(pick(&mut rng, NEUTRAL));
            }
            for _ in 0..n_neg {
                words.push(pick(&mut rng, NEGATIVE));
            }
            words.push("usually");
            words.push(pick(&mut rng, TOPICS[favourite]));
            let n_fill = 6 + rng.below(8);
            for _ in 0..n_fill {
                words.push(pick(&mut rng, FILLER));
            }
            rng.shuffle(&mut words);
            t += 86_400 + rng.below(30 * 86_400) as i64;
            out.push(Interaction {
                user_id: format!("U{u:04}"),
                item_id: format!("I{item:04}"),
                rating,
                review_text: words.join(" "),
                timestamp: t,
            });
        }
    }
    out
}

/// `n` distinct user/item pairs rated by `3 + p_u . q_i` (clamped to [1, 5]).
/// Review text is `"user<u> item<i>"` plus a shared filler word.
pub fn planted_mf(users: usize, items: usize, n: usize, rank: usize, seed: u64) -> Vec<Interaction> {
    assert!(n <= users * items, "not enough distinct pairs");
    let mut rng = RngState::new(seed);
    let p: Vec<Vec<f64>> = (0..users).map(|_| (0..rank).map(|_| rng.normal(0.8)).collect()).collect();
    let q: Vec<Vec<f64>> = (0..items).map(|_| (0..rank).map(|_| rng.normal(0.8)).collect()).collect();
    let mut pairs: Vec<(usize, usize)> = (0..users).flat_map(|u| (0..items).map(move |i| (u, i))).collect();
    rng.shuffle(&mut pairs);
    pairs.truncate(n);
    pairs.sort_unstable();
    pairs
        .into_iter()
        .enumerate()
        .map(|(t, (u, i))| {
            let dot: f64 = p[u].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            Interaction {
                user_id: format!("u{u:03}"),
                item_id: format!("i{i:03}"),
                rating: (3.0 + dot).clamp(1.0, 5.0),
                review_text: format!("user{u} item{i} review"),
                timestamp: t as i64,
            }
        })
        .collect()
}

/// Split placing every interaction in the training part, for fitting and
/// capacity checks where held-out data is not wanted.
pub fn train_only(interactions: Vec<Interaction>) -> DatasetSplit {
    let train = (0..interactions.len()).collect();
    DatasetSplit {
        interactions,
        train,
        dev: Vec::new(),
        test: Vec::new(),
    }
}
