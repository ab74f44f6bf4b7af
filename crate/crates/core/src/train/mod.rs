//! Mini-batch training with Adam, MSE + L2 loss and dev-based early stopping.

mod adam;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};

use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::data::{epoch_batches, Banks, Example};
use crate::model::{ForwardCtx, Model};
use crate::{Error, Result, RngState, Scalar};

/// Examples per gradient chunk; chunks are summed in order, so results do
/// not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
    /// Parameter-name prefixes left out of the L2 term.
    #[serde(default)]
    pub l2_exclude: Vec<String>,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 20,
            patience: 5,
            l2: 1e-6,
            l2_exclude: Vec::new(),
            batch_size: 128,
            seed: 42,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.lr.is_nan() || self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "lr, max_epochs, patience and batch_size must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience must not exceed max_epochs".into()));
        }
        if self.l2 < 0.0 || self.l2.is_nan() {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub dev_mse: f64,
    pub wall_ms: u64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_mse: f64,
    pub stopped_early: bool,
}

/// Mean squared error in evaluation mode.
pub fn evaluate_mse<T: Scalar>(model: &Model<T>, examples: &[Example], banks: &Banks) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let preds = predict_all(model, examples, banks)?;
    let sse: f64 = preds
        .iter()
        .zip(examples)
        .map(|(p, ex)| (p - ex.rating).powi(2))
        .sum();
    Ok(sse / examples.len() as f64)
}

/// Evaluation-mode predictions, in input order.
pub fn predict_all<T: Scalar>(model: &Model<T>, examples: &[Example], banks: &Banks) -> Result<Vec<f64>> {
    examples
        .par_iter()
        .map(|ex| model.predict(ex, banks, &mut ForwardCtx::eval()))
        .collect()
}

/// Gradient of `sum_i (f(x_i) - y_i)^2 / scale` over `batch` and its value.
fn batch_gradient<T: Scalar>(
    model: &Model<T>,
    batch: &[&Example],
    banks: &Banks,
    scale: f64,
    rngs: &[RngState],
) -> Result<(Vec<Tensor<T>>, f64)> {
    let store = model.params();
    let chunks: Vec<Result<(Vec<Tensor<T>>, f64)>> = batch
        .par_chunks(CHUNK)
        .zip(rngs.par_chunks(CHUNK))
        .map(|(exs, rs)| {
            let mut acc = zero_like(store);
            let mut loss = 0.0;
            for (ex, rng) in exs.iter().zip(rs) {
                let mut g = Graph::new();
                let leaves = store.register(&mut g);
                let mut ctx = ForwardCtx::train(rng.clone());
                let pred = model.predict_node(&mut g, &leaves, ex, banks, &mut ctx)?;
                let y = g.constant(Tensor::scalar(T::from_f64_lossy(ex.rating)));
                let diff = g.sub(pred, y)?;
                let sq = g.square(diff)?;
                let l = g.scale(sq, T::from_f64_lossy(1.0 / scale))?;
                loss += g.value(l).item().to_f64_lossy();
                let mut grads = g.backward(l)?;
                for (a, &leaf) in acc.iter_mut().zip(&leaves) {
                    a.accumulate(&grads.take(leaf));
                }
            }
            Ok((acc, loss))
        })
        .collect();
    let mut total = zero_like(store);
    let mut loss = 0.0;
    for c in chunks {
        let (g, l) = c?;
        for (t, x) in total.iter_mut().zip(&g) {
            t.accumulate(x);
        }
        loss += l;
    }
    Ok((total, loss))
}

fn zero_like<T: Scalar>(store: &ParamStore<T>) -> Vec<Tensor<T>> {
    store.iter().map(|p| Tensor::zeros(p.value.shape())).collect()
}

/// Adds the gradient of `l2 * ||theta||^2` for every parameter whose name
/// does not start with one of `exclude`.
pub fn add_l2_gradient<T: Scalar>(grads: &mut [Tensor<T>], store: &ParamStore<T>, l2: f64, exclude: &[String]) {
    if l2 == 0.0 {
        return;
    }
    let c = T::from_f64_lossy(2.0 * l2);
    for (g, p) in grads.iter_mut().zip(store.iter()) {
        if exclude.iter().any(|e| p.name.starts_with(e.as_str())) {
            continue;
        }
        for (gk, &tk) in g.data_mut().iter_mut().zip(p.value.data()) {
            *gk = *gk + c * tk;
        }
    }
}

/// One optimizer step on `batch`. Returns the batch MSE (dropout active).
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut AdamState<T>,
    batch: &[&Example],
    banks: &Banks,
    rngs: &[RngState],
    config: &TrainConfig,
) -> Result<f64> {
    let (mut grads, loss) = batch_gradient(model, batch, banks, batch.len() as f64, rngs)?;
    add_l2_gradient(&mut grads, model.params(), config.l2, &config.l2_exclude);
    adam.update(model.params_mut(), &grads, config.lr)?;
    Ok(loss)
}

/// Dev-loss bookkeeping: strict improvement resets the counter, and
/// training stops once `patience` epochs in a row fail to improve.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records `dev` for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, dev: f64) -> bool {
        match self.best {
            Some((_, b)) if dev >= b => {
                self.stale += 1;
                false
            }
            _ => {
                self.best = Some((epoch, dev));
                self.stale = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Trains `model` in place, leaving it at the parameters of the epoch with
/// the lowest dev MSE. `on_epoch` sees each record as it is produced.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    banks: &Banks,
    train_set: &[Example],
    dev_set: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dev_set.is_empty() {
        return Err(Error::Empty("development set"));
    }
    let root = RngState::new(config.seed);
    let mut adam = AdamState::new(model.params(), config.adam);
    let mut history = Vec::new();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = model.params().clone();
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut order = root.derive2(0, epoch as u64);
        for (b, idx) in epoch_batches(train_set.len(), config.batch_size, &mut order)
            .into_iter()
            .enumerate()
        {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let stream = root.derive2(epoch as u64, b as u64);
            let rngs: Vec<RngState> = (0..batch.len()).map(|k| stream.derive(k as u64)).collect();
            train_step(model, &mut adam, &batch, banks, &rngs, config)?;
        }
        let train_mse = evaluate_mse(model, train_set, banks)?;
        let dev_mse = evaluate_mse(model, dev_set, banks)?;
        if !train_mse.is_finite() || !dev_mse.is_finite() {
            return Err(Error::NonFinite { op: "evaluate_mse" });
        }
        let rec = EpochRecord {
            epoch,
            train_mse,
            dev_mse,
            wall_ms: start.elapsed().as_millis() as u64,
            lr: config.lr,
        };
        on_epoch(&rec);
        history.push(rec);
        if stopper.observe(epoch, dev_mse) {
            best_params = model.params().clone();
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_dev_mse) = stopper.best().expect("at least one epoch ran");
    *model.params_mut() = best_params;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_dev_mse,
        stopped_early,
    })
}
