//! Composite operations built on [`Graph`]: masked softmax, the
//! straight-through Gumbel-Softmax, and inverted dropout.

use super::graph::{Graph, NodeId};
use super::tensor::{argmax, Tensor};
use crate::{Error, Result, RngState, Scalar};

/// Value written into masked logit positions.
pub const MASK_VALUE: f64 = -1e9;

pub fn mask_value<T: Scalar>() -> T {
    T::from_f64_lossy(MASK_VALUE)
}

/// Softmax over a vector with `mask[i] == true` positions pushed to zero
/// probability by adding [`MASK_VALUE`] before normalisation.
pub fn masked_softmax<T: Scalar>(g: &mut Graph<'_, T>, x: NodeId, mask: &[bool]) -> Result<NodeId> {
    if mask.iter().all(|&m| m) {
        return Err(Error::AllMasked { op: "softmax" });
    }
    if mask.iter().any(|&m| m) {
        let bias: Vec<T> = mask
            .iter()
            .map(|&m| if m { mask_value() } else { T::zero() })
            .collect();
        let bias = Tensor::new(g.shape(x).to_vec(), bias)?;
        let b = g.constant(bias);
        let x = g.add(x, b)?;
        return g.softmax(x, 0);
    }
    g.softmax(x, 0)
}

/// Output of a Gumbel-Softmax draw.
#[derive(Debug, Clone, Copy)]
pub struct GumbelSample {
    pub node: NodeId,
    /// Index of the hot entry (argmax of the relaxed sample).
    pub index: usize,
}

/// Straight-through Gumbel-Softmax over a rank-1 `logits` node.
///
/// In training mode Gumbel noise is drawn from `rng`. With `hard` the forward
/// value is one-hot at the argmax of `softmax((logits + noise) / tau)` and the
/// backward pass uses the Jacobian of that softmax. Outside training the noise
/// is zero and the output is always one-hot.
pub fn st_gumbel_softmax<T: Scalar>(
    g: &mut Graph<'_, T>,
    logits: NodeId,
    tau: f64,
    rng: &mut RngState,
    hard: bool,
    training: bool,
) -> Result<GumbelSample> {
    let k = g.value(logits).len();
    let noise = if training {
        rng.gumbel_vec(k)
    } else {
        vec![T::zero(); k]
    };
    gumbel_softmax_with_noise(g, logits, &noise, tau, hard || !training)
}

/// Same as [`st_gumbel_softmax`] with an explicit noise realisation.
pub fn gumbel_softmax_with_noise<T: Scalar>(
    g: &mut Graph<'_, T>,
    logits: NodeId,
    noise: &[T],
    tau: f64,
    hard: bool,
) -> Result<GumbelSample> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let k = g.value(logits).len();
    if k == 0 || noise.len() != k {
        return Err(Error::Shape {
            op: "gumbel_softmax",
            left: g.shape(logits).to_vec(),
            right: vec![noise.len()],
        });
    }
    let logits = if g.shape(logits).len() != 1 {
        g.reshape(logits, &[k])?
    } else {
        logits
    };
    let n = g.constant(Tensor::new(vec![k], noise.to_vec())?);
    let z = g.add(logits, n)?;
    let z = g.scale(z, T::from_f64_lossy(1.0 / tau))?;
    let y = g.softmax(z, 0)?;
    let index = argmax(g.value(y).data());
    if !hard {
        return Ok(GumbelSample { node: y, index });
    }
    let node = g.straight_through(y, Tensor::one_hot(k, index))?;
    Ok(GumbelSample { node, index })
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    rate: f64,
    training: bool,
    rng: &mut RngState,
) -> Result<NodeId> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let factors = (0..g.value(x).len())
        .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
        .collect();
    g.dropout_with_mask(x, factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(logits: &[f64], tau: f64, seed: u64, hard: bool, training: bool) -> Vec<f64> {
        let t = Tensor::<f64>::from_vec(logits.to_vec());
        let mut g = Graph::new();
        let l = g.constant(t);
        let mut rng = RngState::new(seed);
        let s = st_gumbel_softmax(&mut g, l, tau, &mut rng, hard, training).unwrap();
        g.value(s.node).data().to_vec()
    }

    #[test]
    fn single_category_is_always_one() {
        for seed in 0..20 {
            assert_eq!(draw(&[0.3], 1.0, seed, true, true), vec![1.0]);
        }
    }

    #[test]
    fn eval_mode_is_plain_argmax() {
        assert_eq!(draw(&[0.1, 2.0, -1.0], 1.0, 0, true, false), vec![0.0, 1.0, 0.0]);
        assert_eq!(draw(&[0.1, 2.0, -1.0], 1.0, 9, false, false), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_positive_tau_rejected() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let mut rng = RngState::new(0);
        for tau in [0.0, -1.0] {
            assert!(matches!(
                st_gumbel_softmax(&mut g, l, tau, &mut rng, true, true),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn masked_softmax_zeroes_masked() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_vec(vec![5.0, 1.0, 2.0]));
        let y = masked_softmax(&mut g, x, &[true, false, false]).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 0.0);
        assert!((v.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(matches!(
            masked_softmax(&mut g, x, &[true, true, true]),
            Err(Error::AllMasked { .. })
        ));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let mut rng = RngState::new(1);
        assert_eq!(dropout(&mut g, x, 0.2, false, &mut rng).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.0, true, &mut rng).unwrap(), x);
        assert!(dropout(&mut g, x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let n = 100_000;
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::ones(&[n]));
        let mut rng = RngState::new(5);
        let y = dropout(&mut g, x, 0.2, true, &mut rng).unwrap();
        let mean = g.value(y).sum() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }
}
