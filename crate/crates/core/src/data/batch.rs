use crate::RngState;

/// Shuffled mini-batches of example positions for one epoch; the last batch
/// may be partial.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut RngState) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
