use super::{PoolView, QueryBatch, QueryError};
use crate::rng::{rng_from_seed, sample_indices, unit_f64};

/// Uniform sample of `b` pool positions without replacement (clamped to the
/// pool size), in draw order.
pub fn select_random(pool_len: usize, b: usize, seed: u64) -> Result<QueryBatch, QueryError> {
    if pool_len == 0 {
        return Err(QueryError::EmptyPool);
    }
    if b == 0 {
        return Err(QueryError::InvalidBatchSize);
    }
    let mut rng = rng_from_seed(seed);
    Ok(QueryBatch {
        indices: sample_indices(&mut rng, pool_len, b),
        scores: None,
    })
}

/// Lightweight-coreset sampling distribution over the pool:
/// `q(x) = 1/(2n) + |x - mu|^2 / (2 sum_x' |x' - mu|^2)` with `mu` the pool
/// mean. A pool with no spread (zero distance mass) gets the uniform
/// distribution.
pub fn coreset_distribution(pool: &PoolView<'_>) -> Vec<f64> {
    let n = pool.rows.len();
    if n == 0 {
        return Vec::new();
    }
    let d = pool.features.n_cols();
    let mut mean = vec![0.0; d];
    for &r in pool.rows {
        pool.features.row(r).add_scaled_to(1.0, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    let dist: Vec<f64> = pool
        .rows
        .iter()
        .map(|&r| pool.features.row(r).sq_dist(&mean, mean_sq))
        .collect();
    let total: f64 = dist.iter().sum();
    let uniform = 0.5 / n as f64;
    dist.iter()
        .map(|&dd| {
            let spread = if total > 0.0 { 0.5 * dd / total } else { uniform };
            uniform + spread
        })
        .collect()
}

/// `b` distinct pool positions drawn sequentially from the coreset
/// distribution, renormalized over the remaining positions after each draw.
pub fn select_lightweight_coreset(
    pool: &PoolView<'_>,
    b: usize,
    seed: u64,
) -> Result<QueryBatch, QueryError> {
    let n = pool.rows.len();
    if n == 0 {
        return Err(QueryError::EmptyPool);
    }
    if b == 0 {
        return Err(QueryError::InvalidBatchSize);
    }
    if n < b {
        return Err(QueryError::PoolTooSmall { pool: n, requested: b });
    }
    let q = coreset_distribution(pool);
    let mut rng = rng_from_seed(seed);
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    for _ in 0..b {
        let mass: f64 = q.iter().zip(&taken).filter(|(_, &t)| !t).map(|(w, _)| w).sum();
        let target = unit_f64(&mut rng) * mass;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, (&w, &t)) in q.iter().zip(&taken).enumerate() {
            if t {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let i = pick.expect("pool has untaken positions");
        taken[i] = true;
        indices.push(i);
    }
    Ok(QueryBatch {
        scores: Some(indices.iter().map(|&i| q[i]).collect()),
        indices,
    })
}
