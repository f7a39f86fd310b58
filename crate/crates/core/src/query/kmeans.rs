//! Embedding k-means selection: cluster the pool, query the member closest
//! to each centroid.

use super::{PoolView, QueryBatch, QueryError};
use crate::rng::{rng_from_seed, uniform_index, unit_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster of each pool position.
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn sq_norm(c: &[f64]) -> f64 {
    c.iter().map(|v| v * v).sum()
}

/// Nearest centroid of pool position `p` (ties to the lower centroid) and
/// its squared distance.
fn nearest(pool: &PoolView<'_>, p: usize, centroids: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let row = pool.features.row(pool.rows[p]);
    let mut best = (0, f64::INFINITY);
    for (c, (centroid, &norm)) in centroids.iter().zip(norms).enumerate() {
        let d = row.sq_dist(centroid, norm);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn point(pool: &PoolView<'_>, p: usize) -> Vec<f64> {
    pool.features.row(pool.rows[p]).to_dense(pool.features.n_cols())
}

/// k-means++ seeding: first center uniform, later centers drawn with
/// probability proportional to squared distance from the nearest chosen
/// center (uniform when every distance is zero).
fn seed_centroids(pool: &PoolView<'_>, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = pool.rows.len();
    let mut rng = rng_from_seed(seed);
    let mut centroids = vec![point(pool, uniform_index(&mut rng, n))];
    let mut d2: Vec<f64> = (0..n)
        .map(|p| nearest(pool, p, &centroids, &[sq_norm(&centroids[0])]).1)
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = unit_f64(&mut rng) * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (p, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = p;
                    break;
                }
            }
            chosen
        } else {
            uniform_index(&mut rng, n)
        };
        let c = point(pool, pick);
        let norm = sq_norm(&c);
        for (p, d) in d2.iter_mut().enumerate() {
            let dist = pool.features.row(pool.rows[p]).sq_dist(&c, norm);
            if dist < *d {
                *d = dist;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds, stopping when assignments stop
/// changing or after `max_iterations`. A cluster left empty is re-seeded at
/// the pool point farthest from its nearest centroid.
pub fn kmeans(pool: &PoolView<'_>, k: usize, max_iterations: usize, seed: u64) -> Clustering {
    let n = pool.rows.len();
    let d = pool.features.n_cols();
    let mut centroids = seed_centroids(pool, k, seed);
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iterations.max(1) {
        iterations += 1;
        let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
        let mut dists = vec![0.0; n];
        let mut changed = false;
        for p in 0..n {
            let (c, dist) = nearest(pool, p, &centroids, &norms);
            dists[p] = dist;
            if assignment[p] != c {
                assignment[p] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for p in 0..n {
            pool.features
                .row(pool.rows[p])
                .add_scaled_to(1.0, &mut sums[assignment[p]]);
            counts[assignment[p]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = 0;
                for p in 1..n {
                    if dists[p] > dists[far] {
                        far = p;
                    }
                }
                centroids[c] = point(pool, far);
                dists[far] = 0.0;
            }
        }
    }
    Clustering {
        centroids,
        assignment,
        iterations,
    }
}

/// One pool position per cluster: for each centroid in turn, the not yet
/// chosen position closest to it (ties to the lower position). Scores are
/// the squared distances to the centroid.
pub fn select_kmeans(
    pool: &PoolView<'_>,
    b: usize,
    max_iterations: usize,
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
    let clustering = kmeans(pool, b, max_iterations, seed);
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    let mut scores = Vec::with_capacity(b);
    for centroid in &clustering.centroids {
        let norm = sq_norm(centroid);
        let mut best: Option<(usize, f64)> = None;
        for p in (0..n).filter(|&p| !taken[p]) {
            let dist = pool.features.row(pool.rows[p]).sq_dist(centroid, norm);
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((p, dist));
            }
        }
        let (p, dist) = best.expect("pool has at least b positions");
        taken[p] = true;
        indices.push(p);
        scores.push(dist);
    }
    Ok(QueryBatch {
        indices,
        scores: Some(scores),
    })
}
