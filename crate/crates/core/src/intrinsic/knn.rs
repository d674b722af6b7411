use rayon::prelude::*;

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};

/// Query rows handed to one worker at a time.
const BLOCK: usize = 64;

/// Ascending distances from every point to its `k` nearest other points.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDistances {
    k: usize,
    distances: Vec<f64>,
}

impl NeighborDistances {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.distances.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.distances.chunks_exact(self.k)
    }
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// Inserts `d` into the ascending `best` buffer if it beats the current worst.
#[inline]
fn offer(best: &mut [f64], d: f64) {
    let last = best.len() - 1;
    if d >= best[last] {
        return;
    }
    let mut j = last;
    while j > 0 && best[j - 1] > d {
        best[j] = best[j - 1];
        j -= 1;
    }
    best[j] = d;
}

/// Exact k-nearest-neighbor distances by brute force. Each point is
/// excluded from its own list; duplicates of it are not, so a duplicate
/// shows up as a zero distance.
pub fn knn_distances(batch: &EmbeddingBatch, k: usize) -> Result<NeighborDistances> {
    let n = batch.n_samples();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be smaller than the number of points ({n})"
        )));
    }
    let mut distances = vec![f64::INFINITY; n * k];
    distances
        .par_chunks_mut(BLOCK * k)
        .enumerate()
        .for_each(|(block, out)| {
            let start = block * BLOCK;
            for (offset, best) in out.chunks_exact_mut(k).enumerate() {
                let i = start + offset;
                let q = batch.row(i);
                for (j, p) in batch.rows().enumerate() {
                    if j != i {
                        offer(best, euclidean(q, p));
                    }
                }
            }
        });
    Ok(NeighborDistances { k, distances })
}
