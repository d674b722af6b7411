//! Reference computations used as oracles. Deliberately naive and
//! independent of the library's code paths.
#![allow(dead_code)]

use embgeo::EmbeddingBatch;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingBatch {
    let v = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    EmbeddingBatch::from_vec(n, d, v).unwrap()
}

/// Gaussian rows with a random mean offset and unequal column scales, so
/// centering and the spectrum both matter.
pub fn skewed_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingBatch {
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let scale: Vec<f64> = (0..d).map(|j| 1.0 + 3.0 / (j as f64 + 1.0)).collect();
    let mut v = Vec::with_capacity(n * d);
    for _ in 0..n {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            v.push(offset[j] + scale[j] * z);
        }
    }
    EmbeddingBatch::from_vec(n, d, v).unwrap()
}

pub fn uniform_cube(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingBatch {
    let v = (0..n * d).map(|_| rng.random::<f64>()).collect();
    EmbeddingBatch::from_vec(n, d, v).unwrap()
}

/// Haar-ish random orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Rows of `batch` right-multiplied by `q`, then shifted by `shift`.
pub fn transform(batch: &EmbeddingBatch, q: &DMatrix<f64>, scale: f64, shift: &[f64]) -> EmbeddingBatch {
    let d = batch.emb_dim();
    let mut v = Vec::with_capacity(batch.values().len());
    for row in batch.rows() {
        for j in 0..d {
            let mut s = 0.0;
            for (i, &x) in row.iter().enumerate() {
                s += x * q[(i, j)];
            }
            v.push(scale * s + shift[j]);
        }
    }
    EmbeddingBatch::from_vec(batch.n_samples(), d, v).unwrap()
}

pub fn column_centered(batch: &EmbeddingBatch) -> DMatrix<f64> {
    let mut m = batch.to_matrix();
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

/// Anisotropy from the singular values of X directly.
pub fn svd_anisotropy(x: &DMatrix<f64>) -> f64 {
    let sv = x.clone().svd(false, false).singular_values;
    let sq: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let max = sq.iter().cloned().fold(0.0, f64::max);
    max / sq.iter().sum::<f64>()
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 * m.iter().map(|v| v * v).sum::<f64>() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

/// Mean cosine over all pairs by the double loop.
pub fn brute_cosine(batch: &EmbeddingBatch) -> f64 {
    let n = batch.n_samples();
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (batch.row(i), batch.row(j));
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            total += dot / (norm(a) * norm(b));
        }
    }
    2.0 * total / (n * (n - 1)) as f64
}

/// All distances from each point to the others, fully sorted.
pub fn brute_knn(batch: &EmbeddingBatch, k: usize) -> Vec<Vec<f64>> {
    let n = batch.n_samples();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    batch
                        .row(i)
                        .iter()
                        .zip(batch.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            d.truncate(k);
            d
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
