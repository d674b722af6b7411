//! Anisotropy metrics: the share of variance on the leading singular
//! direction, and the mean pairwise cosine similarity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};

/// Rows with a norm below this are treated as zero vectors.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringMode {
    Centered,
    #[default]
    Uncentered,
}

impl CenteringMode {
    pub fn is_centered(self) -> bool {
        matches!(self, CenteringMode::Centered)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Squared singular values of the (optionally centered) batch,
    /// descending, length `k`.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub anisotropy: f64,
}

/// What to do with zero-norm rows in [`average_cosine_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroNormPolicy {
    #[default]
    Error,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineResult {
    pub value: f64,
    pub skipped: usize,
}

/// Subtracts the column means from every row.
pub fn center(batch: &EmbeddingBatch) -> EmbeddingBatch {
    let n = batch.n_samples();
    let d = batch.emb_dim();
    let mut mean = vec![0.0; d];
    for row in batch.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut values = Vec::with_capacity(n * d);
    for row in batch.rows() {
        values.extend(row.iter().zip(&mean).map(|(&v, &m)| v - m));
    }
    EmbeddingBatch::from_parts_unchecked(n, d, values)
}

fn prepare(batch: &EmbeddingBatch, mode: CenteringMode) -> Result<std::borrow::Cow<'_, EmbeddingBatch>> {
    if batch.n_samples() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: batch.n_samples(),
        });
    }
    Ok(match mode {
        CenteringMode::Centered => std::borrow::Cow::Owned(center(batch)),
        CenteringMode::Uncentered => std::borrow::Cow::Borrowed(batch),
    })
}

/// Gram matrix on the smaller side: `XᵀX` when `emb_dim <= n_samples`,
/// otherwise `XXᵀ`. Both share their nonzero eigenvalues with the
/// covariance of `X` up to the common `1/(n-1)` factor.
fn small_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    if x.ncols() <= x.nrows() {
        x.tr_mul(x)
    } else {
        x * x.transpose()
    }
}

/// `σ₁² / Σσᵢ²` for the singular values of the batch, computed from the
/// eigenvalues of the smaller Gram matrix.
///
/// `k = min(n_samples - 1, emb_dim)` when centered, `min(n_samples, emb_dim)`
/// otherwise. Eigenvalues below the round-off floor of the decomposition
/// (`λ_max · size · ε`) are reported as exactly zero.
pub fn anisotropy_svd(batch: &EmbeddingBatch, mode: CenteringMode) -> Result<SpectrumResult> {
    let x = prepare(batch, mode)?;
    let n = x.n_samples();
    let d = x.emb_dim();
    let k = (n - usize::from(mode.is_centered())).min(d);

    let gram = small_gram(&x.to_matrix());
    let size = gram.nrows();
    let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let top = eig[0].max(0.0);
    let floor = top * size as f64 * f64::EPSILON;
    let eigenvalues: Vec<f64> = eig
        .into_iter()
        .take(k)
        .map(|v| if v <= floor { 0.0 } else { v })
        .collect();
    let total: f64 = eigenvalues.iter().sum();

    let max_abs = batch.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = (n * d) as f64 * (4.0 * f64::EPSILON * max_abs).powi(2);
    if total <= noise {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(SpectrumResult {
        anisotropy: eigenvalues[0] / total,
        eigenvalues,
        k,
    })
}

/// Mean cosine similarity over all unordered pairs of rows, with zero-norm
/// rows treated as an error.
pub fn average_cosine(batch: &EmbeddingBatch, mode: CenteringMode) -> Result<f64> {
    average_cosine_with(batch, mode, ZeroNormPolicy::Error).map(|r| r.value)
}

/// Mean pairwise cosine in O(n·d): with unit rows `x̂ᵢ`,
/// `Σ_{i≠j} x̂ᵢ·x̂ⱼ = ‖Σ x̂ᵢ‖² − n`.
pub fn average_cosine_with(
    batch: &EmbeddingBatch,
    mode: CenteringMode,
    policy: ZeroNormPolicy,
) -> Result<CosineResult> {
    let x = prepare(batch, mode)?;
    let mut sum = vec![0.0; x.emb_dim()];
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (i, row) in x.rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_NORM_EPS {
            match policy {
                ZeroNormPolicy::Error => return Err(Error::ZeroVector { row: i }),
                ZeroNormPolicy::Skip => {
                    skipped += 1;
                    continue;
                }
            }
        }
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += v / norm;
        }
        used += 1;
    }
    if used < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: used });
    }
    let n = used as f64;
    let sq: f64 = sum.iter().map(|v| v * v).sum();
    let value = ((sq - n) / (n * (n - 1.0))).clamp(-1.0, 1.0);
    Ok(CosineResult { value, skipped })
}
