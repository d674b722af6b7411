use crate::error::{Error, Result};

/// Dense `n_samples x emb_dim` matrix of embeddings, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    n_samples: usize,
    emb_dim: usize,
    values: Vec<f64>,
}

impl EmbeddingBatch {
    /// Builds a batch from row-major values. Rejects empty shapes, a length
    /// mismatch and non-finite entries.
    pub fn from_vec(n_samples: usize, emb_dim: usize, values: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || emb_dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "batch shape {n_samples}x{emb_dim} has an empty dimension"
            )));
        }
        if values.len() != n_samples * emb_dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not fill a {n_samples}x{emb_dim} batch",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: 0,
                row: pos / emb_dim,
                col: pos % emb_dim,
            });
        }
        Ok(Self {
            n_samples,
            emb_dim,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let emb_dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * emb_dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != emb_dim {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has length {}, expected {emb_dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), emb_dim, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn emb_dim(&self) -> usize {
        self.emb_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.emb_dim..(i + 1) * self.emb_dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.emb_dim)
    }

    /// Gathers the given rows, in order, into a new batch.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.emb_dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_samples: indices.len(),
            emb_dim: self.emb_dim,
            values,
        }
    }

    /// Applies `f` to every entry. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_vec(
            self.n_samples,
            self.emb_dim,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn from_parts_unchecked(n_samples: usize, emb_dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_samples * emb_dim);
        Self {
            n_samples,
            emb_dim,
            values,
        }
    }

    /// Column-major copy as a nalgebra matrix.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n_samples, self.emb_dim, &self.values)
    }
}
