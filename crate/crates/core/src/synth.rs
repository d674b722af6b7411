//! Seeded synthetic point clouds of known geometry, for validating the
//! metrics end to end.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::batch::EmbeddingBatch;
use crate::dump::{ActivationDump, Manifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    /// Uniform in `[0, 1)^d`, zero-padded to the ambient dimension.
    UniformHypercube(usize),
    /// Zero-mean Gaussian with the given axis variances, zero-padded.
    GaussianDiag(Vec<f64>),
    /// Positive multiples `t·(1, .., 1)`, `t ~ U[0.5, 1.5)`.
    LineRank1,
    /// `(t cos t, h, t sin t)` with `t ~ U[1.5π, 4.5π)`, `h ~ U[0, 21)`.
    SwissRoll,
}

impl SyntheticKind {
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            SyntheticKind::UniformHypercube(d) => *d,
            SyntheticKind::GaussianDiag(v) => v.len(),
            SyntheticKind::LineRank1 => 1,
            SyntheticKind::SwissRoll => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::UniformHypercube(_) => "uniform_hypercube",
            SyntheticKind::GaussianDiag(_) => "gaussian_diag",
            SyntheticKind::LineRank1 => "line_rank1",
            SyntheticKind::SwissRoll => "swiss_roll",
        }
    }

    fn min_ambient(&self) -> usize {
        match self {
            SyntheticKind::SwissRoll => 3,
            k => k.intrinsic_dim(),
        }
    }
}

/// Parses `uniform-hypercube:D`, `gaussian-diag:V1,V2,..`, `line-rank1` and
/// `swiss-roll` (underscores accepted in place of dashes).
impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |msg: &str| Error::InvalidParameter(format!("synthetic kind {s:?}: {msg}"));
        match (name.replace('_', "-").as_str(), arg) {
            ("uniform-hypercube", Some(a)) => {
                let d: usize = a.trim().parse().map_err(|_| bad("dimension must be an integer"))?;
                Ok(SyntheticKind::UniformHypercube(d))
            }
            ("gaussian-diag", Some(a)) => {
                let v = a
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("variances must be numbers"))?;
                Ok(SyntheticKind::GaussianDiag(v))
            }
            ("line-rank1", None) => Ok(SyntheticKind::LineRank1),
            ("swiss-roll", None) => Ok(SyntheticKind::SwissRoll),
            _ => Err(bad("expected uniform-hypercube:D, gaussian-diag:V1,V2,.., line-rank1 or swiss-roll")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub ambient_dim: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let intrinsic = self.kind.intrinsic_dim();
        if intrinsic == 0 {
            return Err(Error::InvalidParameter("intrinsic dimension must be positive".into()));
        }
        if let SyntheticKind::GaussianDiag(v) = &self.kind {
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter("gaussian variances must be positive".into()));
            }
        }
        if self.ambient_dim < self.kind.min_ambient() {
            return Err(Error::InvalidParameter(format!(
                "ambient dimension {} is below the {} required by {}",
                self.ambient_dim,
                self.kind.min_ambient(),
                self.kind.name()
            )));
        }
        if self.n_samples < 8 {
            return Err(Error::InvalidParameter(format!(
                "n_samples must be at least 8, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<EmbeddingBatch> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dim = self.ambient_dim;
        let mut values = vec![0.0; self.n_samples * dim];
        for row in values.chunks_exact_mut(dim) {
            match &self.kind {
                SyntheticKind::UniformHypercube(d) => {
                    for v in &mut row[..*d] {
                        *v = rng.random::<f64>();
                    }
                }
                SyntheticKind::GaussianDiag(vars) => {
                    for (v, var) in row.iter_mut().zip(vars) {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = var.sqrt() * z;
                    }
                }
                SyntheticKind::LineRank1 => {
                    let t = rng.random_range(0.5..1.5);
                    row.fill(t);
                }
                SyntheticKind::SwissRoll => {
                    use std::f64::consts::PI;
                    let t = rng.random_range(1.5 * PI..4.5 * PI);
                    let h = rng.random_range(0.0..21.0);
                    row[0] = t * t.cos();
                    row[1] = h;
                    row[2] = t * t.sin();
                }
            }
        }
        EmbeddingBatch::from_vec(self.n_samples, dim, values)
    }
}

/// Builds a dump with one layer per spec. All specs must share `n_samples`
/// and `ambient_dim`. The model name is `synthetic:<kind>`, or
/// `synthetic:mixed` when the layers differ in kind.
pub fn synthetic_dump(specs: &[SyntheticSpec], checkpoint_step: u64) -> Result<ActivationDump> {
    let first = specs.first().ok_or(Error::Empty("synthetic layer specs"))?;
    if let Some(s) = specs
        .iter()
        .find(|s| s.n_samples != first.n_samples || s.ambient_dim != first.ambient_dim)
    {
        return Err(Error::InvalidParameter(format!(
            "layer spec {}x{} differs from first layer {}x{}",
            s.n_samples, s.ambient_dim, first.n_samples, first.ambient_dim
        )));
    }
    let kind = if specs.iter().all(|s| s.kind.name() == first.kind.name()) {
        first.kind.name()
    } else {
        "mixed"
    };
    let layers = specs.iter().map(SyntheticSpec::generate).collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(
        format!("synthetic:{kind}"),
        checkpoint_step,
        specs.len(),
        first.n_samples,
        first.ambient_dim,
    );
    ActivationDump::new(manifest, layers)
}
