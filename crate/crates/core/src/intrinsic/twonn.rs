use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::intrinsic::{check_discard_fraction, check_tolerance, knn_distances, FitDiagnostics, IdEstimate, IdMethod};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRatio {
    pub r1: f64,
    pub r2: f64,
    pub mu: f64,
}

/// Per-point first/second neighbor distances and their ratio `μ = r2/r1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRatios {
    entries: Vec<NeighborRatio>,
    dropped_duplicates: usize,
}

impl NeighborRatios {
    /// Builds ratios from `(r1, r2)` pairs; requires `0 < r1 <= r2`.
    pub fn from_pairs(pairs: &[(f64, f64)], dropped_duplicates: usize) -> Result<Self> {
        let entries = pairs
            .iter()
            .map(|&(r1, r2)| {
                if !(r1 > 0.0 && r1 <= r2 && r2.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "neighbor distances must satisfy 0 < r1 <= r2, got ({r1}, {r2})"
                    )));
                }
                Ok(NeighborRatio { r1, r2, mu: r2 / r1 })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            entries,
            dropped_duplicates,
        })
    }

    pub fn entries(&self) -> &[NeighborRatio] {
        &self.entries
    }

    pub fn dropped_duplicates(&self) -> usize {
        self.dropped_duplicates
    }

    pub fn mus(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.mu)
    }
}

/// Two-nearest-neighbor ratios for every point. Points with `r1 <= tol`
/// (duplicates) are dropped and counted.
pub fn two_nn_ratios(batch: &EmbeddingBatch, tol: f64) -> Result<NeighborRatios> {
    check_tolerance(tol)?;
    let n = batch.n_samples();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let nd = knn_distances(batch, 2)?;
    let mut entries = Vec::with_capacity(n);
    let mut dropped = 0;
    for d in nd.iter() {
        let (r1, r2) = (d[0], d[1]);
        if r1 <= tol {
            dropped += 1;
        } else {
            entries.push(NeighborRatio { r1, r2, mu: r2 / r1 });
        }
    }
    if entries.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: entries.len(),
        });
    }
    Ok(NeighborRatios {
        entries,
        dropped_duplicates: dropped,
    })
}

/// TwoNN fit. With `μ` sorted ascending and `F_emp(μ_(i)) = i/N`, regresses
/// `y = -ln(1 - F_emp)` on `x = ln μ` through the origin. The largest
/// `ceil(discard_fraction · N)` ratios are left out, and always at least the
/// last one, where `y` is infinite.
pub fn twonn_estimate(ratios: &NeighborRatios, discard_fraction: f64) -> Result<IdEstimate> {
    check_discard_fraction(discard_fraction)?;
    let mut mus: Vec<f64> = ratios.mus().collect();
    mus.sort_by(f64::total_cmp);
    let n = mus.len();
    let discarded = ((discard_fraction * n as f64).ceil() as usize).max(1).min(n);
    let kept = n - discarded;
    if kept < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: kept });
    }

    let nf = n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut points = Vec::with_capacity(kept);
    for (i, &mu) in mus[..kept].iter().enumerate() {
        let x = mu.ln();
        let y = -(1.0 - (i + 1) as f64 / nf).ln();
        sxx += x * x;
        sxy += x * y;
        points.push((x, y));
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateConfiguration(
            "every retained neighbor ratio equals 1".into(),
        ));
    }
    let slope = sxy / sxx;
    let rss = points.iter().map(|(x, y)| (y - slope * x).powi(2)).sum();
    Ok(IdEstimate {
        d_hat: slope,
        method: IdMethod::TwoNn,
        points_used: kept,
        fit_diagnostics: FitDiagnostics::TwoNn {
            slope,
            residual_sum_squares: rss,
            points_discarded: discarded,
            dropped_duplicates: ratios.dropped_duplicates(),
        },
    })
}
