//! MADA and method-of-moments local estimators.

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::intrinsic::{check_mada_k, Aggregation, check_mom_k, check_tolerance, knn_distances, FitDiagnostics, IdEstimate, IdMethod};

fn aggregate(method: IdMethod, local: Vec<f64>, n: usize, how: Aggregation) -> Result<IdEstimate> {
    if local.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: local.len(),
        });
    }
    let used = local.len();
    let mean = local.iter().sum::<f64>() / used as f64;
    let mut sorted = local;
    sorted.sort_by(f64::total_cmp);
    let median = if used % 2 == 1 {
        sorted[used / 2]
    } else {
        0.5 * (sorted[used / 2 - 1] + sorted[used / 2])
    };
    Ok(IdEstimate {
        d_hat: match how {
            Aggregation::Mean => mean,
            Aggregation::Median => median,
        },
        method,
        points_used: used,
        fit_diagnostics: FitDiagnostics::Local {
            mean,
            median,
            points_excluded: n - used,
        },
    })
}

/// MADA estimate for one point from its ascending neighbor distances
/// (an even number of them). `None` when undefined.
pub fn mada_local(distances: &[f64], tol: f64) -> Option<f64> {
    let k = distances.len();
    let half = distances[k / 2 - 1];
    let full = distances[k - 1];
    (half > tol && full > half).then(|| std::f64::consts::LN_2 / (full / half).ln())
}

/// Method-of-moments estimate for one point from its ascending neighbor
/// distances. `None` when undefined.
pub fn mom_local(distances: &[f64], tol: f64) -> Option<f64> {
    let w = distances[distances.len() - 1];
    let m = distances.iter().sum::<f64>() / distances.len() as f64;
    (w - m > tol * w).then(|| m / (w - m))
}

/// Per point `d = ln 2 / ln(r_k / r_{k/2})`, combined by the median. Points
/// with `r_{k/2} <= tol` or `r_k == r_{k/2}` are excluded.
pub fn mada_estimate(batch: &EmbeddingBatch, k: usize, tol: f64) -> Result<IdEstimate> {
    mada_estimate_with(batch, k, tol, Aggregation::Median)
}

pub fn mada_estimate_with(batch: &EmbeddingBatch, k: usize, tol: f64, how: Aggregation) -> Result<IdEstimate> {
    check_mada_k(k)?;
    check_tolerance(tol)?;
    let nd = knn_distances(batch, k)?;
    let local = nd.iter().filter_map(|r| mada_local(r, tol)).collect();
    aggregate(IdMethod::Mada, local, batch.n_samples(), how)
}

/// Per point, with `w = r_k` and `m` the mean of `r_1..r_k`,
/// `d = m / (w - m)`, mean-aggregated. Points with `w - m <= tol · w` are excluded.
pub fn mom_estimate(batch: &EmbeddingBatch, k: usize, tol: f64) -> Result<IdEstimate> {
    check_mom_k(k)?;
    check_tolerance(tol)?;
    let nd = knn_distances(batch, k)?;
    let local = nd.iter().filter_map(|r| mom_local(r, tol)).collect();
    aggregate(IdMethod::Mom, local, batch.n_samples(), Aggregation::Mean)
}
