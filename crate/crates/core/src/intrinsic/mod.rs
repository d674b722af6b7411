//! Local intrinsic-dimension estimators over exact Euclidean neighbors.

mod knn;
mod local;
mod twonn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use knn::{knn_distances, NeighborDistances};
pub use local::{mada_estimate, mada_estimate_with, mada_local, mom_estimate, mom_local};
pub use twonn::{twonn_estimate, two_nn_ratios, NeighborRatio, NeighborRatios};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdMethod {
    TwoNn,
    Mada,
    Mom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitDiagnostics {
    TwoNn {
        /// Fitted slope of `-ln(1 - F_emp)` against `ln μ`; equals `d_hat`.
        slope: f64,
        residual_sum_squares: f64,
        /// Largest-μ points left out of the fit.
        points_discarded: usize,
        dropped_duplicates: usize,
    },
    Local {
        mean: f64,
        median: f64,
        /// Points whose local estimate was undefined (ties, duplicates).
        points_excluded: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdEstimate {
    pub d_hat: f64,
    pub method: IdMethod,
    pub points_used: usize,
    pub fit_diagnostics: FitDiagnostics,
}

/// How per-point local estimates are combined into one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Fraction of the largest ratios excluded from the TwoNN fit, in [0, 0.5).
    pub twonn_discard_fraction: f64,
    /// Neighbor count for MADA; even, at least 2.
    pub k_mada: usize,
    /// `ln 2 / ln(r_k / r_{k/2})` has a heavy right tail when the two radii
    /// are close, which pulls the mean upwards; the median is the default.
    pub mada_aggregation: Aggregation,
    /// Neighbor count for the method of moments; at least 2.
    pub k_mom: usize,
    /// Points whose nearest-neighbor distance is at or below this are
    /// treated as duplicates.
    pub duplicate_tolerance: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            twonn_discard_fraction: 0.01,
            k_mada: 10,
            mada_aggregation: Aggregation::Median,
            k_mom: 20,
            duplicate_tolerance: 0.0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        check_discard_fraction(self.twonn_discard_fraction)?;
        check_mada_k(self.k_mada)?;
        check_mom_k(self.k_mom)?;
        check_tolerance(self.duplicate_tolerance)
    }
}

pub(crate) fn check_discard_fraction(f: f64) -> Result<()> {
    if !(0.0..0.5).contains(&f) {
        return Err(Error::InvalidParameter(format!(
            "twonn discard fraction {f} outside [0, 0.5)"
        )));
    }
    Ok(())
}

pub(crate) fn check_mada_k(k: usize) -> Result<()> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::InvalidParameter(format!("MADA k must be even and >= 2, got {k}")));
    }
    Ok(())
}

pub(crate) fn check_mom_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("MoM k must be >= 2, got {k}")));
    }
    Ok(())
}

pub(crate) fn check_tolerance(tol: f64) -> Result<()> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "duplicate tolerance must be finite and non-negative, got {tol}"
        )));
    }
    Ok(())
}
