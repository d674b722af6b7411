//! Batching, per-layer aggregation and checkpoint series.
//!
//! Each layer is optionally shuffled, split into near-equal batches of at
//! least `batch_floor` rows, the metric is evaluated per batch, and the
//! per-batch values are summarized by mean and population standard
//! deviation. Work is spread over the ambient rayon pool; every reduction
//! happens in index order, so results do not depend on the worker count.
//!
//! # Shuffle permutation
//!
//! The permutation is reproducible outside this crate:
//!
//! 1. Seed ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`; the
//!    `u64` seed is expanded to the 32-byte key with PCG32 as specified by
//!    `rand_core::SeedableRng::seed_from_u64`).
//! 2. Start from the identity permutation `p = [0, 1, .., n-1]`.
//! 3. For `i` from `n-1` down to `1`: draw `u = next_u64()`, set
//!    `j = (u * (i + 1)) >> 64` (128-bit product), swap `p[i]` and `p[j]`.
//!
//! Row `t` of the shuffled layer is row `p[t]` of the original. The same
//! permutation is applied to every layer of a dump, so a token's hidden
//! states land in the same batch position at every layer.

use std::ops::Range;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anisotropy::{anisotropy_svd, average_cosine, CenteringMode};
use crate::batch::EmbeddingBatch;
use crate::dump::ActivationDump;
use crate::error::{Error, Result};
use crate::intrinsic::{mada_estimate_with, mom_estimate, twonn_estimate, two_nn_ratios, EstimatorParams};

pub const DEFAULT_BATCH_FLOOR: usize = 4096;
pub const MIN_BATCH_FLOOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    AnisotropySvd,
    AnisotropyCosine,
    IdTwonn,
    IdMada,
    IdMom,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::AnisotropySvd,
        Metric::AnisotropyCosine,
        Metric::IdTwonn,
        Metric::IdMada,
        Metric::IdMom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AnisotropySvd => "anisotropy-svd",
            Metric::AnisotropyCosine => "anisotropy-cosine",
            Metric::IdTwonn => "id-twonn",
            Metric::IdMada => "id-mada",
            Metric::IdMom => "id-mom",
        }
    }

    pub fn is_intrinsic_dimension(self) -> bool {
        matches!(self, Metric::IdTwonn | Metric::IdMada | Metric::IdMom)
    }

    /// Shuffling is on by default for intrinsic-dimension metrics only.
    pub fn default_shuffle(self) -> bool {
        self.is_intrinsic_dimension()
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-").to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSelection {
    #[default]
    All,
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub metric: Metric,
    /// Only consulted by the anisotropy metrics.
    pub centering: CenteringMode,
    pub batch_floor: usize,
    pub shuffle_seed: u64,
    pub shuffle: bool,
    pub estimator_params: EstimatorParams,
    pub layer_selection: LayerSelection,
}

impl AnalysisConfig {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            centering: CenteringMode::default(),
            batch_floor: DEFAULT_BATCH_FLOOR,
            shuffle_seed: 0,
            shuffle: metric.default_shuffle(),
            estimator_params: EstimatorParams::default(),
            layer_selection: LayerSelection::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_floor < MIN_BATCH_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "batch floor {} is below the minimum of {MIN_BATCH_FLOOR}",
                self.batch_floor
            )));
        }
        self.estimator_params.validate()
    }
}

/// Summary of one layer's per-batch metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layer_index: usize,
    pub mean: f64,
    /// Population standard deviation (divides by `n_batches`).
    pub std: f64,
    pub n_batches: usize,
    pub batch_values: Vec<f64>,
}

impl LayerProfile {
    pub fn from_batch_values(layer_index: usize, batch_values: Vec<f64>) -> Result<Self> {
        if batch_values.is_empty() {
            return Err(Error::Empty("batch values"));
        }
        let n = batch_values.len() as f64;
        let mean = batch_values.iter().sum::<f64>() / n;
        let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            layer_index,
            mean,
            std: var.sqrt(),
            n_batches: batch_values.len(),
            batch_values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub checkpoint_step: u64,
    pub profiles: Vec<LayerProfile>,
    pub cross_layer_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSeries {
    pub model_name: String,
    pub metric: Metric,
    pub points: Vec<SeriesPoint>,
}

/// Seeded Fisher-Yates permutation of `0..n`; see the module docs.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        p.swap(i, j);
    }
    p
}

/// Contiguous row ranges: `floor(n / batch_floor)` batches whose sizes
/// differ by at most one, larger ones first.
pub fn batch_ranges(n_samples: usize, batch_floor: usize) -> Result<Vec<Range<usize>>> {
    if batch_floor == 0 {
        return Err(Error::InvalidParameter("batch floor must be positive".into()));
    }
    if n_samples < batch_floor {
        return Err(Error::InsufficientSamples {
            n_samples,
            batch_floor,
        });
    }
    let count = n_samples / batch_floor;
    let base = n_samples / count;
    let larger = n_samples % count;
    let mut start = 0;
    Ok((0..count)
        .map(|b| {
            let len = base + usize::from(b < larger);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

pub fn make_batches(
    layer: &EmbeddingBatch,
    batch_floor: usize,
    shuffle: bool,
    seed: u64,
) -> Result<Vec<EmbeddingBatch>> {
    let ranges = batch_ranges(layer.n_samples(), batch_floor)?;
    let order: Vec<usize> = if shuffle {
        permutation(layer.n_samples(), seed)
    } else {
        (0..layer.n_samples()).collect()
    };
    Ok(ranges.into_iter().map(|r| layer.select_rows(&order[r])).collect())
}

/// Evaluates the configured metric on a single batch.
pub fn evaluate_metric(batch: &EmbeddingBatch, config: &AnalysisConfig) -> Result<f64> {
    let p = &config.estimator_params;
    match config.metric {
        Metric::AnisotropySvd => anisotropy_svd(batch, config.centering).map(|r| r.anisotropy),
        Metric::AnisotropyCosine => average_cosine(batch, config.centering),
        Metric::IdTwonn => {
            let ratios = two_nn_ratios(batch, p.duplicate_tolerance)?;
            twonn_estimate(&ratios, p.twonn_discard_fraction).map(|e| e.d_hat)
        }
        Metric::IdMada => {
            mada_estimate_with(batch, p.k_mada, p.duplicate_tolerance, p.mada_aggregation).map(|e| e.d_hat)
        }
        Metric::IdMom => mom_estimate(batch, p.k_mom, p.duplicate_tolerance).map(|e| e.d_hat),
    }
}

pub fn layer_profile(layer: &EmbeddingBatch, config: &AnalysisConfig, layer_index: usize) -> Result<LayerProfile> {
    config.validate()?;
    let batches = make_batches(layer, config.batch_floor, config.shuffle, config.shuffle_seed)?;
    let values = batches
        .par_iter()
        .enumerate()
        .map(|(b, batch)| {
            evaluate_metric(batch, config).map_err(|e| Error::Batch {
                layer: layer_index,
                batch: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    LayerProfile::from_batch_values(layer_index, values)
}

fn selected_layers(selection: &LayerSelection, num_layers: usize) -> Result<Vec<usize>> {
    match selection {
        LayerSelection::All => Ok((0..num_layers).collect()),
        LayerSelection::Indices(idx) => {
            if idx.is_empty() {
                return Err(Error::Empty("layer selection"));
            }
            let mut idx = idx.clone();
            idx.sort_unstable();
            idx.dedup();
            if let Some(&bad) = idx.iter().find(|&&i| i >= num_layers) {
                return Err(Error::LayerOutOfRange {
                    index: bad,
                    num_layers,
                });
            }
            Ok(idx)
        }
    }
}

/// One profile per selected layer, in ascending layer order.
pub fn analyze_dump(dump: &ActivationDump, config: &AnalysisConfig) -> Result<Vec<LayerProfile>> {
    config.validate()?;
    let layers = selected_layers(&config.layer_selection, dump.layers.len())?;
    layers
        .par_iter()
        .map(|&l| layer_profile(&dump.layers[l], config, l))
        .collect()
}

/// Unweighted mean of the per-layer means.
pub fn cross_layer_mean(profiles: &[LayerProfile]) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::Empty("layer profiles"));
    }
    Ok(profiles.iter().map(|p| p.mean).sum::<f64>() / profiles.len() as f64)
}

/// Analyzes each checkpoint of one model and orders the results by step.
pub fn build_series(dumps: &[ActivationDump], config: &AnalysisConfig) -> Result<CheckpointSeries> {
    let first = dumps.first().ok_or(Error::Empty("checkpoint dumps"))?;
    let model_name = first.manifest.model_name.clone();
    let num_layers = first.manifest.num_layers;
    for d in &dumps[1..] {
        if d.manifest.model_name != model_name {
            return Err(Error::MixedModels(format!(
                "model {:?} differs from {:?}",
                d.manifest.model_name, model_name
            )));
        }
        if d.manifest.num_layers != num_layers {
            return Err(Error::MixedModels(format!(
                "checkpoint {} has {} layers, checkpoint {} has {num_layers}",
                d.manifest.checkpoint_step, d.manifest.num_layers, first.manifest.checkpoint_step
            )));
        }
    }
    let mut order: Vec<&ActivationDump> = dumps.iter().collect();
    order.sort_by_key(|d| d.manifest.checkpoint_step);
    if let Some(w) = order.windows(2).find(|w| w[0].manifest.checkpoint_step == w[1].manifest.checkpoint_step) {
        return Err(Error::DuplicateStep(w[0].manifest.checkpoint_step));
    }

    let points = order
        .into_iter()
        .map(|d| {
            let profiles = analyze_dump(d, config)?;
            Ok(SeriesPoint {
                checkpoint_step: d.manifest.checkpoint_step,
                cross_layer_mean: cross_layer_mean(&profiles)?,
                profiles,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckpointSeries {
        model_name,
        metric: config.metric,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::Manifest;

    #[test]
    fn batch_split_rule() {
        assert_eq!(batch_ranges(4096, 4096).unwrap(), vec![0..4096]);
        assert_eq!(batch_ranges(10000, 4096).unwrap(), vec![0..5000, 5000..10000]);
        assert_eq!(batch_ranges(10, 3).unwrap(), vec![0..4, 4..7, 7..10]);
        assert!(matches!(
            batch_ranges(4095, 4096),
            Err(Error::InsufficientSamples { n_samples: 4095, batch_floor: 4096 })
        ));
    }

    #[test]
    fn permutation_is_seeded() {
        let a = permutation(100, 7);
        assert_eq!(a, permutation(100, 7));
        assert_ne!(a, permutation(100, 8));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
        assert_eq!(permutation(0, 1), Vec::<usize>::new());
        assert_eq!(permutation(1, 1), vec![0]);
    }

    #[test]
    fn single_batch_profile_has_zero_std() {
        let rows: Vec<[f64; 2]> = (0..16).map(|i| [i as f64, (i * i) as f64]).collect();
        let layer = EmbeddingBatch::from_rows(&rows).unwrap();
        let mut cfg = AnalysisConfig::new(Metric::AnisotropySvd);
        cfg.batch_floor = 16;
        let p = layer_profile(&layer, &cfg, 3).unwrap();
        assert_eq!(p.n_batches, 1);
        assert_eq!(p.std, 0.0);
        assert_eq!(p.layer_index, 3);
        let direct = anisotropy_svd(&layer, CenteringMode::Uncentered).unwrap().anisotropy;
        assert_eq!(p.mean, direct);
    }

    #[test]
    fn rank_one_layer_profile() {
        let rows: Vec<[f64; 3]> = (1..=40).map(|i| [i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let layer = EmbeddingBatch::from_rows(&rows).unwrap();
        let mut cfg = AnalysisConfig::new(Metric::AnisotropySvd);
        cfg.batch_floor = 8;
        let p = layer_profile(&layer, &cfg, 0).unwrap();
        assert_eq!(p.n_batches, 5);
        assert_eq!(p.mean, 1.0);
        assert_eq!(p.std, 0.0);
    }

    #[test]
    fn two_batch_mean_and_std() {
        let p = LayerProfile::from_batch_values(0, vec![0.25, 0.75]).unwrap();
        assert_eq!(p.mean, 0.5);
        assert_eq!(p.std, 0.25);
    }

    #[test]
    fn batch_errors_are_annotated() {
        let layer = EmbeddingBatch::from_vec(16, 2, vec![1.0; 32]).unwrap();
        let mut cfg = AnalysisConfig::new(Metric::AnisotropySvd);
        cfg.batch_floor = 8;
        cfg.centering = CenteringMode::Centered;
        match layer_profile(&layer, &cfg, 4).unwrap_err() {
            Error::Batch { layer, batch, source } => {
                assert_eq!((layer, batch), (4, 0));
                assert!(matches!(*source, Error::DegenerateSpectrum));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn defaults() {
        let c = AnalysisConfig::new(Metric::IdMada);
        assert!(c.shuffle);
        assert_eq!(c.batch_floor, 4096);
        assert!(!AnalysisConfig::new(Metric::AnisotropyCosine).shuffle);
        let mut bad = c.clone();
        bad.batch_floor = 7;
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert_eq!("id_twonn".parse::<Metric>().unwrap(), Metric::IdTwonn);
        assert!("pca".parse::<Metric>().is_err());
    }

    fn tiny_dump(name: &str, step: u64, layers: usize) -> ActivationDump {
        let rows: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, 1.0 + (i % 3) as f64]).collect();
        let layer = EmbeddingBatch::from_rows(&rows).unwrap();
        ActivationDump::new(Manifest::new(name, step, layers, 8, 2), vec![layer; layers]).unwrap()
    }

    #[test]
    fn series_is_sorted_and_validated() {
        let mut cfg = AnalysisConfig::new(Metric::AnisotropySvd);
        cfg.batch_floor = 8;
        let s = build_series(&[tiny_dump("m", 1000, 2), tiny_dump("m", 100, 2)], &cfg).unwrap();
        let steps: Vec<_> = s.points.iter().map(|p| p.checkpoint_step).collect();
        assert_eq!(steps, vec![100, 1000]);

        assert!(matches!(
            build_series(&[tiny_dump("m", 1, 2), tiny_dump("m", 2, 3)], &cfg),
            Err(Error::MixedModels(_))
        ));
        assert!(matches!(
            build_series(&[tiny_dump("m", 1, 2), tiny_dump("n", 2, 2)], &cfg),
            Err(Error::MixedModels(_))
        ));
        assert!(matches!(
            build_series(&[tiny_dump("m", 5, 2), tiny_dump("m", 5, 2)], &cfg),
            Err(Error::DuplicateStep(5))
        ));
        assert!(matches!(build_series(&[], &cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn cross_layer_mean_cases() {
        let p = |i, m| LayerProfile::from_batch_values(i, vec![m]).unwrap();
        assert_eq!(cross_layer_mean(&[p(0, 2.0), p(1, 4.0)]).unwrap(), 3.0);
        assert_eq!(cross_layer_mean(&[p(0, 2.5)]).unwrap(), 2.5);
        assert!(cross_layer_mean(&[]).is_err());
    }

    #[test]
    fn layer_selection() {
        let mut cfg = AnalysisConfig::new(Metric::AnisotropySvd);
        cfg.batch_floor = 8;
        cfg.layer_selection = LayerSelection::Indices(vec![0]);
        let d = tiny_dump("m", 0, 3);
        let out = analyze_dump(&d, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].layer_index, 0);
        cfg.layer_selection = LayerSelection::Indices(vec![2, 0, 2]);
        let out = analyze_dump(&d, &cfg).unwrap();
        assert_eq!(out.iter().map(|p| p.layer_index).collect::<Vec<_>>(), vec![0, 2]);
        cfg.layer_selection = LayerSelection::Indices(vec![3]);
        assert!(matches!(analyze_dump(&d, &cfg), Err(Error::LayerOutOfRange { index: 3, .. })));
    }
}
