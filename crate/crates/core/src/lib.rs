//! Embedding geometry toolkit: anisotropy and intrinsic-dimension profiles
//! of per-layer transformer activations.
//!
//! - [`dump`]: the `.embd` activation container.
//! - [`anisotropy`]: leading-singular-value share and mean pairwise cosine.
//! - [`intrinsic`]: TwoNN, MADA and method-of-moments estimators over exact
//!   nearest neighbors.
//! - [`pipeline`]: batching, per-layer aggregation, checkpoint series.
//! - [`synth`]: seeded point clouds of known geometry.
//! - [`report`]: CSV, JSON and SVG output.

pub mod anisotropy;
pub mod batch;
pub mod dump;
pub mod error;
pub mod intrinsic;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use anisotropy::{anisotropy_svd, average_cosine, center, CenteringMode, SpectrumResult};
pub use batch::EmbeddingBatch;
pub use dump::{read_dump, read_layer, write_dump, ActivationDump, DumpIndex, Manifest};
pub use error::{Error, ErrorClass, Result};
pub use intrinsic::{
    knn_distances, mada_estimate, mada_estimate_with, mom_estimate, twonn_estimate, two_nn_ratios, Aggregation, EstimatorParams, IdEstimate,
    NeighborRatios,
};
pub use pipeline::{
    analyze_dump, build_series, cross_layer_mean, layer_profile, make_batches, AnalysisConfig, CheckpointSeries,
    LayerProfile, LayerSelection, Metric,
};
