//! Archive quality measures: semantic recall and fidelity, farthest-point
//! coverage radii in image and caption space, J¹ tree balance, prefix
//! series over archive growth, and per-weight sweeps.

mod coverage;
mod fps;
mod j1;
mod nouns;
mod series;
mod similarity;
mod sweep;

pub use coverage::{
    embed_archive_images, embed_captions, semantic_coverage, visual_coverage, CaptionCache,
    CoverageResult, EmbeddingCache,
};
pub use fps::{farthest_point_sample, k_covering_radius, normalized, random_start};
pub use j1::{j1_index, j1_index_of_parents, node_balances, NodeBalance};
pub use nouns::NounList;
pub use series::{prefix_sizes, series, Metric, MetricContext, MetricSeries};
pub use similarity::{best_matches, semantic_fidelity, semantic_recall, RecallAggregate};
pub use sweep::{pixel_distance, weight_sweep, ConnectionSweep, SweepPoint, SweepResult};

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::cppn::CppnError;
use crate::providers::ProviderError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embeddings from different models: {0} vs {1}")]
    ModelMismatch(String, String),
    #[error("k = {k} out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("step must be at least 1")]
    ZeroStep,
    #[error("sweep needs an odd step count of at least 3, got {0}")]
    SweepSteps(usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("noun list: {0}")]
    Nouns(String),
    #[error("metric needs a provider that is not configured: {0}")]
    MissingProvider(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Render(#[from] CppnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
