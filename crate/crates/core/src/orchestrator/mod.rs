//! Experiment orchestration: the wave runner, agent construction, the
//! human-session hub behind the HTTP service, lineage ingestion and export,
//! and image-grid montages.

mod build;
mod config;
mod grids;
mod hub;
mod ingest;
mod runner;

pub use build::{build_agents, load_traits, scripted_responder};
pub use config::ExperimentConfig;
pub use grids::{grid, montage, GridKind, GridOutput};
pub use hub::{ArchiveSummary, HubError, SessionHub, SessionView};
pub use ingest::{export_lineage, ingest_lineage, IngestedArchive, LineageRecord, LINEAGE_FILE};
pub use runner::{
    play_session, read_session_log, session_seed, transcript_path, Played, RatingRound, RunControl,
    RunSummary, Runner, SessionLog, PROGRESS_CHECKPOINT,
};

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::cppn::ImageError;
use crate::metrics::MetricError;
use crate::providers::ProviderError;
use crate::session::SessionError;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("lineage line {line}: {message}")]
    Lineage { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
