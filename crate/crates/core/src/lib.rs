//! Picbreeder-style interactive evolution of CPPN images, driven by pluggable
//! agents that share a collaborative archive, plus the metrics used to judge
//! the resulting archives (semantic recall, coverage radii, tree balance).
//!
//! The crate is organised bottom-up:
//!
//! * [`cppn`] genome representation and deterministic rendering.
//! * [`neat`] mutation and crossover operators.
//! * [`session`] the per-agent episode state machine.
//! * [`archive`] the shared store of published images.
//! * [`providers`] chat / embedding / captioning interfaces and the reply grammar.
//! * [`agents`] random, epsilon-greedy and chat-backed decision makers.
//! * [`metrics`] archive quality measures.
//! * [`orchestrator`] experiment runner, lineage ingestion and grid export.

pub mod agents;
pub mod archive;
pub mod cppn;
pub mod metrics;
pub mod neat;
pub mod orchestrator;
pub mod providers;
pub mod rng;
pub mod session;

pub use archive::{Archive, ArchiveEntry, ArchiveSample, EntryId, SharedArchive};
pub use cppn::{ActivationKind, Genome, ImageBuffer};
pub use neat::{InnovationRegistry, MutationMode, MutationParams};
pub use session::{Action, SessionConfig, SessionState};
