//! The shared store of published images.
//!
//! Entries get gapless, monotone ids in publication order. All mutation goes
//! through [`Archive`] methods, which persist an event before updating memory
//! when the archive is backed by a directory (see [`store`]).

mod phylogeny;
mod sample;
pub mod store;

pub use phylogeny::PhylogenyForest;
pub use sample::{ArchiveSample, Category, SAMPLE_CATEGORY_SIZE, SAMPLE_SIZE};

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cppn::{CppnError, Genome, ImageError};
use crate::rng::Rng;
use crate::session::{Origin, PublicationRecord};
use store::{Event, EntryRecord, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub u64);

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;
/// Archive size from which rating rounds start.
pub const RATING_MIN_ARCHIVE: usize = 100;
/// A rating round runs after every this many publications.
pub const RATING_PERIOD: u64 = 5;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive is empty")]
    Empty,
    #[error("no entry with id {0}")]
    UnknownEntry(EntryId),
    #[error("entry {id} references parent {parent}, which is not an earlier entry")]
    InvalidParent { id: EntryId, parent: EntryId },
    #[error("score {score} for entry {id} outside 1..=5")]
    ScoreOutOfRange { id: EntryId, score: i64 },
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt archive log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Genome(#[from] CppnError),
}

/// A published image.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub id: EntryId,
    pub genome: Genome,
    pub image_png: Arc<[u8]>,
    pub title: String,
    pub color_mode: bool,
    pub parent_id: Option<EntryId>,
    pub agent_id: String,
    pub ratings: Vec<u8>,
    pub branch_count: u64,
    pub rationale: String,
}

impl ArchiveEntry {
    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            None
        } else {
            Some(self.ratings.iter().map(|&r| r as f64).sum::<f64>() / self.ratings.len() as f64)
        }
    }

    fn rating_sum(&self) -> u64 {
        self.ratings.iter().map(|&r| r as u64).sum()
    }
}

/// Ordering by rating key, best first: rated entries above unrated ones,
/// higher mean first, ties to the more recent entry. Means are compared
/// exactly by cross-multiplication.
pub fn rating_order(a: &ArchiveEntry, b: &ArchiveEntry) -> Ordering {
    let by_mean = match (a.ratings.is_empty(), b.ratings.is_empty()) {
        (true, true) => Ordering::Equal,
        (false, true) => Ordering::Less,
        (true, false) => Ordering::Greater,
        (false, false) => {
            let lhs = a.rating_sum() as u128 * b.ratings.len() as u128;
            let rhs = b.rating_sum() as u128 * a.ratings.len() as u128;
            rhs.cmp(&lhs)
        }
    };
    by_mean.then_with(|| b.id.cmp(&a.id))
}

/// True iff a rating round is due after this publication.
pub fn rating_due(publication_count: u64, archive_size: usize) -> bool {
    archive_size >= RATING_MIN_ARCHIVE && publication_count % RATING_PERIOD == 0
}

#[derive(Debug, Default)]
pub struct RatingReport {
    pub applied: usize,
    pub rejected: Vec<ArchiveError>,
}

/// Read access shared by live archives and ingested historical lineages;
/// positions are publication order.
pub trait ArchiveView: Sync {
    fn len(&self) -> usize;
    fn parent_position(&self, position: usize) -> Option<usize>;
    fn image_png(&self, position: usize) -> Result<Arc<[u8]>, ArchiveError>;
    fn genome_at(&self, position: usize) -> Option<&Genome>;
    /// Stable key for caches, e.g. the entry id.
    fn cache_key(&self, position: usize) -> String;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parent links for every position.
    fn parent_positions(&self) -> Vec<Option<usize>> {
        (0..self.len()).map(|i| self.parent_position(i)).collect()
    }
}

#[derive(Debug, Default)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
    store: Option<Store>,
}

impl Archive {
    pub fn in_memory() -> Archive {
        Archive::default()
    }

    /// Opens (creating if necessary) a directory-backed archive and replays its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Archive, ArchiveError> {
        let (store, events) = Store::open(dir.as_ref())?;
        let mut archive = Archive::default();
        for (line, event) in events {
            archive.apply_event(&store, event).map_err(|e| match e {
                ArchiveError::Corrupt { .. } => e,
                other => ArchiveError::Corrupt {
                    line,
                    message: other.to_string(),
                },
            })?;
        }
        archive.store = Some(store);
        Ok(archive)
    }

    /// Rewinds the on-disk log to just after the last checkpoint event with
    /// this label (or to empty when there is none) and reopens it. Returns the
    /// archive and the checkpoint's value.
    pub fn open_at_checkpoint(
        dir: impl AsRef<Path>,
        label: &str,
    ) -> Result<(Archive, Option<u64>), ArchiveError> {
        let value = Store::rewind_to_checkpoint(dir.as_ref(), label)?;
        Ok((Archive::open(dir)?, value))
    }

    fn apply_event(&mut self, store: &Store, event: Event) -> Result<(), ArchiveError> {
        match event {
            Event::Publish { entry } => {
                if entry.id.0 != self.entries.len() as u64 {
                    return Err(ArchiveError::Corrupt {
                        line: 0,
                        message: format!("entry {} out of sequence", entry.id),
                    });
                }
                let genome = store.read_genome(entry.id)?;
                if genome.content_hash() != entry.genome_hash {
                    return Err(ArchiveError::Corrupt {
                        line: 0,
                        message: format!("genome hash mismatch for entry {}", entry.id),
                    });
                }
                let image_png = store.read_image(entry.id)?;
                self.entries.push(ArchiveEntry {
                    id: entry.id,
                    genome,
                    image_png,
                    title: entry.title,
                    color_mode: entry.color_mode,
                    parent_id: entry.parent_id,
                    agent_id: entry.agent_id,
                    ratings: Vec::new(),
                    branch_count: 0,
                    rationale: entry.rationale,
                });
            }
            Event::Branch { id } => self.entry_mut(id)?.branch_count += 1,
            Event::Rating { id, score, .. } => self.entry_mut(id)?.ratings.push(score),
            Event::Checkpoint { .. } => {}
        }
        Ok(())
    }

    fn entry_mut(&mut self, id: EntryId) -> Result<&mut ArchiveEntry, ArchiveError> {
        self.entries
            .get_mut(id.0 as usize)
            .ok_or(ArchiveError::UnknownEntry(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// In-memory archive over prebuilt entries. Ids must run 0, 1, 2, ... and
    /// parents must precede their children.
    pub fn from_entries(entries: Vec<ArchiveEntry>) -> Result<Archive, ArchiveError> {
        for (i, e) in entries.iter().enumerate() {
            if e.id.0 != i as u64 {
                return Err(ArchiveError::Corrupt {
                    line: 0,
                    message: format!("entry {} out of sequence", e.id),
                });
            }
            if let Some(p) = e.parent_id.filter(|p| *p >= e.id) {
                return Err(ArchiveError::InvalidParent { id: e.id, parent: p });
            }
        }
        Ok(Archive { entries, store: None })
    }

    /// In-memory copy of the current entries, detached from any store.
    pub fn snapshot(&self) -> Archive {
        Archive {
            entries: self.entries.clone(),
            store: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn get(&self, id: EntryId) -> Option<&ArchiveEntry> {
        self.entries.get(id.0 as usize)
    }

    pub fn next_id(&self) -> EntryId {
        EntryId(self.entries.len() as u64)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.store.as_ref().map(Store::dir)
    }

    /// Appends a publication. The entry is durable before the id is returned.
    pub fn publish(
        &mut self,
        record: &PublicationRecord,
        agent_id: &str,
    ) -> Result<EntryId, ArchiveError> {
        let id = self.next_id();
        let parent_id = record.origin.parent();
        if let Some(parent) = parent_id {
            if parent >= id {
                return Err(ArchiveError::InvalidParent { id, parent });
            }
        }
        let image_png: Arc<[u8]> = record.image.to_png()?.into();
        if let Some(store) = &mut self.store {
            store.write_genome(id, &record.genome)?;
            store.write_image(id, &image_png)?;
            store.append(&Event::Publish {
                entry: EntryRecord {
                    id,
                    title: record.title.clone(),
                    color_mode: record.color_mode,
                    parent_id,
                    agent_id: agent_id.to_string(),
                    rationale: record.rationale.clone(),
                    genome_hash: record.genome.content_hash(),
                },
            })?;
        }
        self.entries.push(ArchiveEntry {
            id,
            genome: record.genome.clone(),
            image_png,
            title: record.title.clone(),
            color_mode: record.color_mode,
            parent_id,
            agent_id: agent_id.to_string(),
            ratings: Vec::new(),
            branch_count: 0,
            rationale: record.rationale.clone(),
        });
        Ok(id)
    }

    /// Counts one more session branched from `id` and returns the entry.
    pub fn record_branch(&mut self, id: EntryId) -> Result<ArchiveEntry, ArchiveError> {
        if self.get(id).is_none() {
            return Err(ArchiveError::UnknownEntry(id));
        }
        if let Some(store) = &mut self.store {
            store.append(&Event::Branch { id })?;
        }
        let entry = self.entry_mut(id)?;
        entry.branch_count += 1;
        Ok(entry.clone())
    }

    /// Appends each in-range score; out-of-range scores and unknown ids are
    /// reported without blocking the rest.
    pub fn apply_ratings(
        &mut self,
        scores: &BTreeMap<EntryId, i64>,
        rater: &str,
    ) -> Result<RatingReport, ArchiveError> {
        let mut report = RatingReport::default();
        for (&id, &score) in scores {
            if self.get(id).is_none() {
                report.rejected.push(ArchiveError::UnknownEntry(id));
                continue;
            }
            if !(MIN_RATING as i64..=MAX_RATING as i64).contains(&score) {
                report.rejected.push(ArchiveError::ScoreOutOfRange { id, score });
                continue;
            }
            let score = score as u8;
            if let Some(store) = &mut self.store {
                store.append(&Event::Rating {
                    id,
                    score,
                    rater: rater.to_string(),
                })?;
            }
            self.entry_mut(id)?.ratings.push(score);
            report.applied += 1;
        }
        Ok(report)
    }

    /// Records a named marker in the event log (no-op in memory).
    pub fn checkpoint(&mut self, label: &str, value: u64) -> Result<(), ArchiveError> {
        if let Some(store) = &mut self.store {
            store.append(&Event::Checkpoint {
                label: label.to_string(),
                value,
            })?;
        }
        Ok(())
    }

    pub fn sample_for_branching(&self, rng: &mut Rng) -> Result<ArchiveSample, ArchiveError> {
        if self.entries.is_empty() {
            return Err(ArchiveError::Empty);
        }
        Ok(sample::draw(&self.entries, rng))
    }

    pub fn phylogeny(&self) -> Result<PhylogenyForest, ArchiveError> {
        PhylogenyForest::from_parents(&self.parent_positions()).map_err(|(i, p)| {
            ArchiveError::InvalidParent {
                id: EntryId(i as u64),
                parent: EntryId(p as u64),
            }
        })
    }

    /// SHA-256 over every entry's identity, genome, lineage, ratings and branch count.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            let line = format!(
                "{}|{}|{}|{}|{:?}|{}|{:?}|{}\n",
                e.id,
                e.genome.content_hash(),
                e.title,
                e.color_mode,
                e.parent_id.map(|p| p.0),
                e.agent_id,
                e.ratings,
                e.branch_count
            );
            h.update(line.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Origin a new session would record when branching `id`.
    pub fn branch_origin(&self, id: EntryId) -> Result<Origin, ArchiveError> {
        self.get(id)
            .map(|_| Origin::Branch(id))
            .ok_or(ArchiveError::UnknownEntry(id))
    }
}

impl ArchiveView for Archive {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn parent_position(&self, position: usize) -> Option<usize> {
        self.entries[position].parent_id.map(|p| p.0 as usize)
    }

    fn image_png(&self, position: usize) -> Result<Arc<[u8]>, ArchiveError> {
        self.entries
            .get(position)
            .map(|e| e.image_png.clone())
            .ok_or(ArchiveError::UnknownEntry(EntryId(position as u64)))
    }

    fn genome_at(&self, position: usize) -> Option<&Genome> {
        self.entries.get(position).map(|e| &e.genome)
    }

    fn cache_key(&self, position: usize) -> String {
        position.to_string()
    }
}

/// An archive shared between concurrent sessions: reads in parallel, one writer at a time.
#[derive(Debug, Clone, Default)]
pub struct SharedArchive(Arc<RwLock<Archive>>);

impl SharedArchive {
    pub fn new(archive: Archive) -> Self {
        SharedArchive(Arc::new(RwLock::new(archive)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Archive> {
        self.0.read().expect("archive lock poisoned")
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Archive> {
        self.0.write().expect("archive lock poisoned")
    }

    pub fn publish(&self, record: &PublicationRecord, agent_id: &str) -> Result<EntryId, ArchiveError> {
        self.write().publish(record, agent_id)
    }

    pub fn record_branch(&self, id: EntryId) -> Result<ArchiveEntry, ArchiveError> {
        self.write().record_branch(id)
    }

    pub fn apply_ratings(
        &self,
        scores: &BTreeMap<EntryId, i64>,
        rater: &str,
    ) -> Result<RatingReport, ArchiveError> {
        self.write().apply_ratings(scores, rater)
    }

    pub fn sample_for_branching(&self, rng: &mut Rng) -> Result<ArchiveSample, ArchiveError> {
        self.read().sample_for_branching(rng)
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    /// The archive itself, if this is the last handle.
    pub fn try_into_inner(self) -> Result<Archive, SharedArchive> {
        Arc::try_unwrap(self.0)
            .map(|lock| lock.into_inner().expect("archive lock poisoned"))
            .map_err(SharedArchive)
    }
}
