use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveError, ArchiveSample, EntryId, RatingReport, SharedArchive};
use crate::metrics::{j1_index, visual_coverage, EmbeddingCache};
use crate::neat::{InnovationRegistry, MutationMode};
use crate::providers::TestEmbedder;
use crate::rng::{combine, label, stream};
use crate::session::{Action, Origin, SessionConfig, SessionError, SessionState, StepOutcome};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

impl HubError {
    /// Machine-readable reason for API clients.
    pub fn reason(&self) -> &'static str {
        match self {
            HubError::UnknownSession(_) => "unknown_session",
            HubError::Session(e) => match e {
                SessionError::Finished => "session_finished",
                SessionError::PrematurePublish { .. } => "publish_not_due",
                SessionError::MustPublish(_) => "publish_required",
                SessionError::ToggleLimit(_) => "toggle_limit",
                SessionError::ModeRequiresColor(_) => "mode_requires_color",
                SessionError::IndexOutOfRange { .. } => "index_out_of_range",
                SessionError::DuplicateIndex(_) => "duplicate_index",
                SessionError::EmptySelection => "empty_selection",
                SessionError::Params(_) => "invalid_parameters",
                _ => "internal",
            },
            HubError::Archive(ArchiveError::UnknownEntry(_)) => "unknown_entry",
            HubError::Archive(ArchiveError::Empty) => "archive_empty",
            HubError::Archive(_) => "internal",
        }
    }

    /// HTTP status: 409 for actions the session state forbids right now.
    pub fn status(&self) -> u16 {
        match self.reason() {
            "unknown_session" | "unknown_entry" => 404,
            "session_finished" | "publish_not_due" | "publish_required" | "toggle_limit"
            | "mode_requires_color" | "archive_empty" => 409,
            "internal" => 500,
            _ => 400,
        }
    }
}

/// Client-facing snapshot of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub user: String,
    pub origin: Origin,
    pub generation: u32,
    pub generations_to_publish: u32,
    pub population_size: usize,
    pub color_mode: bool,
    pub strength: f64,
    pub mode: MutationMode,
    pub can_toggle: bool,
    pub can_publish: bool,
    pub publish_due: bool,
    pub finished: bool,
    pub published: Vec<EntryId>,
}

/// Headline numbers for the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub size: usize,
    pub roots: usize,
    pub max_depth: usize,
    pub rated_entries: usize,
    pub j1: Option<f64>,
    /// Coverage radius under the built-in luma embedder.
    pub luma_coverage_radius: Option<f64>,
}

struct HumanSession {
    user: String,
    state: SessionState,
    published: Vec<EntryId>,
}

impl HumanSession {
    fn view(&self, id: &str) -> SessionView {
        let s = &self.state;
        SessionView {
            id: id.to_string(),
            user: self.user.clone(),
            origin: s.origin(),
            generation: s.generation(),
            generations_to_publish: s.config().generations_to_publish,
            population_size: s.population().len(),
            color_mode: s.color_mode(),
            strength: s.params().strength,
            mode: s.params().mode,
            can_toggle: s.can_toggle(),
            can_publish: s.can_publish(),
            publish_due: s.publish_due(),
            finished: s.is_finished(),
            published: self.published.clone(),
        }
    }
}

/// Interactive sessions against a shared archive, one per id.
pub struct SessionHub {
    archive: SharedArchive,
    registry: InnovationRegistry,
    config: SessionConfig,
    seed: u64,
    next: AtomicU64,
    samples: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<Mutex<HumanSession>>>>,
}

impl SessionHub {
    pub fn new(archive: SharedArchive, config: SessionConfig, seed: u64) -> Result<Self, HubError> {
        config.validate()?;
        Ok(SessionHub {
            archive,
            registry: InnovationRegistry::new(),
            config,
            seed,
            next: AtomicU64::new(0),
            samples: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn archive(&self) -> &SharedArchive {
        &self.archive
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<HumanSession>>, HubError> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| HubError::UnknownSession(id.to_string()))
    }

    /// Starts a session, fresh or branched from `parent` (which counts a branch).
    pub fn create(&self, parent: Option<EntryId>, user: &str) -> Result<SessionView, HubError> {
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        let seed = combine(&[self.seed, label("human-session"), n]);
        let state = match parent {
            None => SessionState::start_fresh(self.config.clone(), seed)?,
            Some(pid) => {
                let entry = self.archive.record_branch(pid)?;
                SessionState::start_branch(&entry, self.config.clone(), &self.registry, seed)?
            }
        };
        let id = format!("s{n}");
        let session = HumanSession {
            user: user.to_string(),
            state,
            published: Vec::new(),
        };
        let view = session.view(&id);
        self.sessions
            .lock()
            .expect("session table poisoned")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, HubError> {
        let s = self.get(id)?;
        let s = s.lock().expect("session poisoned");
        Ok(s.view(id))
    }

    /// Applies one action. Publications go straight into the archive.
    pub fn act(&self, id: &str, action: &Action, rationale: &str) -> Result<(SessionView, Option<EntryId>), HubError> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session poisoned");
        let published = match s.state.apply_action(action, rationale, &self.registry)? {
            StepOutcome::Continued => None,
            StepOutcome::Published(record) => {
                let user = s.user.clone();
                let entry = self.archive.publish(&record, &user)?;
                s.published.push(entry);
                Some(entry)
            }
        };
        Ok((s.view(id), published))
    }

    /// PNG of population member `index` under the session's color mode.
    pub fn image(&self, id: &str, index: usize) -> Result<Vec<u8>, HubError> {
        let s = self.get(id)?;
        let img = s.lock().expect("session poisoned").state.render_member(index)?;
        Ok(img.to_png().map_err(ArchiveError::from)?)
    }

    /// A fresh branching sample; each call draws from the next stream.
    pub fn sample(&self) -> Result<ArchiveSample, HubError> {
        let n = self.samples.fetch_add(1, Ordering::SeqCst);
        let mut rng = stream(self.seed, &[label("human-sample"), n]);
        Ok(self.archive.sample_for_branching(&mut rng)?)
    }

    pub fn rate(&self, scores: &BTreeMap<EntryId, i64>, rater: &str) -> Result<RatingReport, HubError> {
        Ok(self.archive.apply_ratings(scores, rater)?)
    }

    pub fn summary(&self) -> Result<ArchiveSummary, HubError> {
        let archive = self.archive.read();
        let forest = archive.phylogeny()?;
        let n = forest.len();
        let luma = if n == 0 {
            None
        } else {
            visual_coverage(&*archive, &TestEmbedder, &EmbeddingCache::in_memory(), 100)
                .ok()
                .map(|c| c.radius)
        };
        Ok(ArchiveSummary {
            size: n,
            roots: forest.roots().len(),
            max_depth: (0..n).map(|i| forest.depth(i)).max().unwrap_or(0),
            rated_entries: archive.entries().iter().filter(|e| !e.ratings.is_empty()).count(),
            j1: if n == 0 { None } else { j1_index(&forest).ok() },
            luma_coverage_radius: luma,
        })
    }
}
