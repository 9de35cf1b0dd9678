use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, OrchestratorError};
use crate::agents::{
    random_publish, random_select, ActiveTraits, Agent, BranchChoice, Decided, Degradation, SampleView,
    TraitPool,
};
use crate::archive::{rating_due, Archive, ArchiveEntry, EntryId, SharedArchive};
use crate::neat::InnovationRegistry;
use crate::rng::{self, label, Rng};
use crate::session::{PublicationRecord, SessionConfig, SessionState, SessionTranscript, StepOutcome};

/// Checkpoint label whose value is the number of completed sessions.
pub const PROGRESS_CHECKPOINT: &str = "sessions_done";
const RUN_FILE: &str = "run.json";
const TRANSCRIPT_DIR: &str = "transcripts";

/// One rating round triggered by a publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRound {
    pub rater: String,
    pub scores: BTreeMap<EntryId, i64>,
    pub rationale: String,
    pub applied: usize,
    pub rejected: usize,
}

/// Everything that happened in one session, persisted next to the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_index: u64,
    pub agent_id: String,
    pub personality: Option<String>,
    pub branch: BranchChoice,
    pub branch_rationale: String,
    pub entry_id: EntryId,
    pub title: String,
    pub transcript: SessionTranscript,
    pub degradations: Vec<Degradation>,
    pub rating: Option<RatingRound>,
}

#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Stop abruptly once the archive holds this many entries, without
    /// writing the progress checkpoint. Used to exercise resumption.
    pub stop_at_archive_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Sessions already complete when this invocation started.
    pub resumed_at: u64,
    pub sessions_completed: u64,
    pub rating_rounds: u64,
    pub degradations: Vec<Degradation>,
    pub archive_hash: String,
    pub interrupted: bool,
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    fingerprint: String,
}

/// Runs sessions in waves of `parallel_agents`. Within a wave every agent
/// sees the archive as it stood at the start of the wave; branch counts and
/// publications are then committed in session order. Each session draws from
/// streams keyed by its index, so the result does not depend on thread timing.
pub struct Runner {
    config: ExperimentConfig,
    session_config: SessionConfig,
    agents: Vec<Box<dyn Agent>>,
    registry: InnovationRegistry,
    traits: Option<ActiveTraits>,
    archive: SharedArchive,
    dir: Option<PathBuf>,
    completed: u64,
}

struct Opening {
    index: u64,
    personality: Option<String>,
    branch: Decided<BranchChoice>,
    rng: Rng,
}

/// A finished session: the publication and its transcript.
pub struct Played {
    pub record: PublicationRecord,
    pub transcript: SessionTranscript,
}

fn session_stream(seed: u64, tag: &str, index: u64) -> Rng {
    rng::stream(seed, &[label(tag), index])
}

/// Mutation seed of session `index`.
pub fn session_seed(seed: u64, index: u64) -> u64 {
    rng::combine(&[seed, label("session"), index])
}

impl Runner {
    /// An in-memory run.
    pub fn new(
        config: ExperimentConfig,
        agents: Vec<Box<dyn Agent>>,
        traits: Option<TraitPool>,
    ) -> Result<Runner, OrchestratorError> {
        Self::assemble(config, agents, traits, Archive::in_memory(), None, 0)
    }

    /// A run persisted in `dir`, resumed from its last progress checkpoint
    /// when the directory already holds one.
    pub fn open(
        config: ExperimentConfig,
        agents: Vec<Box<dyn Agent>>,
        traits: Option<TraitPool>,
        dir: &Path,
    ) -> Result<Runner, OrchestratorError> {
        fs::create_dir_all(dir.join(TRANSCRIPT_DIR))?;
        let run_file = dir.join(RUN_FILE);
        let fingerprint = config.fingerprint();
        if run_file.exists() {
            let existing: RunFile = serde_json::from_str(&fs::read_to_string(&run_file)?)?;
            if existing.fingerprint != fingerprint {
                return Err(OrchestratorError::Config(format!(
                    "{} was started with a different configuration",
                    dir.display()
                )));
            }
        } else {
            fs::write(&run_file, serde_json::to_string_pretty(&RunFile { fingerprint })?)?;
        }
        let (archive, done) = Archive::open_at_checkpoint(dir, PROGRESS_CHECKPOINT)?;
        let done = done.unwrap_or(0);
        if (archive.len() as u64) < done {
            return Err(OrchestratorError::Config(format!(
                "checkpoint says {done} sessions but the archive holds {}",
                archive.len()
            )));
        }
        if done > 0 {
            log::info!("resuming after {done} completed sessions");
        }
        Self::assemble(config, agents, traits, archive, Some(dir.to_path_buf()), done)
    }

    fn assemble(
        config: ExperimentConfig,
        agents: Vec<Box<dyn Agent>>,
        traits: Option<TraitPool>,
        archive: Archive,
        dir: Option<PathBuf>,
        completed: u64,
    ) -> Result<Runner, OrchestratorError> {
        config.validate()?;
        if agents.len() != config.parallel_agents {
            return Err(OrchestratorError::Config(format!(
                "{} agents for parallel_agents = {}",
                agents.len(),
                config.parallel_agents
            )));
        }
        let traits = match (config.na, traits) {
            (0, _) => None,
            (_, None) => return Err(OrchestratorError::Config("personalities need a trait pool".into())),
            (na, Some(pool)) => {
                let mut rng = rng::stream(config.seed, &[label("active-traits")]);
                Some(pool.active_subset(na, &mut rng).map_err(OrchestratorError::Config)?)
            }
        };
        Ok(Runner {
            session_config: config.session_config(),
            config,
            agents,
            registry: InnovationRegistry::new(),
            traits,
            archive: SharedArchive::new(archive),
            dir,
            completed,
        })
    }

    /// The live archive. Other writers (e.g. human sessions served over
    /// HTTP) may publish into it while the run is going.
    pub fn archive(&self) -> &SharedArchive {
        &self.archive
    }

    /// The archive, once no other handle to it is alive.
    pub fn into_archive(self) -> Archive {
        self.archive
            .try_into_inner()
            .unwrap_or_else(|shared| shared.read().snapshot())
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn active_traits(&self) -> Option<&ActiveTraits> {
        self.traits.as_ref()
    }

    /// Runs until `config.sessions` sessions have published.
    pub fn run(&mut self, control: &RunControl) -> Result<RunSummary, OrchestratorError> {
        let mut summary = RunSummary {
            resumed_at: self.completed,
            sessions_completed: self.completed,
            rating_rounds: 0,
            degradations: Vec::new(),
            archive_hash: String::new(),
            interrupted: false,
        };
        while self.completed < self.config.sessions {
            let end = (self.completed + self.config.parallel_agents as u64).min(self.config.sessions);
            let interrupted = self.run_wave(self.completed..end, control, &mut summary)?;
            if interrupted {
                summary.interrupted = true;
                break;
            }
            self.completed = end;
            self.archive.write().checkpoint(PROGRESS_CHECKPOINT, end)?;
        }
        summary.sessions_completed = self.completed;
        summary.archive_hash = self.archive.read().content_hash();
        Ok(summary)
    }

    fn run_wave(
        &mut self,
        indices: std::ops::Range<u64>,
        control: &RunControl,
        summary: &mut RunSummary,
    ) -> Result<bool, OrchestratorError> {
        let seed = self.config.seed;
        let n = (indices.end - indices.start) as usize;
        let traits = self.traits.as_ref();

        // Openings: every agent looks at the same archive state.
        let views: Vec<SampleView> = {
            let archive = self.archive.read();
            indices
                .clone()
                .map(|index| match archive.sample_for_branching(&mut session_stream(seed, "sample", index)) {
                    Ok(sample) => SampleView::new(sample, &archive),
                    Err(_) => SampleView::empty(),
                })
                .collect()
        };
        let openings: Vec<Opening> = std::thread::scope(|s| {
            let handles: Vec<_> = self.agents[..n]
                .iter_mut()
                .zip(indices.clone())
                .zip(views)
                .map(|((agent, index), view)| {
                    s.spawn(move || {
                        let personality =
                            traits.and_then(|t| t.assign(&mut session_stream(seed, "personality", index)));
                        agent.begin_session(personality.as_deref());
                        let mut rng = session_stream(seed, "agent", index);
                        let branch = agent.branch(&view, &mut rng);
                        Opening {
                            index,
                            personality,
                            branch,
                            rng,
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
        });

        let mut parents: Vec<Option<ArchiveEntry>> = Vec::with_capacity(n);
        for o in &openings {
            parents.push(match o.branch.value {
                BranchChoice::Fresh => None,
                BranchChoice::Branch(id) => Some(self.archive.record_branch(id)?),
            });
        }

        let session_config = &self.session_config;
        let registry = &self.registry;
        let played: Vec<(Opening, Result<Played, OrchestratorError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = self.agents[..n]
                .iter_mut()
                .zip(openings)
                .zip(&parents)
                .map(|((agent, mut opening), parent)| {
                    s.spawn(move || {
                        let result = play_session(
                            agent.as_mut(),
                            parent.as_ref(),
                            session_config,
                            registry,
                            session_seed(seed, opening.index),
                            opening.index,
                            &mut opening.rng,
                        );
                        (opening, result)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
        });

        let mut wave_degradations = Vec::new();
        for (slot, (opening, result)) in played.into_iter().enumerate() {
            let played = result?;
            let agent = &mut self.agents[slot];
            let agent_id = agent.id().to_string();
            let entry_id = self.archive.publish(&played.record, &agent_id)?;
            let mut rating = None;
            let size = self.archive.len();
            if rating_due(size as u64, size) {
                let count = size as u64;
                let view = {
                    let archive = self.archive.read();
                    let sample = archive.sample_for_branching(&mut session_stream(seed, "rating-sample", count))?;
                    SampleView::new(sample, &archive)
                };
                let decided = agent.rate(&view, &mut session_stream(seed, "rating", count));
                let report = self.archive.apply_ratings(&decided.value, &agent_id)?;
                summary.rating_rounds += 1;
                rating = Some(RatingRound {
                    rater: agent_id.clone(),
                    scores: decided.value,
                    rationale: decided.rationale,
                    applied: report.applied,
                    rejected: report.rejected.len(),
                });
            }
            let degradations = agent.take_degradations();
            wave_degradations.extend(degradations.iter().cloned());
            let log = SessionLog {
                session_index: opening.index,
                agent_id,
                personality: opening.personality,
                branch: opening.branch.value,
                branch_rationale: opening.branch.rationale,
                entry_id,
                title: played.record.title.clone(),
                transcript: played.transcript,
                degradations,
                rating,
            };
            self.write_log(&log)?;
            if control
                .stop_at_archive_size
                .is_some_and(|limit| self.archive.len() >= limit)
            {
                summary.degradations.extend(wave_degradations);
                return Ok(true);
            }
        }
        if !wave_degradations.is_empty() {
            log::error!(
                "DEGRADED MODE: {} decisions in sessions {}..{} fell back to random choices",
                wave_degradations.len(),
                indices.start,
                indices.end
            );
        }
        summary.degradations.extend(wave_degradations);
        Ok(false)
    }

    fn write_log(&self, log: &SessionLog) -> Result<(), OrchestratorError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = transcript_path(dir, log.session_index);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(log)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

pub fn transcript_path(dir: &Path, session_index: u64) -> PathBuf {
    dir.join(TRANSCRIPT_DIR).join(format!("{session_index:06}.json"))
}

/// Reads the persisted log of one session.
pub fn read_session_log(dir: &Path, session_index: u64) -> Result<SessionLog, OrchestratorError> {
    let bytes = fs::read(transcript_path(dir, session_index))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn degrade(agent: &mut dyn Agent, reason: String) {
    log::warn!("agent {} made an illegal move: {reason}", agent.id());
}

/// Drives one session from its starting population to publication. Illegal
/// actions are replaced by random legal ones.
pub fn play_session(
    agent: &mut dyn Agent,
    parent: Option<&ArchiveEntry>,
    config: &SessionConfig,
    registry: &InnovationRegistry,
    seed: u64,
    session_index: u64,
    rng: &mut Rng,
) -> Result<Played, OrchestratorError> {
    let mut state = match parent {
        None => SessionState::start_fresh(config.clone(), seed)?,
        Some(p) => SessionState::start_branch(p, config.clone(), registry, seed)?,
    };
    loop {
        if state.publish_due() {
            break;
        }
        let decided = agent.select(&state, rng);
        let outcome = match state.apply_action(&decided.value, &decided.rationale, registry) {
            Ok(o) => o,
            Err(e) if e.is_agent_fault() => {
                degrade(agent, e.to_string());
                let fallback = random_select(&state, rng);
                state.apply_action(&fallback, "", registry)?
            }
            Err(e) => return Err(e.into()),
        };
        if let StepOutcome::Published(record) = outcome {
            return Ok(Played {
                record: *record,
                transcript: state.transcript().clone(),
            });
        }
    }
    let decided = agent.publish(&state, session_index, rng);
    let (index, title) = decided.value;
    let record = match state.finalize_publish(index, &title, &decided.rationale) {
        Ok(r) => r,
        Err(e) if e.is_agent_fault() => {
            degrade(agent, e.to_string());
            let (index, title) = random_publish(&state, session_index, rng);
            state.finalize_publish(index, &title, "")?
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Played {
        record,
        transcript: state.transcript().clone(),
    })
}
