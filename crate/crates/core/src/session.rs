//! The per-agent episode: start fresh or branch, run selection generations,
//! publish at the configured generation.
//!
//! A session owns its mutation stream, seeded once at start, so a transcript
//! of actions replays bit-exactly from the seed alone.

use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveEntry, EntryId};
use crate::cppn::{render, CppnError, Genome, ImageBuffer};
use crate::neat::{self, check_strength, InnovationRegistry, MutationMode, MutationParams, NeatError};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionConfig {
    pub generations_to_publish: u32,
    pub pop_size: usize,
    pub default_strength: f64,
    pub render_width: u32,
    pub render_height: u32,
    /// When false, publication is allowed at any generation and does not end
    /// the session.
    pub fixed_length: bool,
    /// Consecutive color toggles allowed before a selection is required.
    pub max_consecutive_toggles: u32,
    /// Structural rates and weight rate; strength and mode are overridden per session.
    pub mutation: MutationParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            generations_to_publish: 20,
            pop_size: 15,
            default_strength: neat::DEFAULT_STRENGTH,
            render_width: 128,
            render_height: 128,
            fixed_length: true,
            max_consecutive_toggles: 3,
            mutation: MutationParams::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.generations_to_publish == 0
            || self.pop_size == 0
            || self.render_width == 0
            || self.render_height == 0
        {
            return Err(SessionError::Config("sizes must be positive".into()));
        }
        check_strength(self.default_strength)?;
        self.mutation.validate()?;
        Ok(())
    }

    fn params_for(&self, color_mode: bool) -> MutationParams {
        MutationParams {
            strength: self.default_strength,
            mode: default_mode(color_mode),
            ..self.mutation
        }
    }
}

fn default_mode(color_mode: bool) -> MutationMode {
    if color_mode {
        MutationMode::Both
    } else {
        MutationMode::StructureOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "parent")]
pub enum Origin {
    Fresh,
    Branch(EntryId),
}

impl Origin {
    pub fn parent(self) -> Option<EntryId> {
        match self {
            Origin::Fresh => None,
            Origin::Branch(id) => Some(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Action {
    ToggleColor,
    Select {
        parents: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strength: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<MutationMode>,
    },
    Publish {
        index: usize,
        title: String,
    },
}

impl Action {
    pub fn select(parent: usize) -> Action {
        Action::Select {
            parents: vec![parent],
            strength: None,
            mode: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("index {index} out of range for a population of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("parent index {0} selected twice")]
    DuplicateIndex(usize),
    #[error("a selection needs at least one parent")]
    EmptySelection,
    #[error(transparent)]
    Params(#[from] NeatError),
    #[error("mutation mode {0:?} requires color mode")]
    ModeRequiresColor(MutationMode),
    #[error("publication is only allowed at generation {required}, session is at {generation}")]
    PrematurePublish { generation: u32, required: u32 },
    #[error("generation {0} reached; the session must publish")]
    MustPublish(u32),
    #[error("at most {0} consecutive color toggles")]
    ToggleLimit(u32),
    #[error("session already published")]
    Finished,
    #[error("render failed: {0}")]
    Render(#[from] CppnError),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("replay diverged at step {step}: {reason}")]
    ReplayMismatch { step: usize, reason: String },
}

impl SessionError {
    /// Errors an agent can fix by choosing a different action.
    pub fn is_agent_fault(&self) -> bool {
        !matches!(
            self,
            SessionError::Render(_) | SessionError::Config(_) | SessionError::ReplayMismatch { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub generation: u32,
    pub color_mode: bool,
    /// Content hashes of the population the action was taken on.
    pub population: Vec<String>,
    pub action: Action,
    #[serde(default)]
    pub rationale: String,
    pub timestamp_ms: u64,
}

/// Everything needed to replay a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub seed: u64,
    pub origin: Origin,
    pub initial_color_mode: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_genome: Option<String>,
    pub steps: Vec<TranscriptStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_genome: Option<String>,
}

/// Immutable output of a session, handed to the archive.
#[derive(Debug, Clone)]
pub struct PublicationRecord {
    pub genome: Genome,
    pub image: ImageBuffer,
    pub title: String,
    pub color_mode: bool,
    pub origin: Origin,
    pub rationale: String,
    pub generation: u32,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Continued,
    Published(Box<PublicationRecord>),
}

#[derive(Debug, Clone)]
pub struct SessionState {
    config: SessionConfig,
    origin: Origin,
    generation: u32,
    population: Vec<Genome>,
    color_mode: bool,
    params: MutationParams,
    consecutive_toggles: u32,
    finished: bool,
    seed: u64,
    rng: Rng,
    transcript: SessionTranscript,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl SessionState {
    /// A population of independent random genomes, grayscale, generation 0.
    pub fn start_fresh(config: SessionConfig, seed: u64) -> Result<SessionState, SessionError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let population = (0..config.pop_size).map(|_| Genome::init(&mut rng)).collect();
        Ok(Self::assemble(config, Origin::Fresh, population, false, seed, rng, None))
    }

    /// Slot 0 is an exact copy of the parent, the rest are its mutants. The
    /// parent's color mode carries over. Branch counting is the archive's job.
    pub fn start_branch(
        parent: &ArchiveEntry,
        config: SessionConfig,
        registry: &InnovationRegistry,
        seed: u64,
    ) -> Result<SessionState, SessionError> {
        Self::start_from_genome(parent.id, &parent.genome, parent.color_mode, config, registry, seed)
    }

    pub fn start_from_genome(
        parent_id: EntryId,
        genome: &Genome,
        color_mode: bool,
        config: SessionConfig,
        registry: &InnovationRegistry,
        seed: u64,
    ) -> Result<SessionState, SessionError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let params = config.params_for(color_mode);
        let population = neat::make_offspring(
            std::slice::from_ref(genome),
            &params,
            registry,
            &mut rng,
            config.pop_size,
        )?;
        Ok(Self::assemble(
            config,
            Origin::Branch(parent_id),
            population,
            color_mode,
            seed,
            rng,
            Some(genome.content_hash()),
        ))
    }

    fn assemble(
        config: SessionConfig,
        origin: Origin,
        population: Vec<Genome>,
        color_mode: bool,
        seed: u64,
        rng: Rng,
        parent_genome: Option<String>,
    ) -> SessionState {
        let params = config.params_for(color_mode);
        SessionState {
            config,
            origin,
            generation: 0,
            population,
            color_mode,
            params,
            consecutive_toggles: 0,
            finished: false,
            seed,
            rng,
            transcript: SessionTranscript {
                seed,
                origin,
                initial_color_mode: color_mode,
                parent_genome,
                steps: Vec::new(),
                published_genome: None,
            },
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn origin(&self) -> Origin {
        self.origin
    }
    pub fn generation(&self) -> u32 {
        self.generation
    }
    pub fn population(&self) -> &[Genome] {
        &self.population
    }
    pub fn color_mode(&self) -> bool {
        self.color_mode
    }
    pub fn params(&self) -> &MutationParams {
        &self.params
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn is_finished(&self) -> bool {
        self.finished
    }
    pub fn consecutive_toggles(&self) -> u32 {
        self.consecutive_toggles
    }
    pub fn transcript(&self) -> &SessionTranscript {
        &self.transcript
    }

    /// True once the session has reached its publication generation.
    pub fn publish_due(&self) -> bool {
        self.generation >= self.config.generations_to_publish
    }

    pub fn can_publish(&self) -> bool {
        !self.finished && (!self.config.fixed_length || self.publish_due())
    }

    /// Whether a toggle would currently be accepted.
    pub fn can_toggle(&self) -> bool {
        !self.finished && self.consecutive_toggles < self.config.max_consecutive_toggles
    }

    pub fn population_hashes(&self) -> Vec<String> {
        self.population.iter().map(Genome::content_hash).collect()
    }

    /// Renders the current population under the current color mode.
    pub fn render_population(&self) -> Result<Vec<ImageBuffer>, SessionError> {
        let (w, h) = (self.config.render_width, self.config.render_height);
        self.population
            .par_iter()
            .map(|g| render(g, w, h, self.color_mode).map_err(SessionError::from))
            .collect()
    }

    pub fn render_member(&self, index: usize) -> Result<ImageBuffer, SessionError> {
        let g = self.member(index)?;
        Ok(render(g, self.config.render_width, self.config.render_height, self.color_mode)?)
    }

    fn member(&self, index: usize) -> Result<&Genome, SessionError> {
        self.population.get(index).ok_or(SessionError::IndexOutOfRange {
            index,
            size: self.population.len(),
        })
    }

    fn record(&mut self, action: &Action, rationale: &str) {
        let step = TranscriptStep {
            generation: self.generation,
            color_mode: self.color_mode,
            population: self.population_hashes(),
            action: action.clone(),
            rationale: rationale.to_string(),
            timestamp_ms: now_ms(),
        };
        self.transcript.steps.push(step);
    }

    /// Checks an action against the current state without applying it.
    pub fn check_action(&self, action: &Action) -> Result<(), SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        match action {
            Action::ToggleColor => {
                if !self.can_toggle() {
                    return Err(SessionError::ToggleLimit(self.config.max_consecutive_toggles));
                }
            }
            Action::Select {
                parents,
                strength,
                mode,
            } => {
                if self.config.fixed_length && self.publish_due() {
                    return Err(SessionError::MustPublish(self.generation));
                }
                if parents.is_empty() {
                    return Err(SessionError::EmptySelection);
                }
                for (k, &i) in parents.iter().enumerate() {
                    self.member(i)?;
                    if parents[..k].contains(&i) {
                        return Err(SessionError::DuplicateIndex(i));
                    }
                }
                if let Some(s) = strength {
                    check_strength(*s)?;
                }
                if let Some(m) = mode {
                    if !m.legal_with_color(self.color_mode) {
                        return Err(SessionError::ModeRequiresColor(*m));
                    }
                }
            }
            Action::Publish { index, .. } => {
                if self.config.fixed_length && !self.publish_due() {
                    return Err(SessionError::PrematurePublish {
                        generation: self.generation,
                        required: self.config.generations_to_publish,
                    });
                }
                self.member(*index)?;
            }
        }
        Ok(())
    }

    /// Applies one action. A toggle flips color mode without consuming a
    /// generation (turning color off forces structure-only mutation); a
    /// selection breeds the next population and advances the generation.
    pub fn apply_action(
        &mut self,
        action: &Action,
        rationale: &str,
        registry: &InnovationRegistry,
    ) -> Result<StepOutcome, SessionError> {
        self.check_action(action)?;
        match action {
            Action::ToggleColor => {
                self.record(action, rationale);
                self.color_mode = !self.color_mode;
                if !self.color_mode {
                    self.params.mode = MutationMode::StructureOnly;
                }
                self.consecutive_toggles += 1;
                Ok(StepOutcome::Continued)
            }
            Action::Select {
                parents,
                strength,
                mode,
            } => {
                self.record(action, rationale);
                if let Some(s) = strength {
                    self.params.strength = *s;
                }
                if let Some(m) = mode {
                    self.params.mode = *m;
                }
                let chosen: Vec<Genome> =
                    parents.iter().map(|&i| self.population[i].clone()).collect();
                self.population = neat::make_offspring(
                    &chosen,
                    &self.params,
                    registry,
                    &mut self.rng,
                    self.config.pop_size,
                )?;
                self.generation += 1;
                self.consecutive_toggles = 0;
                Ok(StepOutcome::Continued)
            }
            Action::Publish { index, title } => {
                let record = self.finalize_publish(*index, title, rationale)?;
                Ok(StepOutcome::Published(Box::new(record)))
            }
        }
    }

    /// Produces the publication record for population member `index`. In
    /// fixed-length mode this is only legal at the publication generation and
    /// ends the session.
    pub fn finalize_publish(
        &mut self,
        index: usize,
        title: &str,
        rationale: &str,
    ) -> Result<PublicationRecord, SessionError> {
        let action = Action::Publish {
            index,
            title: title.to_string(),
        };
        self.check_action(&action)?;
        let image = self.render_member(index)?;
        self.record(&action, rationale);
        let genome = self.population[index].clone();
        self.transcript.published_genome = Some(genome.content_hash());
        if self.config.fixed_length {
            self.finished = true;
        }
        Ok(PublicationRecord {
            genome,
            image,
            title: title.to_string(),
            color_mode: self.color_mode,
            origin: self.origin,
            rationale: rationale.to_string(),
            generation: self.generation,
        })
    }
}

/// Re-runs a transcript from its seed and checks every presented population
/// against the recorded hashes. Returns the published genome, if any.
pub fn replay(
    transcript: &SessionTranscript,
    parent: Option<&Genome>,
    config: SessionConfig,
    registry: &InnovationRegistry,
) -> Result<Option<Genome>, SessionError> {
    let mut state = match (transcript.origin, parent) {
        (Origin::Fresh, _) => SessionState::start_fresh(config, transcript.seed)?,
        (Origin::Branch(id), Some(g)) => SessionState::start_from_genome(
            id,
            g,
            transcript.initial_color_mode,
            config,
            registry,
            transcript.seed,
        )?,
        (Origin::Branch(_), None) => {
            return Err(SessionError::ReplayMismatch {
                step: 0,
                reason: "branched transcript needs its parent genome".into(),
            })
        }
    };
    let mut published = None;
    for (i, step) in transcript.steps.iter().enumerate() {
        if state.population_hashes() != step.population {
            return Err(SessionError::ReplayMismatch {
                step: i,
                reason: "population hash differs".into(),
            });
        }
        if let StepOutcome::Published(rec) = state.apply_action(&step.action, &step.rationale, registry)? {
            published = Some(rec.genome);
        }
    }
    if let (Some(expected), Some(g)) = (&transcript.published_genome, &published) {
        if *expected != g.content_hash() {
            return Err(SessionError::ReplayMismatch {
                step: transcript.steps.len(),
                reason: "published genome differs".into(),
            });
        }
    }
    Ok(published)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SessionConfig {
        SessionConfig {
            render_width: 16,
            render_height: 16,
            ..Default::default()
        }
    }

    #[test]
    fn fresh_defaults() {
        let s = SessionState::start_fresh(small(), 1).unwrap();
        assert_eq!(s.population().len(), 15);
        assert!(!s.color_mode());
        assert_eq!(s.generation(), 0);
        assert_eq!(s.params().strength, 0.5);
        assert_eq!(s.params().mode, MutationMode::StructureOnly);
        let hashes = s.population_hashes();
        let unique: std::collections::BTreeSet<_> = hashes.iter().collect();
        assert_eq!(unique.len(), 15);
        let again = SessionState::start_fresh(small(), 1).unwrap();
        assert_eq!(s.render_population().unwrap(), again.render_population().unwrap());
    }

    #[test]
    fn select_advances_and_keeps_parent() {
        let reg = InnovationRegistry::new();
        let mut s = SessionState::start_fresh(small(), 2).unwrap();
        let old3 = s.population()[3].clone();
        s.apply_action(&Action::select(3), "", &reg).unwrap();
        assert_eq!(s.generation(), 1);
        assert_eq!(s.population()[0], old3);
    }

    #[test]
    fn toggle_keeps_generation_and_brightness() {
        let reg = InnovationRegistry::new();
        let mut s = SessionState::start_fresh(small(), 3).unwrap();
        s.apply_action(&Action::select(0), "", &reg).unwrap();
        let before = s.render_population().unwrap();
        let genomes = s.population().to_vec();
        s.apply_action(&Action::ToggleColor, "", &reg).unwrap();
        assert_eq!(s.generation(), 1);
        assert!(s.color_mode());
        assert_eq!(s.population(), &genomes[..]);
        let after = s.render_population().unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.brightness(), b.brightness());
        }
        // turning color off forces structure-only
        s.apply_action(
            &Action::Select {
                parents: vec![1],
                strength: None,
                mode: Some(MutationMode::ColorOnly),
            },
            "",
            &reg,
        )
        .unwrap();
        assert_eq!(s.params().mode, MutationMode::ColorOnly);
        s.apply_action(&Action::ToggleColor, "", &reg).unwrap();
        assert_eq!(s.params().mode, MutationMode::StructureOnly);
    }

    #[test]
    fn invalid_actions_rejected() {
        let reg = InnovationRegistry::new();
        let mut s = SessionState::start_fresh(small(), 4).unwrap();
        let bad_strength = Action::Select {
            parents: vec![0],
            strength: Some(1.5),
            mode: None,
        };
        assert!(matches!(
            s.apply_action(&bad_strength, "", &reg),
            Err(SessionError::Params(NeatError::StrengthOutOfRange(_)))
        ));
        assert!(matches!(
            s.apply_action(&Action::select(15), "", &reg),
            Err(SessionError::IndexOutOfRange { .. })
        ));
        let dup = Action::Select {
            parents: vec![2, 2],
            strength: None,
            mode: None,
        };
        assert_eq!(s.apply_action(&dup, "", &reg).unwrap_err(), SessionError::DuplicateIndex(2));
        let color_mode = Action::Select {
            parents: vec![0],
            strength: None,
            mode: Some(MutationMode::ColorOnly),
        };
        assert!(matches!(
            s.apply_action(&color_mode, "", &reg),
            Err(SessionError::ModeRequiresColor(_))
        ));
        assert_eq!(s.generation(), 0);
        assert!(s.transcript().steps.is_empty());
    }

    #[test]
    fn toggles_are_capped() {
        let reg = InnovationRegistry::new();
        let mut s = SessionState::start_fresh(small(), 5).unwrap();
        for _ in 0..3 {
            s.apply_action(&Action::ToggleColor, "", &reg).unwrap();
        }
        assert_eq!(
            s.apply_action(&Action::ToggleColor, "", &reg).unwrap_err(),
            SessionError::ToggleLimit(3)
        );
        s.apply_action(&Action::select(0), "", &reg).unwrap();
        s.apply_action(&Action::ToggleColor, "", &reg).unwrap();
    }

    #[test]
    fn publication_gate_and_replay() {
        let reg = InnovationRegistry::new();
        let mut s = SessionState::start_fresh(small(), 6).unwrap();
        for g in 0..20 {
            if g == 19 {
                assert!(matches!(
                    s.finalize_publish(0, "early", ""),
                    Err(SessionError::PrematurePublish { generation: 19, .. })
                ));
            }
            if g % 7 == 3 {
                s.apply_action(&Action::ToggleColor, "toggle", &reg).unwrap();
            }
            let parents = if g % 2 == 0 { vec![g % 15] } else { vec![1, 4] };
            s.apply_action(
                &Action::Select {
                    parents,
                    strength: Some(0.3),
                    mode: None,
                },
                "why",
                &reg,
            )
            .unwrap();
        }
        assert_eq!(s.generation(), 20);
        assert!(matches!(
            s.apply_action(&Action::select(0), "", &reg),
            Err(SessionError::MustPublish(20))
        ));
        let expected = s.render_member(7).unwrap();
        let rec = s.finalize_publish(7, "Seven", "because").unwrap();
        assert_eq!(rec.image, expected);
        assert_eq!(rec.origin, Origin::Fresh);
        assert!(s.is_finished());
        assert_eq!(s.finalize_publish(7, "again", "").unwrap_err(), SessionError::Finished);

        let selects = s
            .transcript()
            .steps
            .iter()
            .filter(|st| matches!(st.action, Action::Select { .. }))
            .count();
        assert_eq!(selects, 20);
        let replayed = replay(s.transcript(), None, small(), &InnovationRegistry::new())
            .unwrap()
            .unwrap();
        assert_eq!(replayed, rec.genome);
    }

    #[test]
    fn free_length_sessions_publish_any_time() {
        let reg = InnovationRegistry::new();
        let cfg = SessionConfig {
            fixed_length: false,
            ..small()
        };
        let mut s = SessionState::start_fresh(cfg, 7).unwrap();
        s.finalize_publish(0, "one", "").unwrap();
        s.apply_action(&Action::select(2), "", &reg).unwrap();
        s.finalize_publish(1, "two", "").unwrap();
        assert!(!s.is_finished());
    }
}
