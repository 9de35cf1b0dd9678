//! Decision makers. Every agent answers four kinds of question: where to
//! start a session, what to do at each generation, what to publish, and how
//! to rate a sample of the archive.

mod chat;
mod epsilon;
mod prompts;
mod random;
mod traits;

pub use chat::{ChatAgent, ChatAgentConfig, Turn};
pub use epsilon::EpsilonAgent;
pub use prompts::Prompts;
pub use random::{
    random_branch, random_publish, random_ratings, random_select, RandomAgent, MODE_PROBABILITY,
    STRENGTH_PROBABILITY, TOGGLE_PROBABILITY,
};
pub use traits::{generate_traits, parse_numbered, ActiveTraits, TraitPool};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::archive::{Archive, ArchiveSample, Category, EntryId};
use crate::rng::Rng;
use crate::session::{Action, SessionState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Chat,
    /// A chat agent over an in-process scripted provider.
    Scripted,
    /// Sessions driven through the HTTP service.
    Human,
}

/// How many prior turns of the current session a chat agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextLength {
    Turns(usize),
    /// The whole session from the branching step on, plus the novelty addendum.
    Full,
}

/// Context lengths at or above this are treated as the full session.
pub const FULL_CONTEXT_TURNS: usize = 20;

impl ContextLength {
    pub fn new(turns: usize) -> Self {
        if turns >= FULL_CONTEXT_TURNS {
            ContextLength::Full
        } else {
            ContextLength::Turns(turns)
        }
    }

    pub fn is_full(self) -> bool {
        self == ContextLength::Full
    }
}

impl fmt::Display for ContextLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextLength::Turns(n) => write!(f, "{n}"),
            ContextLength::Full => write!(f, "full"),
        }
    }
}

impl FromStr for ContextLength {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "full" | "FULL" | "Full" => Ok(ContextLength::Full),
            t => t
                .parse::<usize>()
                .map(ContextLength::new)
                .map_err(|_| format!("context length must be a count or \"full\", got `{s}`")),
        }
    }
}

impl Serialize for ContextLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ContextLength::Turns(n) => s.serialize_u64(*n as u64),
            ContextLength::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for ContextLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(ContextLength::new(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub epsilon: f64,
    pub context_length: ContextLength,
    #[serde(default)]
    pub personality: Option<String>,
    #[serde(default)]
    pub model: String,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            kind: AgentKind::Random,
            epsilon: 0.0,
            context_length: ContextLength::Turns(0),
            personality: None,
            model: String::new(),
        }
    }
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.kind == AgentKind::Chat && self.model.is_empty() {
            return Err("chat agents need a model id".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum BranchChoice {
    Fresh,
    Branch(EntryId),
}

/// A decision plus the agent's stated reason for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decided<T> {
    pub value: T,
    pub rationale: String,
}

impl<T> Decided<T> {
    pub fn new(value: T, rationale: impl Into<String>) -> Self {
        Decided {
            value,
            rationale: rationale.into(),
        }
    }

    pub fn silent(value: T) -> Self {
        Decided::new(value, String::new())
    }
}

/// An archive sample with the images agents look at, in presentation order.
#[derive(Debug, Clone)]
pub struct SampleView {
    pub sample: ArchiveSample,
    pub items: Vec<(Category, EntryId)>,
    pub images: Vec<Arc<[u8]>>,
    pub titles: Vec<String>,
}

impl SampleView {
    pub fn new(sample: ArchiveSample, archive: &Archive) -> Self {
        let items = sample.items();
        let (images, titles) = items
            .iter()
            .map(|(_, id)| {
                let e = archive.get(*id).expect("sampled ids exist");
                (e.image_png.clone(), e.title.clone())
            })
            .unzip();
        SampleView {
            sample,
            items,
            images,
            titles,
        }
    }

    pub fn empty() -> Self {
        SampleView {
            sample: ArchiveSample::default(),
            items: Vec::new(),
            images: Vec::new(),
            titles: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn id_at(&self, index: usize) -> Option<EntryId> {
        self.items.get(index).map(|(_, id)| *id)
    }
}

/// A fallback to random behaviour, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub agent_id: String,
    pub stage: String,
    pub reason: String,
}

pub trait Agent: Send {
    fn id(&self) -> &str;

    /// Called before the branching decision of each session.
    fn begin_session(&mut self, _personality: Option<&str>) {}

    fn branch(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BranchChoice>;

    /// The next action at a generation before publication is due.
    fn select(&mut self, state: &SessionState, rng: &mut Rng) -> Decided<Action>;

    /// Index and title of the population member to publish.
    fn publish(&mut self, state: &SessionState, session_index: u64, rng: &mut Rng)
        -> Decided<(usize, String)>;

    /// Scores keyed by entry id, with no session context.
    fn rate(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BTreeMap<EntryId, i64>>;

    /// Fallbacks taken since the last call.
    fn take_degradations(&mut self) -> Vec<Degradation> {
        Vec::new()
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn begin_session(&mut self, personality: Option<&str>) {
        (**self).begin_session(personality)
    }
    fn branch(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BranchChoice> {
        (**self).branch(view, rng)
    }
    fn select(&mut self, state: &SessionState, rng: &mut Rng) -> Decided<Action> {
        (**self).select(state, rng)
    }
    fn publish(&mut self, state: &SessionState, session_index: u64, rng: &mut Rng) -> Decided<(usize, String)> {
        (**self).publish(state, session_index, rng)
    }
    fn rate(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BTreeMap<EntryId, i64>> {
        (**self).rate(view, rng)
    }
    fn take_degradations(&mut self) -> Vec<Degradation> {
        (**self).take_degradations()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_length_parsing() {
        assert_eq!("2".parse::<ContextLength>().unwrap(), ContextLength::Turns(2));
        assert_eq!("20".parse::<ContextLength>().unwrap(), ContextLength::Full);
        assert_eq!("full".parse::<ContextLength>().unwrap(), ContextLength::Full);
        assert!("-1".parse::<ContextLength>().is_err());
        let json = serde_json::to_string(&ContextLength::Turns(10)).unwrap();
        assert_eq!(serde_json::from_str::<ContextLength>(&json).unwrap(), ContextLength::Turns(10));
        assert_eq!(serde_json::from_str::<ContextLength>("\"full\"").unwrap(), ContextLength::Full);
    }

    #[test]
    fn spec_validation() {
        let mut s = AgentSpec::default();
        assert!(s.validate().is_ok());
        s.epsilon = 1.5;
        assert!(s.validate().is_err());
        s.epsilon = 0.5;
        s.kind = AgentKind::Chat;
        assert!(s.validate().is_err());
    }
}
