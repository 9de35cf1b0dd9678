use std::collections::BTreeMap;

use rand::Rng as _;

use super::random::random_select;
use super::{Agent, BranchChoice, Decided, Degradation, SampleView};
use crate::archive::EntryId;
use crate::rng::Rng;
use crate::session::{Action, SessionState};

/// Replaces each selection step of the inner agent with a random action
/// with probability `epsilon`. Branching, publication and rating always go
/// to the inner agent.
pub struct EpsilonAgent<A> {
    inner: A,
    epsilon: f64,
    random_steps: u64,
    inner_steps: u64,
}

impl<A: Agent> EpsilonAgent<A> {
    pub fn new(inner: A, epsilon: f64) -> Self {
        EpsilonAgent {
            inner,
            epsilon: epsilon.clamp(0.0, 1.0),
            random_steps: 0,
            inner_steps: 0,
        }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    /// `(random, delegated)` selection counts so far.
    pub fn step_counts(&self) -> (u64, u64) {
        (self.random_steps, self.inner_steps)
    }
}

impl<A: Agent> Agent for EpsilonAgent<A> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn begin_session(&mut self, personality: Option<&str>) {
        self.inner.begin_session(personality)
    }

    fn branch(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BranchChoice> {
        self.inner.branch(view, rng)
    }

    fn select(&mut self, state: &SessionState, rng: &mut Rng) -> Decided<Action> {
        if rng.random::<f64>() < self.epsilon {
            self.random_steps += 1;
            Decided::new(random_select(state, rng), "random exploration step")
        } else {
            self.inner_steps += 1;
            self.inner.select(state, rng)
        }
    }

    fn publish(&mut self, state: &SessionState, session_index: u64, rng: &mut Rng) -> Decided<(usize, String)> {
        self.inner.publish(state, session_index, rng)
    }

    fn rate(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BTreeMap<EntryId, i64>> {
        self.inner.rate(view, rng)
    }

    fn take_degradations(&mut self) -> Vec<Degradation> {
        self.inner.take_degradations()
    }
}
