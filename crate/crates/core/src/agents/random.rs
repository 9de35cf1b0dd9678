use std::collections::BTreeMap;

use rand::Rng as _;

use super::{Agent, BranchChoice, Decided, SampleView};
use crate::archive::{EntryId, MAX_RATING, MIN_RATING};
use crate::neat::{MutationMode, MAX_STRENGTH, MIN_STRENGTH};
use crate::rng::Rng;
use crate::session::{Action, SessionState};

pub const TOGGLE_PROBABILITY: f64 = 0.1;
pub const MODE_PROBABILITY: f64 = 0.2;
pub const STRENGTH_PROBABILITY: f64 = 0.2;

/// Uniform over "fresh" and every sampled entry.
pub fn random_branch(view: &SampleView, rng: &mut Rng) -> BranchChoice {
    match rng.random_range(0..=view.len()) {
        0 => BranchChoice::Fresh,
        k => BranchChoice::Branch(view.id_at(k - 1).expect("index within sample")),
    }
}

/// A toggle with probability 0.1, otherwise a single uniform parent.
/// Selections independently carry a uniform mutation mode (color mode
/// only) and a strength drawn from [0, 1] clamped to the legal range, each
/// with probability 0.2. A toggle drawn at the toggle limit is redrawn.
pub fn random_select(state: &SessionState, rng: &mut Rng) -> Action {
    loop {
        if rng.random::<f64>() < TOGGLE_PROBABILITY {
            if state.can_toggle() {
                return Action::ToggleColor;
            }
            continue;
        }
        let parent = rng.random_range(0..state.population().len());
        let mode = (state.color_mode() && rng.random::<f64>() < MODE_PROBABILITY)
            .then(|| MutationMode::ALL[rng.random_range(0..MutationMode::ALL.len())]);
        let strength = (rng.random::<f64>() < STRENGTH_PROBABILITY)
            .then(|| rng.random::<f64>().clamp(MIN_STRENGTH, MAX_STRENGTH));
        return Action::Select {
            parents: vec![parent],
            strength,
            mode,
        };
    }
}

pub fn random_publish(state: &SessionState, session_index: u64, rng: &mut Rng) -> (usize, String) {
    (
        rng.random_range(0..state.population().len()),
        format!("untitled-{session_index}"),
    )
}

/// A uniform score for every presented entry.
pub fn random_ratings(view: &SampleView, rng: &mut Rng) -> BTreeMap<EntryId, i64> {
    view.items
        .iter()
        .map(|(_, id)| (*id, rng.random_range(MIN_RATING as i64..=MAX_RATING as i64)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    id: String,
}

impl RandomAgent {
    pub fn new(id: impl Into<String>) -> Self {
        RandomAgent { id: id.into() }
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn branch(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BranchChoice> {
        Decided::silent(random_branch(view, rng))
    }

    fn select(&mut self, state: &SessionState, rng: &mut Rng) -> Decided<Action> {
        Decided::silent(random_select(state, rng))
    }

    fn publish(&mut self, state: &SessionState, session_index: u64, rng: &mut Rng) -> Decided<(usize, String)> {
        Decided::silent(random_publish(state, session_index, rng))
    }

    fn rate(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BTreeMap<EntryId, i64>> {
        Decided::silent(random_ratings(view, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveSample, Category};
    use crate::rng::seeded;
    use crate::session::SessionConfig;

    fn view(n: u64) -> SampleView {
        let mut v = SampleView::empty();
        v.sample = ArchiveSample {
            random: (0..n).map(EntryId).collect(),
            ..Default::default()
        };
        v.items = (0..n).map(|i| (Category::Random, EntryId(i))).collect();
        v.images = vec![std::sync::Arc::from(&b""[..]); n as usize];
        v.titles = vec![String::new(); n as usize];
        v
    }

    #[test]
    fn empty_sample_always_fresh() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(random_branch(&SampleView::empty(), &mut rng), BranchChoice::Fresh);
        }
    }

    #[test]
    fn fresh_frequency_is_one_in_101() {
        let v = view(100);
        let mut rng = seeded(2);
        let n = 101_000;
        let fresh = (0..n)
            .filter(|_| random_branch(&v, &mut rng) == BranchChoice::Fresh)
            .count();
        assert!((fresh as f64 / n as f64 - 1.0 / 101.0).abs() < 0.003);
    }

    #[test]
    fn grayscale_selections_never_carry_a_mode() {
        let state = SessionState::start_fresh(SessionConfig::default(), 3).unwrap();
        let mut rng = seeded(4);
        for _ in 0..5000 {
            if let Action::Select { mode, strength, parents } = random_select(&state, &mut rng) {
                assert!(mode.is_none());
                assert_eq!(parents.len(), 1);
                if let Some(s) = strength {
                    assert!((MIN_STRENGTH..=MAX_STRENGTH).contains(&s));
                }
            }
        }
    }

    #[test]
    fn toggle_limit_forces_selection() {
        let reg = crate::neat::InnovationRegistry::new();
        let mut state = SessionState::start_fresh(SessionConfig::default(), 5).unwrap();
        for _ in 0..3 {
            state.apply_action(&Action::ToggleColor, "", &reg).unwrap();
        }
        let mut rng = seeded(6);
        for _ in 0..2000 {
            assert!(matches!(random_select(&state, &mut rng), Action::Select { .. }));
        }
    }

    #[test]
    fn ratings_cover_the_sample() {
        let v = view(30);
        let r = random_ratings(&v, &mut seeded(7));
        assert_eq!(r.len(), 30);
        assert!(r.values().all(|s| (1..=5).contains(s)));
    }
}
