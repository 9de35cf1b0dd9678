use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};

use super::Prompts;
use crate::providers::{ChatMessage, ChatProvider, RetryPolicy};
use crate::rng::Rng;

/// Pool of generated personality traits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraitPool {
    pub traits: Vec<String>,
    pub requested: usize,
    /// Provider failure that cut generation short, if any.
    pub failure: Option<String>,
}

impl TraitPool {
    pub fn from_traits(traits: Vec<String>) -> Self {
        TraitPool {
            requested: traits.len(),
            traits,
            failure: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.traits.len() >= self.requested
    }

    /// One trait per line; blank lines skipped.
    pub fn parse_lines(text: &str) -> Self {
        Self::from_traits(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn to_lines(&self) -> String {
        let mut s = self.traits.join("\n");
        s.push('\n');
        s
    }

    /// Draws the `na` traits active for an experiment.
    pub fn active_subset(&self, na: usize, rng: &mut Rng) -> Result<ActiveTraits, String> {
        if na > self.traits.len() {
            return Err(format!("NA = {na} exceeds the pool of {} traits", self.traits.len()));
        }
        let mut traits = self.traits.clone();
        traits.shuffle(rng);
        traits.truncate(na);
        Ok(ActiveTraits(traits))
    }
}

/// The traits active for an experiment; each session draws one uniformly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveTraits(pub Vec<String>);

impl ActiveTraits {
    pub fn assign(&self, rng: &mut Rng) -> Option<String> {
        self.0.choose(rng).cloned()
    }
}

/// Items of a numbered list (`1. foo`, `2) bar`); other lines are ignored.
pub fn parse_numbered(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')', ':'])?;
            let item = rest.trim();
            (!item.is_empty()).then(|| item.to_string())
        })
        .collect()
}

/// Requests traits in batches until `total` unique ones exist, showing the
/// model its last `history` batches each time. Exact duplicates are dropped.
/// A provider failure ends generation early with the failure recorded.
pub fn generate_traits(
    provider: &dyn ChatProvider,
    model: &str,
    prompts: &Prompts,
    total: usize,
    batch: usize,
    history: usize,
    retry: RetryPolicy,
) -> TraitPool {
    let mut pool = TraitPool {
        requested: total,
        ..TraitPool::default()
    };
    let mut seen = HashSet::new();
    let mut batches: Vec<Vec<String>> = Vec::new();
    let batch = batch.max(1);
    // unproductive batches (all duplicates) are allowed but bounded
    let max_calls = total.div_ceil(batch) * 3;
    let mut calls = 0;
    while pool.traits.len() < total && calls < max_calls {
        calls += 1;
        let want = batch.min(total - pool.traits.len());
        let mut text = String::new();
        let shown = &batches[batches.len().saturating_sub(history)..];
        if !shown.is_empty() {
            text.push_str("Previously written traits:\n");
            for t in shown.iter().flatten() {
                text.push_str("- ");
                text.push_str(t);
                text.push('\n');
            }
            text.push('\n');
        }
        text.push_str(&format!("Write {want} new traits now."));
        let msgs = [
            ChatMessage::system(prompts.traits_prompt(want)),
            ChatMessage::user(text, Vec::new()),
        ];
        let reply = match retry.run(|| provider.complete(&msgs, model)) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("trait generation stopped after {} traits: {e}", pool.traits.len());
                pool.failure = Some(e.to_string());
                break;
            }
        };
        let mut items = parse_numbered(&reply);
        items.truncate(want);
        for t in &items {
            if seen.insert(t.clone()) {
                pool.traits.push(t.clone());
            }
        }
        batches.push(items);
    }
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ProviderError, ScriptedChat};
    use crate::rng::seeded;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn numbered_chat() -> ScriptedChat {
        let counter = Arc::new(AtomicUsize::new(0));
        ScriptedChat::new(move |_msgs| {
            let c = counter.fetch_add(1, Ordering::SeqCst);
            Ok((1..=50)
                .map(|i| format!("{i}. trait {c}-{i}"))
                .collect::<Vec<_>>()
                .join("\n"))
        })
    }

    #[test]
    fn two_batches_for_a_hundred() {
        let chat = numbered_chat();
        let pool = generate_traits(&chat, "m", &Prompts::default(), 100, 50, 10, RetryPolicy::none());
        assert_eq!(chat.call_count(), 2);
        assert_eq!(pool.traits.len(), 100);
        assert!(pool.is_complete());
    }

    #[test]
    fn history_window_is_last_ten_batches() {
        let chat = numbered_chat();
        generate_traits(&chat, "m", &Prompts::default(), 1050, 50, 10, RetryPolicy::none());
        let calls = chat.calls();
        assert_eq!(calls.len(), 21);
        let context = &calls[20][1].text;
        for b in 10..20 {
            assert!(context.contains(&format!("trait {b}-1\n")), "batch {b} missing");
        }
        assert!(!context.contains("trait 9-1\n"));
        assert!(!context.contains("trait 20-"));
    }

    #[test]
    fn numbered_parser() {
        let text = "Here you go:\n1. Loves spirals.\n2) Hates red\n\n3: Branches often\nnot numbered\n4.";
        assert_eq!(parse_numbered(text), vec!["Loves spirals.", "Hates red", "Branches often"]);
    }

    #[test]
    fn failure_returns_partial_pool() {
        let calls = AtomicUsize::new(0);
        let chat = ScriptedChat::new(move |_| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Ok("1. a\n2. b".into())
            } else {
                Err(ProviderError::Network("down".into()))
            }
        });
        let pool = generate_traits(&chat, "m", &Prompts::default(), 4, 2, 10, RetryPolicy::none());
        assert_eq!(pool.traits, vec!["a", "b"]);
        assert!(!pool.is_complete());
    }

    #[test]
    fn personality_assignment() {
        let pool = TraitPool::from_traits((0..20).map(|i| format!("t{i}")).collect());
        let mut rng = seeded(3);
        assert_eq!(pool.active_subset(0, &mut rng).unwrap().assign(&mut rng), None);
        let one = pool.active_subset(1, &mut rng).unwrap();
        let first = one.assign(&mut rng);
        assert!((0..50).all(|_| one.assign(&mut rng) == first));
        assert!(pool.active_subset(21, &mut rng).is_err());
    }
}
