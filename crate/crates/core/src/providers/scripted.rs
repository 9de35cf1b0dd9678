use std::collections::HashMap;
use std::sync::Mutex;

use super::{estimate_tokens, prompt_hash, ChatMessage, ChatProvider, ProviderError};

type Responder = Box<dyn Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync>;

/// Test double: replies from a map keyed by [`prompt_hash`], falling back
/// to a closure. Every request is recorded for inspection.
pub struct ScriptedChat {
    canned: HashMap<String, String>,
    fallback: Responder,
    context_limit: Option<usize>,
    calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChat {
    pub fn new(fallback: impl Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        ScriptedChat {
            canned: HashMap::new(),
            fallback: Box::new(fallback),
            context_limit: None,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Always answers `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::new(move |_| Ok(reply.clone()))
    }

    pub fn with_reply(mut self, messages: &[ChatMessage], reply: impl Into<String>) -> Self {
        self.canned.insert(prompt_hash(messages), reply.into());
        self
    }

    /// Requests estimated above `tokens` fail with a context-limit error.
    pub fn with_context_limit(mut self, tokens: usize) -> Self {
        self.context_limit = Some(tokens);
        self
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("call log poisoned").len()
    }
}

impl ChatProvider for ScriptedChat {
    fn complete(&self, messages: &[ChatMessage], _model: &str) -> Result<String, ProviderError> {
        self.calls
            .lock()
            .expect("call log poisoned")
            .push(messages.to_vec());
        let estimated_tokens = estimate_tokens(messages);
        if self.context_limit.is_some_and(|limit| estimated_tokens > limit) {
            return Err(ProviderError::ContextLimit { estimated_tokens });
        }
        match self.canned.get(&prompt_hash(messages)) {
            Some(reply) => Ok(reply.clone()),
            None => (self.fallback)(messages),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canned_reply_wins_over_fallback() {
        let prompt = vec![ChatMessage::system("s"), ChatMessage::user("u", vec![])];
        let chat = ScriptedChat::constant("other").with_reply(&prompt, "SELECT 3");
        assert_eq!(chat.complete(&prompt, "m").unwrap(), "SELECT 3");
        assert_eq!(chat.complete(&prompt[..1], "m").unwrap(), "other");
        assert_eq!(chat.call_count(), 2);
    }

    #[test]
    fn context_limit_carries_estimate() {
        let chat = ScriptedChat::constant("x").with_context_limit(10);
        let big = vec![ChatMessage::user("y".repeat(400), vec![])];
        match chat.complete(&big, "m") {
            Err(ProviderError::ContextLimit { estimated_tokens }) => {
                assert_eq!(estimated_tokens, estimate_tokens(&big))
            }
            other => panic!("{other:?}"),
        }
    }
}
