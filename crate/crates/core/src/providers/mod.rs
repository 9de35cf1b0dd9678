//! Interfaces to chat, embedding and captioning services, deterministic
//! in-process substitutes, and the grammar agents reply in.

mod caption;
mod embed;
mod http;
pub mod reply;
mod scripted;

pub use caption::{one_sentence, Captioner, ChatCaptioner, FixedCaptioner};
pub use embed::{cosine_distance, cosine_similarity, Embedder, Embedding, HttpEmbedder, TestEmbedder};
pub use http::{HttpChat, HttpConfig, API_KEY_ENV, ENDPOINT_ENV, MODEL_ENV};
pub use reply::{parse_reply, AgentReply, Decision, ReplyError, Stage};
pub use scripted::ScriptedChat;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One message of a chat request. Images (PNG bytes) only ride on user messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub images: Vec<Arc<[u8]>>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>, images: Vec<Arc<[u8]>>) -> Self {
        ChatMessage {
            role: Role::User,
            text: text.into(),
            images,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            text: text.into(),
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitReason {
    Timeout,
    Throttled,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited ({reason:?}); retry after {retry_after:?}")]
    RateLimited {
        retry_after: Option<Duration>,
        reason: LimitReason,
    },
    #[error("provider refused the content: {0}")]
    ContentRefusal(String),
    #[error("context too long: about {estimated_tokens} tokens")]
    ContextLimit { estimated_tokens: usize },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, ProviderError::NotConfigured(_) | ProviderError::ContextLimit { .. })
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            ProviderError::RateLimited { retry_after, .. } => *retry_after,
            _ => None,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], model: &str) -> Result<String, ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for Arc<T> {
    fn complete(&self, messages: &[ChatMessage], model: &str) -> Result<String, ProviderError> {
        (**self).complete(messages, model)
    }
}

/// Rough token count: four characters per token plus a flat cost per image.
pub fn estimate_tokens(messages: &[ChatMessage]) -> usize {
    const IMAGE_TOKENS: usize = 256;
    messages
        .iter()
        .map(|m| m.text.chars().count().div_ceil(4) + 4 + m.images.len() * IMAGE_TOKENS)
        .sum()
}

/// Stable digest of a request, used to key canned replies.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0]);
        h.update(m.text.as_bytes());
        h.update([0]);
        for img in m.images.iter() {
            h.update(Sha256::digest(img));
        }
        h.update([1]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            attempts: 1,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Calls `f` until it succeeds, a non-retryable error occurs, or attempts
    /// run out. Waits for the provider's hint when given, else backs off exponentially.
    pub fn run<T>(
        &self,
        mut f: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match f() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() || attempt >= self.attempts.max(1) => return Err(e),
                Err(e) => {
                    let backoff = self.base_delay.saturating_mul(1 << (attempt - 1).min(16));
                    let wait = e.retry_after().unwrap_or(backoff).min(self.max_delay);
                    log::warn!("provider call failed ({e}); retry {attempt} in {wait:?}");
                    std::thread::sleep(wait);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn prompt_hash_depends_on_images() {
        let a = vec![ChatMessage::user("hi", vec![Arc::from(&b"x"[..])])];
        let b = vec![ChatMessage::user("hi", vec![Arc::from(&b"y"[..])])];
        assert_ne!(prompt_hash(&a), prompt_hash(&b));
        assert_eq!(prompt_hash(&a), prompt_hash(&a.clone()));
    }

    #[test]
    fn retry_stops_on_non_retryable() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            attempts: 5,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        };
        let r: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(ProviderError::NotConfigured("x".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.get(), 1);
        calls.set(0);
        let r = policy.run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(ProviderError::Network("down".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r, Ok(7));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn token_estimate_counts_images() {
        let text = vec![ChatMessage::user("abcdefgh", vec![])];
        let img = vec![ChatMessage::user("abcdefgh", vec![Arc::from(&b"p"[..])])];
        assert!(estimate_tokens(&img) > estimate_tokens(&text));
    }
}
