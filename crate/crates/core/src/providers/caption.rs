use std::sync::Arc;

use super::{ChatMessage, ChatProvider, ProviderError};

pub trait Captioner: Send + Sync {
    fn caption(&self, png: &[u8]) -> Result<String, ProviderError>;
}

/// Trims to the first sentence: everything up to and including the first
/// period, or the whole trimmed text when there is none.
pub fn one_sentence(text: &str) -> String {
    let text = text.trim();
    match text.find('.') {
        Some(i) => text[..=i].to_string(),
        None => text.to_string(),
    }
}

/// Returns the same caption for every image.
#[derive(Debug, Clone)]
pub struct FixedCaptioner(pub String);

impl Default for FixedCaptioner {
    fn default() -> Self {
        FixedCaptioner("gray image.".into())
    }
}

impl Captioner for FixedCaptioner {
    fn caption(&self, _png: &[u8]) -> Result<String, ProviderError> {
        Ok(self.0.clone())
    }
}

pub const CAPTION_PROMPT: &str = "Describe this image in one short sentence.";

/// Captions through a vision chat model.
pub struct ChatCaptioner {
    chat: Arc<dyn ChatProvider>,
    model: String,
}

impl ChatCaptioner {
    pub fn new(chat: Arc<dyn ChatProvider>, model: impl Into<String>) -> Self {
        ChatCaptioner {
            chat,
            model: model.into(),
        }
    }
}

impl Captioner for ChatCaptioner {
    fn caption(&self, png: &[u8]) -> Result<String, ProviderError> {
        let msgs = [ChatMessage::user(CAPTION_PROMPT, vec![Arc::from(png)])];
        Ok(one_sentence(&self.chat.complete(&msgs, &self.model)?))
    }
}
