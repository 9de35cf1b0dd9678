use std::sync::Arc;
use std::time::Duration;

use super::{ExperimentConfig, OrchestratorError};
use crate::agents::{Agent, AgentKind, ChatAgent, ChatAgentConfig, EpsilonAgent, Prompts, RandomAgent, TraitPool};
use crate::providers::{prompt_hash, ChatMessage, ChatProvider, HttpChat, HttpConfig, ProviderError, Role, ScriptedChat};

const CORRECTION_PREFIX: &str = "That reply could not be used";

fn count_after(text: &str, marker: &str) -> Option<usize> {
    let rest = &text[text.find(marker)? + marker.len()..];
    rest.split_whitespace().next()?.parse().ok()
}

/// A deterministic stand-in for a chat model: answers every stage question
/// with a legal directive chosen from a hash of the conversation.
pub fn scripted_responder(messages: &[ChatMessage]) -> Result<String, ProviderError> {
    let question = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User && !m.text.starts_with(CORRECTION_PREFIX))
        .ok_or_else(|| ProviderError::Malformed("no question".into()))?;
    let h = u64::from_str_radix(&prompt_hash(messages)[..16], 16).expect("hex digest");
    let text = &question.text;
    let reply = if text.starts_with("The archive is empty") {
        "BRANCH FRESH\nNothing to branch from.".to_string()
    } else if let Some(n) = count_after(text, "sample shows ") {
        match h % (n as u64 + 1) {
            0 => "BRANCH FRESH\nStarting over.".to_string(),
            k => format!("BRANCH {}\nThis one looks promising.", k - 1),
        }
    } else if let Some(n) = count_after(text, "Publish one of these ") {
        let k = h % n.max(1) as u64;
        format!("PUBLISH {k} TITLE \"scripted {k}\"\nThe clearest shape.")
    } else if let Some(n) = count_after(text, "The population has ") {
        format!("SELECT {}\nKeeping the most structured one.", h % n.max(1) as u64)
    } else if let Some(n) = count_after(text, "Rate each of these ") {
        let scores: Vec<String> = (0..n).map(|i| format!("{i}={}", 1 + (h >> (i % 32)) % 5)).collect();
        format!("RATE {}", scores.join(","))
    } else {
        return Err(ProviderError::Malformed(format!("unrecognised question: {text}")));
    };
    Ok(reply)
}

/// Reads the trait pool named by the config, if personalities are on.
pub fn load_traits(config: &ExperimentConfig) -> Result<Option<TraitPool>, OrchestratorError> {
    match (&config.traits_file, config.na) {
        (Some(path), na) if na > 0 => Ok(Some(TraitPool::parse_lines(&std::fs::read_to_string(path)?))),
        _ => Ok(None),
    }
}

/// One agent per parallel slot. `provider` replaces the configured chat
/// endpoint (or the scripted responder) when given.
pub fn build_agents(
    config: &ExperimentConfig,
    provider: Option<Arc<dyn ChatProvider>>,
) -> Result<Vec<Box<dyn Agent>>, OrchestratorError> {
    config.validate()?;
    let ids = (0..config.parallel_agents).map(|i| format!("agent-{i}"));
    if config.agent == AgentKind::Random {
        return Ok(ids.map(|id| Box::new(RandomAgent::new(id)) as Box<dyn Agent>).collect());
    }
    let provider: Arc<dyn ChatProvider> = match (provider, config.agent) {
        (Some(p), _) => p,
        (None, AgentKind::Scripted) => Arc::new(ScriptedChat::new(scripted_responder)),
        (None, _) => {
            let mut http = HttpConfig::from_env(config.api_base.as_deref())?;
            http.timeout = Duration::from_secs(config.request_timeout_secs);
            http.max_in_flight = config.max_in_flight;
            Arc::new(HttpChat::new(http))
        }
    };
    let prompts = match &config.prompts_dir {
        Some(dir) => Prompts::load_dir(dir)?,
        None => Prompts::default(),
    };
    let model = if config.model.is_empty() { "scripted".to_string() } else { config.model.clone() };
    let mut chat_config = ChatAgentConfig::new(model, config.context_length);
    chat_config.prompts = prompts;
    Ok(ids
        .map(|id| {
            let chat = ChatAgent::new(id, provider.clone(), chat_config.clone());
            Box::new(EpsilonAgent::new(chat, config.epsilon)) as Box<dyn Agent>
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{parse_reply, Stage};

    #[test]
    fn scripted_answers_parse() {
        let ask = |t: &str| scripted_responder(&[ChatMessage::system("s"), ChatMessage::user(t, Vec::new())]).unwrap();
        let r = ask("Choose how to start this session. The archive sample shows 4 images, numbered 0 to 3:\n");
        parse_reply(&r, Stage::Branch, 4).unwrap();
        let r = ask("Generation 0 of 20. Color is off. The population has 15 images, numbered 0 to 14.");
        parse_reply(&r, Stage::Select, 15).unwrap();
        let r = ask("Generation 20 reached. Publish one of these 15 images to the archive");
        parse_reply(&r, Stage::Publish, 15).unwrap();
        let r = ask("Rate each of these 7 archive images");
        parse_reply(&r, Stage::Rate, 7).unwrap();
        assert!(scripted_responder(&[ChatMessage::user("hello", Vec::new())]).is_err());
    }

    #[test]
    fn builds_one_agent_per_slot() {
        let config = ExperimentConfig {
            parallel_agents: 3,
            agent: AgentKind::Scripted,
            ..ExperimentConfig::default()
        };
        let agents = build_agents(&config, None).unwrap();
        let ids: Vec<&str> = agents.iter().map(|a| a.id()).collect();
        assert_eq!(ids, ["agent-0", "agent-1", "agent-2"]);
    }
}
