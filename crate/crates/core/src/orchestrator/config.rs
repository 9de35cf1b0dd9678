use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::agents::{AgentKind, AgentSpec, ContextLength};
use crate::neat::MutationParams;
use crate::session::SessionConfig;

/// One experiment, read from a flat TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Publications to collect; each session publishes exactly once.
    pub sessions: u64,
    pub parallel_agents: usize,
    pub seed: u64,
    pub agent: AgentKind,
    pub epsilon: f64,
    pub context_length: ContextLength,
    /// Size of the active personality subset; 0 disables personalities.
    pub na: usize,
    /// Trait pool file, one trait per line.
    pub traits_file: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub model: String,
    pub pop_size: usize,
    pub generations: u32,
    pub render_size: u32,
    pub fixed_session_length: bool,
    pub max_consecutive_toggles: u32,
    /// Chat endpoint base URL; the key comes from the environment.
    pub api_base: Option<String>,
    pub embed_api_base: Option<String>,
    pub embed_model: Option<String>,
    pub request_timeout_secs: u64,
    /// Concurrent provider requests across all agents.
    pub max_in_flight: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sessions: 2000,
            parallel_agents: 10,
            seed: 0,
            agent: AgentKind::Random,
            epsilon: 0.0,
            context_length: ContextLength::Turns(0),
            na: 0,
            traits_file: None,
            prompts_dir: None,
            model: String::new(),
            pop_size: 15,
            generations: 20,
            render_size: 128,
            fixed_session_length: true,
            max_consecutive_toggles: 3,
            api_base: None,
            embed_api_base: None,
            embed_model: None,
            request_timeout_secs: 120,
            max_in_flight: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, OrchestratorError> {
        toml::to_string(self).map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: String| Err(OrchestratorError::Config(m));
        if self.parallel_agents == 0 {
            return bad("parallel_agents must be at least 1".into());
        }
        if self.na > 0 && self.traits_file.is_none() {
            return bad(format!("na = {} needs a traits_file", self.na));
        }
        if self.agent == AgentKind::Human {
            return bad("human sessions run through the HTTP service, not the runner".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        self.agent_spec().validate().map_err(OrchestratorError::Config)?;
        self.session_config()
            .validate()
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn agent_spec(&self) -> AgentSpec {
        AgentSpec {
            kind: self.agent,
            epsilon: self.epsilon,
            context_length: self.context_length,
            personality: None,
            model: self.model.clone(),
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            generations_to_publish: self.generations,
            pop_size: self.pop_size,
            render_width: self.render_size,
            render_height: self.render_size,
            fixed_length: self.fixed_session_length,
            max_consecutive_toggles: self.max_consecutive_toggles,
            mutation: MutationParams::default(),
            ..SessionConfig::default()
        }
    }

    /// Fields that decide the outcome of a run. Resuming with a different
    /// fingerprint is refused.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.sessions = 0;
        c.request_timeout_secs = 0;
        c.max_in_flight = 0;
        c.api_base = None;
        c.embed_api_base = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.sessions, 2000);
        assert_eq!(c.parallel_agents, 10);
        assert_eq!(c.session_config().pop_size, 15);
        let c = ExperimentConfig::from_toml(
            "sessions = 40\nagent = \"chat\"\nmodel = \"m\"\ncontext_length = \"full\"\nepsilon = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.sessions, 40);
        assert_eq!(c.context_length, ContextLength::Full);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("sessoins = 3").is_err());
        assert!(ExperimentConfig::from_toml("epsilon = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("agent = \"chat\"").is_err());
        assert!(ExperimentConfig::from_toml("na = 3").is_err());
        assert!(ExperimentConfig::from_toml("pop_size = 0").is_err());
    }

    #[test]
    fn fingerprint_ignores_length() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            sessions: 5,
            ..a.clone()
        };
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
