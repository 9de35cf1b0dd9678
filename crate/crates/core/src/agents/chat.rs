use std::collections::BTreeMap;
use std::sync::Arc;

use super::random::{random_branch, random_publish, random_ratings, random_select};
use super::{Agent, BranchChoice, ContextLength, Decided, Degradation, Prompts, SampleView};
use crate::archive::EntryId;
use crate::neat::MutationMode;
use crate::providers::{
    parse_reply, AgentReply, ChatMessage, ChatProvider, Decision, ProviderError, RetryPolicy, Stage,
};
use crate::rng::Rng;
use crate::session::{Action, SessionState};

#[derive(Debug, Clone)]
pub struct ChatAgentConfig {
    pub model: String,
    pub context_length: ContextLength,
    pub prompts: Prompts,
    /// Re-asks after an unusable reply before falling back to a random decision.
    pub malformed_retries: usize,
    pub retry: RetryPolicy,
}

impl ChatAgentConfig {
    pub fn new(model: impl Into<String>, context_length: ContextLength) -> Self {
        ChatAgentConfig {
            model: model.into(),
            context_length,
            prompts: Prompts::default(),
            malformed_retries: 3,
            retry: RetryPolicy::default(),
        }
    }
}

/// One answered question of the current session.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub stage: Stage,
    pub prompt: ChatMessage,
    pub reply: String,
}

/// An agent that asks a chat model for every decision.
pub struct ChatAgent {
    id: String,
    provider: Arc<dyn ChatProvider>,
    config: ChatAgentConfig,
    system: String,
    history: Vec<Turn>,
    degradations: Vec<Degradation>,
}

fn mode_word(m: MutationMode) -> &'static str {
    match m {
        MutationMode::StructureOnly => "structure",
        MutationMode::ColorOnly => "color",
        MutationMode::Both => "both",
    }
}

fn population_pngs(state: &SessionState) -> Result<Vec<Arc<[u8]>>, String> {
    let images = state.render_population().map_err(|e| e.to_string())?;
    images
        .iter()
        .map(|img| img.to_png().map(Arc::from).map_err(|e| e.to_string()))
        .collect()
}

fn decision_to_action(decision: &Decision) -> Option<Action> {
    match decision {
        Decision::Select {
            indices,
            strength,
            mode,
        } => Some(Action::Select {
            parents: indices.clone(),
            strength: *strength,
            mode: *mode,
        }),
        Decision::Toggle => Some(Action::ToggleColor),
        Decision::Publish { index, title } => Some(Action::Publish {
            index: *index,
            title: title.clone(),
        }),
        _ => None,
    }
}

impl ChatAgent {
    pub fn new(id: impl Into<String>, provider: Arc<dyn ChatProvider>, config: ChatAgentConfig) -> Self {
        let system = config.prompts.system_for(None, config.context_length.is_full());
        ChatAgent {
            id: id.into(),
            provider,
            config,
            system,
            history: Vec::new(),
            degradations: Vec::new(),
        }
    }

    pub fn history(&self) -> &[Turn] {
        &self.history
    }

    pub fn system_prompt(&self) -> &str {
        &self.system
    }

    fn window(&self) -> usize {
        match self.config.context_length {
            ContextLength::Turns(n) => n.min(self.history.len()),
            ContextLength::Full => self.history.len(),
        }
    }

    /// System prompt, the last `keep` turns, then the current question.
    pub fn messages(&self, current: &ChatMessage, keep: usize) -> Vec<ChatMessage> {
        let mut msgs = vec![ChatMessage::system(self.system.clone())];
        for turn in &self.history[self.history.len() - keep..] {
            msgs.push(turn.prompt.clone());
            msgs.push(ChatMessage::assistant(turn.reply.clone()));
        }
        msgs.push(current.clone());
        msgs
    }

    fn degrade(&mut self, stage: Stage, reason: String) {
        log::warn!("agent {} falls back to a random {stage:?} decision: {reason}", self.id);
        self.degradations.push(Degradation {
            agent_id: self.id.clone(),
            stage: format!("{stage:?}").to_lowercase(),
            reason,
        });
    }

    /// Asks until a reply parses and passes `check`. `keep_history` is
    /// false for the context-free rating question.
    fn ask(
        &mut self,
        stage: Stage,
        prompt: ChatMessage,
        presented: usize,
        keep_history: bool,
        check: impl Fn(&AgentReply) -> Result<(), String>,
    ) -> Result<AgentReply, String> {
        let mut keep = if keep_history { self.window() } else { 0 };
        let mut corrections: Vec<ChatMessage> = Vec::new();
        let mut attempts = 0;
        let mut last_problem = String::new();
        while attempts <= self.config.malformed_retries {
            let mut msgs = if keep_history {
                self.messages(&prompt, keep)
            } else {
                vec![ChatMessage::system(self.system.clone()), prompt.clone()]
            };
            msgs.extend(corrections.iter().cloned());
            let reply = self
                .config
                .retry
                .run(|| self.provider.complete(&msgs, &self.config.model));
            let text = match reply {
                Ok(t) => t,
                Err(ProviderError::ContextLimit { .. }) if keep > 0 => {
                    keep -= 1;
                    continue;
                }
                Err(e) => return Err(e.to_string()),
            };
            attempts += 1;
            match parse_reply(&text, stage, presented)
                .map_err(|e| e.to_string())
                .and_then(|r| check(&r).map(|_| r))
            {
                Ok(r) => {
                    if keep_history {
                        self.history.push(Turn {
                            stage,
                            prompt,
                            reply: text,
                        });
                    }
                    return Ok(r);
                }
                Err(problem) => {
                    corrections.push(ChatMessage::assistant(text));
                    corrections.push(ChatMessage::user(
                        format!("That reply could not be used: {problem}. Answer again, directive line first."),
                        Vec::new(),
                    ));
                    last_problem = problem;
                }
            }
        }
        Err(format!("no usable reply after {attempts} attempts: {last_problem}"))
    }

    /// Remembers a fallback decision so later turns see what happened.
    fn record_fallback(&mut self, stage: Stage, prompt: ChatMessage, decision: Decision) {
        self.history.push(Turn {
            stage,
            prompt,
            reply: decision.to_string(),
        });
    }

    fn branch_prompt(view: &SampleView) -> ChatMessage {
        if view.is_empty() {
            return ChatMessage::user(
                "The archive is empty, so this session starts from a fresh random population. Reply BRANCH FRESH.",
                Vec::new(),
            );
        }
        let mut text = format!(
            "Choose how to start this session. The archive sample shows {} images, numbered 0 to {}:\n",
            view.len(),
            view.len() - 1
        );
        for (i, ((category, _), title)) in view.items.iter().zip(&view.titles).enumerate() {
            text.push_str(&format!("{i}: [{}] \"{title}\"\n", category.name()));
        }
        text.push_str("Reply BRANCH <n> to continue evolving image n, or BRANCH FRESH to start from random images.");
        ChatMessage::user(text, view.images.clone())
    }

    fn select_prompt(state: &SessionState, images: Vec<Arc<[u8]>>) -> ChatMessage {
        let params = state.params();
        let mut text = format!(
            "Generation {} of {}. Color is {}. Mutation strength {}, mutating {}.\n\
             The population has {} images, numbered 0 to {}.\n\
             Reply SELECT with one or more parents, optionally with STRENGTH",
            state.generation(),
            state.config().generations_to_publish,
            if state.color_mode() { "on" } else { "off" },
            params.strength,
            mode_word(params.mode),
            images.len(),
            images.len().saturating_sub(1),
        );
        if state.color_mode() {
            text.push_str(" and MODE");
        }
        if state.can_toggle() {
            text.push_str(", or TOGGLE_COLOR to switch color");
        }
        if state.can_publish() {
            text.push_str(", or PUBLISH <n> TITLE \"...\" to publish now");
        }
        text.push('.');
        ChatMessage::user(text, images)
    }

    fn publish_prompt(state: &SessionState, images: Vec<Arc<[u8]>>) -> ChatMessage {
        ChatMessage::user(
            format!(
                "Generation {} reached. Publish one of these {} images to the archive with PUBLISH <n> TITLE \"<title>\".",
                state.generation(),
                images.len()
            ),
            images,
        )
    }

    fn rate_prompt(view: &SampleView) -> ChatMessage {
        ChatMessage::user(
            format!(
                "Rate each of these {} archive images, numbered 0 to {}, from 1 (poor) to 5 (excellent). \
                 Reply RATE 0=<score>,1=<score>,...",
                view.len(),
                view.len().saturating_sub(1)
            ),
            view.images.clone(),
        )
    }
}

impl Agent for ChatAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn begin_session(&mut self, personality: Option<&str>) {
        self.history.clear();
        self.system = self
            .config
            .prompts
            .system_for(personality, self.config.context_length.is_full());
    }

    fn branch(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BranchChoice> {
        let prompt = Self::branch_prompt(view);
        match self.ask(Stage::Branch, prompt.clone(), view.len(), true, |_| Ok(())) {
            Ok(AgentReply {
                decision: Decision::Branch(choice),
                rationale,
            }) => {
                let value = match choice {
                    None => BranchChoice::Fresh,
                    Some(i) => BranchChoice::Branch(view.id_at(i).expect("parser checked range")),
                };
                Decided::new(value, rationale)
            }
            Ok(_) => unreachable!("branch stage only parses BRANCH"),
            Err(reason) => {
                self.degrade(Stage::Branch, reason);
                let choice = random_branch(view, rng);
                let index = match choice {
                    BranchChoice::Fresh => None,
                    BranchChoice::Branch(id) => view.items.iter().position(|(_, e)| *e == id),
                };
                self.record_fallback(Stage::Branch, prompt, Decision::Branch(index));
                Decided::silent(choice)
            }
        }
    }

    fn select(&mut self, state: &SessionState, rng: &mut Rng) -> Decided<Action> {
        let images = match population_pngs(state) {
            Ok(i) => i,
            Err(reason) => {
                self.degrade(Stage::Select, reason);
                return Decided::silent(random_select(state, rng));
            }
        };
        let presented = images.len();
        let prompt = Self::select_prompt(state, images);
        let result = self.ask(Stage::Select, prompt.clone(), presented, true, |r| {
            let action = decision_to_action(&r.decision).ok_or("not a generation action")?;
            state.check_action(&action).map_err(|e| e.to_string())
        });
        match result {
            Ok(r) => Decided::new(decision_to_action(&r.decision).expect("checked"), r.rationale),
            Err(reason) => {
                self.degrade(Stage::Select, reason);
                let action = random_select(state, rng);
                let decision = match &action {
                    Action::ToggleColor => Decision::Toggle,
                    Action::Select {
                        parents,
                        strength,
                        mode,
                    } => Decision::Select {
                        indices: parents.clone(),
                        strength: *strength,
                        mode: *mode,
                    },
                    Action::Publish { index, title } => Decision::Publish {
                        index: *index,
                        title: title.clone(),
                    },
                };
                self.record_fallback(Stage::Select, prompt, decision);
                Decided::silent(action)
            }
        }
    }

    fn publish(&mut self, state: &SessionState, session_index: u64, rng: &mut Rng) -> Decided<(usize, String)> {
        let images = match population_pngs(state) {
            Ok(i) => i,
            Err(reason) => {
                self.degrade(Stage::Publish, reason);
                return Decided::silent(random_publish(state, session_index, rng));
            }
        };
        let presented = images.len();
        let prompt = Self::publish_prompt(state, images);
        match self.ask(Stage::Publish, prompt.clone(), presented, true, |_| Ok(())) {
            Ok(AgentReply {
                decision: Decision::Publish { index, title },
                rationale,
            }) => Decided::new((index, title), rationale),
            Ok(_) => unreachable!("publish stage only parses PUBLISH"),
            Err(reason) => {
                self.degrade(Stage::Publish, reason);
                let (index, title) = random_publish(state, session_index, rng);
                self.record_fallback(
                    Stage::Publish,
                    prompt,
                    Decision::Publish {
                        index,
                        title: title.clone(),
                    },
                );
                Decided::silent((index, title))
            }
        }
    }

    fn rate(&mut self, view: &SampleView, rng: &mut Rng) -> Decided<BTreeMap<EntryId, i64>> {
        if view.is_empty() {
            return Decided::silent(BTreeMap::new());
        }
        match self.ask(Stage::Rate, Self::rate_prompt(view), view.len(), false, |_| Ok(())) {
            Ok(AgentReply {
                decision: Decision::Ratings(scores),
                rationale,
            }) => Decided::new(
                scores
                    .into_iter()
                    .map(|(i, s)| (view.id_at(i).expect("parser checked range"), s as i64))
                    .collect(),
                rationale,
            ),
            Ok(_) => unreachable!("rate stage only parses RATE"),
            Err(reason) => {
                self.degrade(Stage::Rate, reason);
                Decided::silent(random_ratings(view, rng))
            }
        }
    }

    fn take_degradations(&mut self) -> Vec<Degradation> {
        std::mem::take(&mut self.degradations)
    }
}
