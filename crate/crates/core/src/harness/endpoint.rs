//! Tutor backed by a chat-completion HTTP endpoint.
//!
//! Each turn POSTs `{"model": ..., "messages": [{"role", "content"}, ...]}`
//! to `<base_url>/chat/completions` with a bearer token read from the
//! configured environment variable, and reads the reply text at
//! `response_path` (dot-separated keys and array indices).
//!
//! ```toml
//! base_url = "http://127.0.0.1:8080/v1"
//! model = "tutor-model"
//! api_key_env = "FASTRIC_API_KEY"
//! timeout_secs = 30
//! max_retries = 2
//! backoff_ms = 250
//! response_path = "choices.0.message.content"
//! prompt_placement = "system"   # or "first_user"
//! temperature = 0.2             # forwarded only when set
//! ```

use std::path::Path;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::oracle::{last_user_input, phase, transition, Phase};
use super::{Affinity, AgentError, TutorAgent, TutorContext, TutorReply};
use crate::conformance::Actor;
use crate::fsm::StateId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPlacement {
    #[default]
    System,
    FirstUser,
}

fn default_key_env() -> String {
    "FASTRIC_API_KEY".into()
}
fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}
fn default_path() -> String {
    "choices.0.message.content".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_path")]
    pub response_path: String,
    #[serde(default)]
    pub prompt_placement: PromptPlacement,
    #[serde(default)]
    pub temperature: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid endpoint config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid endpoint config: {0}")]
    Invalid(String),
}

impl ChatEndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ChatEndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            response_path: default_path(),
            prompt_placement: PromptPlacement::System,
            temperature: None,
        }
    }

    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: ChatEndpointConfig = toml::from_str(source)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&source)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_secs == 0 {
            return Err(ConfigError::Invalid("timeout_secs must be positive".into()));
        }
        if self.response_path.is_empty() {
            return Err(ConfigError::Invalid("response_path is empty".into()));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Follows `a.0.b` through objects and arrays.
fn lookup<'v>(doc: &'v Value, path: &str) -> Option<&'v Value> {
    path.split('.').try_fold(doc, |v, key| match key.parse::<usize>() {
        Ok(i) if v.is_array() => v.get(i),
        _ => v.get(key),
    })
}

pub struct EndpointAgent {
    name: String,
    config: ChatEndpointConfig,
    client: Client,
}

impl EndpointAgent {
    pub fn new(config: ChatEndpointConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(EndpointAgent { name: format!("endpoint:{}", config.model), config, client })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &ChatEndpointConfig {
        &self.config
    }

    /// The message list sent for the turn after `ctx.history`.
    pub fn messages(&self, ctx: &TutorContext<'_>) -> Vec<Value> {
        let mut messages = Vec::with_capacity(ctx.history.len() + 1);
        let opening_role = match self.config.prompt_placement {
            PromptPlacement::System => "system",
            PromptPlacement::FirstUser => "user",
        };
        messages.push(json!({"role": opening_role, "content": ctx.prompt}));
        for t in ctx.history {
            let role = match t.actor {
                Actor::Executor => "assistant",
                Actor::User => "user",
            };
            messages.push(json!({"role": role, "content": t.text}));
        }
        messages
    }

    fn request_body(&self, ctx: &TutorContext<'_>) -> Value {
        let mut body = json!({"model": self.config.model, "messages": self.messages(ctx)});
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    /// Sends one completion request, retrying transient failures.
    pub fn complete(&self, ctx: &TutorContext<'_>) -> Result<String, AgentError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| AgentError::MissingCredential(self.config.api_key_env.clone()))?;
        let body = self.request_body(ctx);
        let mut last = AgentError::TransportFailure("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let response = self.client.post(self.config.url()).bearer_auth(&key).json(&body).send();
            let response = match response {
                Ok(r) => r,
                Err(e) if e.is_timeout() => {
                    last = AgentError::Timeout;
                    continue;
                }
                Err(e) => {
                    last = AgentError::TransportFailure(e.to_string());
                    continue;
                }
            };
            let status = response.status();
            if !status.is_success() {
                last = AgentError::TransportFailure(format!("status {}", status.as_u16()));
                if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                    continue;
                }
                return Err(last);
            }
            let doc: Value = response.json().map_err(|e| AgentError::MalformedResponse(e.to_string()))?;
            return lookup(&doc, &self.config.response_path)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| AgentError::MalformedResponse(format!("no text at {}", self.config.response_path)));
        }
        Err(last)
    }
}

/// State the protocol implies after the last user input.
fn implied_state(ctx: &TutorContext<'_>) -> StateId {
    match phase(ctx.protocol, ctx.history, ctx.state) {
        Phase::Opening => ctx.protocol.initial,
        Phase::Choice | Phase::Navigation => transition(ctx, last_user_input(ctx.history)).unwrap_or(ctx.state),
        Phase::Answer(_) => ctx.state,
    }
}

impl TutorAgent for EndpointAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn affinity(&self) -> Affinity {
        Affinity::SingleSession
    }

    fn respond(&self, ctx: &TutorContext<'_>) -> Result<TutorReply, AgentError> {
        let text = self.complete(ctx)?;
        Ok(TutorReply { text, next_state: implied_state(ctx) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c = ChatEndpointConfig::parse("base_url = \"http://x/v1/\"\nmodel = \"m\"\n").unwrap();
        assert_eq!(c.api_key_env, "FASTRIC_API_KEY");
        assert_eq!(c.url(), "http://x/v1/chat/completions");
        assert_eq!(c.prompt_placement, PromptPlacement::System);
        assert!(ChatEndpointConfig::parse("base_url = \"x\"\nmodel = \"m\"\ntimeout_secs = 0\n").is_err());
        assert!(ChatEndpointConfig::parse("base_url = \"x\"\nmodel = \"m\"\nbogus = 1\n").is_err());
        let c = ChatEndpointConfig::parse(
            "base_url = \"x\"\nmodel = \"m\"\nprompt_placement = \"first_user\"\ntemperature = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.prompt_placement, PromptPlacement::FirstUser);
        assert_eq!(c.temperature, Some(0.5));
    }

    #[test]
    fn response_paths() {
        let doc = json!({"choices": [{"message": {"content": "hi"}}], "out": {"text": "yo"}});
        assert_eq!(lookup(&doc, "choices.0.message.content"), Some(&json!("hi")));
        assert_eq!(lookup(&doc, "out.text"), Some(&json!("yo")));
        assert_eq!(lookup(&doc, "choices.1.message"), None);
    }
}
