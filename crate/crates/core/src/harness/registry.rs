//! Name-based agent construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::{ChatEndpointConfig, EndpointAgent, FaultAgent, FaultProfile, OracleAgent, TutorAgent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("agent {agent:?}: {message}")]
    InvalidArgument { agent: String, message: String },
}

/// Builds an agent from the text after `name:` (absent when there is none).
pub type AgentFactory = Box<dyn Fn(Option<&str>) -> Result<Arc<dyn TutorAgent>, String> + Send + Sync>;

pub struct AgentRegistry {
    factories: BTreeMap<String, AgentFactory>,
}

impl AgentRegistry {
    pub fn empty() -> Self {
        AgentRegistry { factories: BTreeMap::new() }
    }

    /// Registry holding `oracle`, `fault` and `endpoint`.
    pub fn with_builtins() -> Self {
        let mut r = AgentRegistry::empty();
        r.register("oracle", |arg| match arg {
            None => Ok(Arc::new(OracleAgent) as Arc<dyn TutorAgent>),
            Some(_) => Err("takes no argument".into()),
        });
        r.register("fault", |arg| {
            let kind = arg.ok_or("expected fault:<kind>")?.parse()?;
            Ok(Arc::new(FaultAgent::new(FaultProfile { kind, seed: 0 })) as Arc<dyn TutorAgent>)
        });
        r.register("endpoint", |arg| {
            let path = arg.ok_or("expected endpoint:<config.toml>")?;
            let config = ChatEndpointConfig::load(path.as_ref()).map_err(|e| e.to_string())?;
            let agent = EndpointAgent::new(config).map_err(|e| e.to_string())?;
            Ok(Arc::new(agent.named(format!("endpoint:{path}"))) as Arc<dyn TutorAgent>)
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&str>) -> Result<Arc<dyn TutorAgent>, String> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Creates the agent named by `spec`, `name` or `name:argument`.
    pub fn create(&self, spec: &str) -> Result<Arc<dyn TutorAgent>, RegistryError> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self.factories.get(name).ok_or_else(|| RegistryError::UnknownAgent(spec.to_string()))?;
        factory(arg).map_err(|message| RegistryError::InvalidArgument { agent: spec.to_string(), message })
    }
}

impl Default for AgentRegistry {
    fn default() -> Self {
        AgentRegistry::with_builtins()
    }
}
