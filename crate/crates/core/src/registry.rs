//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family (QA generator backends, grounding objectives,
//! attention alignment terms) is a trait object. Implementations register a
//! factory under a stable name and are selected at runtime from a
//! [`StrategySpec`] read out of the configuration file.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Strategy parameters as they appear in configuration: a `name` plus any
/// strategy-specific fields flattened alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl StrategySpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: serde_json::Map::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Deserializes the parameter map into a strategy-specific struct.
    pub fn parse_params<T: for<'de> Deserialize<'de>>(&self) -> Result<T, RegistryError> {
        serde_json::from_value(serde_json::Value::Object(self.params.clone())).map_err(|e| {
            RegistryError::InvalidParams {
                name: self.name.clone(),
                reason: e.to_string(),
            }
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("unknown strategy `{name}` (available: {available})")]
    Unknown { name: String, available: String },
    #[error("invalid parameters for strategy `{name}`: {reason}")]
    InvalidParams { name: String, reason: String },
}

type Factory<T> = Box<dyn Fn(&StrategySpec) -> Result<Box<T>, RegistryError> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("names", &self.names()).finish()
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&StrategySpec) -> Result<Box<T>, RegistryError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &StrategySpec) -> Result<Box<T>, RegistryError> {
        match self.factories.get(&spec.name) {
            Some(factory) => factory(spec),
            None => Err(RegistryError::Unknown {
                name: spec.name.clone(),
                available: self.names().join(", "),
            }),
        }
    }
}
