//! Run configuration: a single TOML file declaring endpoints, role
//! bindings, datasets, and run settings, resolved into live handles.
//!
//! The file is the only run input that needs authoring, so parsing is
//! strict (unknown keys are errors) and every resolution failure is a
//! [`ConfigError`] naming the offending role or endpoint. Secrets never
//! enter the config: HTTP endpoints name an environment variable holding
//! the API key, so the parsed config can be re-serialized into run
//! provenance as-is.
//!
//! ```toml
//! [run]
//! strategy = "refine"
//! max_turns = 16
//! parallelism = 4
//! output_dir = "runs"
//!
//! [[datasets]]
//! label = "toy"
//! path = "cases/toy.json"
//!
//! [roles]
//! patient = "sim"
//! reporter = "sim"
//! collector = "doctor"
//! organizer = "doctor"
//! reasoner = "doctor"
//! verifier = "doctor"
//! judge = "grader"
//!
//! [[endpoints]]
//! name = "doctor"
//! kind = "openai"
//! base_url = "https://api.example.com/v1"
//! model_id = "some-model"
//! api_key_env = "EXAMPLE_API_KEY"
//! temperature = 0.0
//!
//! [[endpoints]]
//! name = "sim"
//! kind = "scripted"
//! script = [
//!   { contains = "fever", reply = "[REFERENCE] 1. ...\n[RESPONSE] ..." },
//!   { reply = "fallback reply" },
//! ]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Endpoint, HttpBackend, ScriptEntry, ScriptedBackend};
use crate::orchestrator::{EnvironmentEndpoints, DEFAULT_MAX_TURNS};
use crate::strategies::{RoleAssignment, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config `{path}`: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("role `{role}` references unknown endpoint `{name}`")]
    UnknownEndpoint { role: String, name: String },
    #[error("{needed_for} requires the `{role}` role to be bound in [roles]")]
    MissingRole { role: String, needed_for: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Top-level config file shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    #[serde(default)]
    pub datasets: Vec<DatasetSource>,
    #[serde(default)]
    pub roles: RolesSection,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategy: Strategy,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Free-form provenance label copied into every output file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_label: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_max_turns() -> u32 {
    DEFAULT_MAX_TURNS
}

fn default_parallelism() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// One case file and the dataset label applied to cases that omit one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub label: String,
    pub path: PathBuf,
}

/// An endpoint name, optionally with a role-specific temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleRef {
    Name(String),
    Detailed {
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
    },
}

impl RoleRef {
    pub fn endpoint_name(&self) -> &str {
        match self {
            RoleRef::Name(name) => name,
            RoleRef::Detailed { endpoint, .. } => endpoint,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collector: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organizer: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoner: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<RoleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constructor: Option<RoleRef>,
}

impl RolesSection {
    fn get(&self, role: &str) -> &Option<RoleRef> {
        match role {
            "patient" => &self.patient,
            "reporter" => &self.reporter,
            "collector" => &self.collector,
            "organizer" => &self.organizer,
            "reasoner" => &self.reasoner,
            "verifier" => &self.verifier,
            "judge" => &self.judge,
            "constructor" => &self.constructor,
            _ => &None,
        }
    }

    fn set(&mut self, role: &str, value: RoleRef) -> Result<(), ConfigError> {
        let slot = match role {
            "patient" => &mut self.patient,
            "reporter" => &mut self.reporter,
            "collector" => &mut self.collector,
            "organizer" => &mut self.organizer,
            "reasoner" => &mut self.reasoner,
            "verifier" => &mut self.verifier,
            "judge" => &mut self.judge,
            "constructor" => &mut self.constructor,
            other => return Err(invalid(format!("unknown role `{other}` in --roles override"))),
        };
        *slot = Some(value);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Openai,
    Scripted,
}

/// One scripted reply: answers when the latest visible message contains
/// `contains` (or unconditionally when omitted).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub reply: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub name: String,
    pub kind: EndpointKind,
    /// OpenAI-compatible API root, e.g. `https://api.example.com/v1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Name of the environment variable holding the API key; the key
    /// itself is read at call time and never stored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    /// Requests per second across all sessions of this endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rps_limit: Option<f64>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptEntryConfig>,
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    60
}

impl EndpointConfig {
    fn build(&self) -> Result<Endpoint, ConfigError> {
        match self.kind {
            EndpointKind::Openai => {
                let base_url = self
                    .base_url
                    .as_ref()
                    .ok_or_else(|| invalid(format!("endpoint `{}`: openai kind needs base_url", self.name)))?;
                let model_id = self
                    .model_id
                    .as_ref()
                    .ok_or_else(|| invalid(format!("endpoint `{}`: openai kind needs model_id", self.name)))?;
                if !self.script.is_empty() {
                    return Err(invalid(format!(
                        "endpoint `{}`: script entries only apply to kind = \"scripted\"",
                        self.name
                    )));
                }
                let backend = Arc::new(HttpBackend::new(
                    base_url.clone(),
                    self.api_key_env.clone(),
                    self.max_retries,
                    Duration::from_secs(self.timeout_secs),
                ));
                Ok(Endpoint::new(&self.name, model_id, backend, self.rps_limit, self.temperature))
            }
            EndpointKind::Scripted => {
                let entries: Vec<ScriptEntry> = self
                    .script
                    .iter()
                    .map(|e| match &e.contains {
                        Some(needle) => ScriptEntry::on(needle, &e.reply),
                        None => ScriptEntry::any(&e.reply),
                    })
                    .collect();
                let backend = Arc::new(ScriptedBackend::new(entries));
                let model_id = self.model_id.clone().unwrap_or_else(|| self.name.clone());
                Ok(Endpoint::new(&self.name, model_id, backend, self.rps_limit, self.temperature))
            }
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strategy: Option<Strategy>,
    pub max_turns: Option<u32>,
    pub parallelism: Option<usize>,
    /// (role, endpoint name) pairs from `--roles collector=NAME,...`.
    pub roles: Vec<(String, String)>,
    pub output_dir: Option<PathBuf>,
}

/// Live handles resolved from a [`FileConfig`].
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub strategy: Strategy,
    pub max_turns: u32,
    pub parallelism: usize,
    pub seed_label: Option<String>,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetSource>,
    pub roles: RoleAssignment,
    pub environment: Option<EnvironmentEndpoints>,
    pub judge: Option<Endpoint>,
    pub constructor: Option<Endpoint>,
    /// The full parsed config, re-serialized for provenance (contains env
    /// var names, never key material).
    pub provenance: serde_json::Value,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_string(), source })
    }

    pub fn apply_overrides(&mut self, overrides: &Overrides) -> Result<(), ConfigError> {
        if let Some(strategy) = overrides.strategy {
            self.run.strategy = strategy;
        }
        if let Some(max_turns) = overrides.max_turns {
            self.run.max_turns = max_turns;
        }
        if let Some(parallelism) = overrides.parallelism {
            self.run.parallelism = parallelism;
        }
        if let Some(dir) = &overrides.output_dir {
            self.run.output_dir = dir.clone();
        }
        for (role, endpoint) in &overrides.roles {
            self.roles.set(role, RoleRef::Name(endpoint.clone()))?;
        }
        Ok(())
    }

    /// Build every endpoint and bind roles. Structural checks only; use
    /// [`ResolvedConfig::validate_for_run`] (and friends) for per-command
    /// completeness.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        if self.run.max_turns < 1 {
            return Err(invalid("run.max_turns must be at least 1"));
        }
        if self.run.parallelism < 1 {
            return Err(invalid("run.parallelism must be at least 1"));
        }
        let mut labels = std::collections::HashSet::new();
        for ds in &self.datasets {
            if ds.label.trim().is_empty() {
                return Err(invalid("dataset label must not be empty"));
            }
            if !labels.insert(ds.label.as_str()) {
                return Err(invalid(format!("duplicate dataset label `{}`", ds.label)));
            }
        }

        let mut registry: BTreeMap<&str, Endpoint> = BTreeMap::new();
        for declared in &self.endpoints {
            if declared.name.trim().is_empty() {
                return Err(invalid("endpoint name must not be empty"));
            }
            if registry.contains_key(declared.name.as_str()) {
                return Err(invalid(format!("duplicate endpoint name `{}`", declared.name)));
            }
            registry.insert(&declared.name, declared.build()?);
        }

        let bind = |role: &str| -> Result<Option<Endpoint>, ConfigError> {
            let Some(role_ref) = self.roles.get(role) else { return Ok(None) };
            let endpoint = registry.get(role_ref.endpoint_name()).ok_or_else(|| {
                ConfigError::UnknownEndpoint {
                    role: role.to_string(),
                    name: role_ref.endpoint_name().to_string(),
                }
            })?;
            Ok(Some(match role_ref {
                RoleRef::Detailed { temperature: Some(t), .. } => endpoint.with_temperature(*t),
                _ => endpoint.clone(),
            }))
        };

        let environment = match (bind("patient")?, bind("reporter")?) {
            (Some(patient), Some(reporter)) => Some(EnvironmentEndpoints { patient, reporter }),
            (None, None) => None,
            (Some(_), None) => {
                return Err(invalid("role `patient` is bound but `reporter` is not"))
            }
            (None, Some(_)) => {
                return Err(invalid("role `reporter` is bound but `patient` is not"))
            }
        };

        Ok(ResolvedConfig {
            strategy: self.run.strategy,
            max_turns: self.run.max_turns,
            parallelism: self.run.parallelism,
            seed_label: self.run.seed_label.clone(),
            output_dir: self.run.output_dir.clone(),
            datasets: self.datasets.clone(),
            roles: RoleAssignment {
                collector: bind("collector")?,
                organizer: bind("organizer")?,
                reasoner: bind("reasoner")?,
                verifier: bind("verifier")?,
            },
            environment,
            judge: bind("judge")?,
            constructor: bind("constructor")?,
            provenance: serde_json::to_value(self).expect("config serializes"),
        })
    }
}

impl ResolvedConfig {
    /// Everything `run` and `sweep` need: datasets, a judge, the strategy's
    /// roles, and — for interactive strategies — both simulators.
    pub fn validate_for_run(&self) -> Result<(), ConfigError> {
        if self.datasets.is_empty() {
            return Err(invalid("at least one [[datasets]] entry is required"));
        }
        if self.judge.is_none() {
            return Err(ConfigError::MissingRole {
                role: "judge".into(),
                needed_for: "scoring".into(),
            });
        }
        self.roles
            .validate_for(self.strategy)
            .map_err(|e| ConfigError::MissingRole {
                role: e.role.name().to_string(),
                needed_for: format!("strategy `{}`", self.strategy),
            })?;
        if self.strategy.interactive() && self.environment.is_none() {
            return Err(ConfigError::MissingRole {
                role: "patient".into(),
                needed_for: format!("strategy `{}`", self.strategy),
            });
        }
        Ok(())
    }

    /// `construct` only needs the constructor model.
    pub fn validate_for_construct(&self) -> Result<(), ConfigError> {
        if self.constructor.is_none() {
            return Err(ConfigError::MissingRole {
                role: "constructor".into(),
                needed_for: "case construction".into(),
            });
        }
        Ok(())
    }

    /// `sanity-check` needs a reasoner to diagnose and a judge to grade.
    pub fn validate_for_sanity_check(&self) -> Result<(), ConfigError> {
        if self.roles.reasoner.is_none() {
            return Err(ConfigError::MissingRole {
                role: "reasoner".into(),
                needed_for: "the sanity check".into(),
            });
        }
        if self.judge.is_none() {
            return Err(ConfigError::MissingRole {
                role: "judge".into(),
                needed_for: "the sanity check".into(),
            });
        }
        Ok(())
    }
}
