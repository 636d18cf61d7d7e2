//! Experiment files: backends, the base episode, batch conditions and reflect settings.
//!
//! TOML or JSON, picked by file extension. Secrets never live here; HTTP
//! backends name the environment variable that holds their token.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{TemplateError, TemplateSet};
use crate::gateway::{BackendRegistry, BackendSpec, GatewayError};
use crate::orchestrator::{BatchItem, EpisodeConfig};
use crate::reflect::{LoopSettings, Mode, DEFAULT_EVENT_BUDGET};
use crate::world::{ScenarioCatalog, ScenarioError};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("`{key}`: unknown scenario `{name}`")]
    UnknownScenario { key: String, name: String },
    #[error("`{key}`: unknown backend `{name}`")]
    UnknownBackend { key: String, name: String },
    #[error("`{key}`: secrets must come from environment variables, not the config file")]
    SecretInConfig { key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ConfigFileError {
    /// The config key at fault, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigFileError::UnknownScenario { key, .. }
            | ConfigFileError::UnknownBackend { key, .. }
            | ConfigFileError::SecretInConfig { key }
            | ConfigFileError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// One arm of a batch: overrides applied to the base episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organization_prompt: Option<String>,
    /// Backend for every non-human agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub election: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_correction: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl Condition {
    pub fn apply(&self, base: &EpisodeConfig, seed: u64) -> EpisodeConfig {
        let mut c = base.clone();
        c.seed = seed;
        if let Some(s) = &self.scenario {
            c.scenario = s.clone();
        }
        if let Some(p) = &self.organization_prompt {
            c.organization_prompt = p.clone();
        }
        if let Some(b) = &self.backend {
            for p in c.team.iter_mut().filter(|p| !p.is_human) {
                p.backend_ref = b.clone();
            }
        }
        if let Some(lc) = self.leader_correction {
            c.leader_correction_enabled = lc;
        }
        if let Some(e) = self.election {
            c.election.enabled = e;
            let d = c.election.directive();
            if e && !c.organization_prompt.contains(&d) {
                c.organization_prompt = [c.organization_prompt.trim(), d.as_str()]
                    .iter()
                    .filter(|s| !s.is_empty())
                    .copied()
                    .collect::<Vec<_>>()
                    .join(" ");
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchPlan {
    /// Explicit seeds; when empty, `0..seed_count`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_seed_count")]
    pub seed_count: u64,
    #[serde(default)]
    pub conditions: Vec<Condition>,
}

fn default_seed_count() -> u64 {
    20
}

impl BatchPlan {
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.seed_count).collect()
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectPlan {
    #[serde(default = "default_seed_prompt")]
    pub seed_prompt: String,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_critic")]
    pub critic_backend: String,
    #[serde(default = "default_coordinator")]
    pub coordinator_backend: String,
    #[serde(default = "default_budget")]
    pub event_budget: usize,
}

fn default_seed_prompt() -> String {
    "Agent_1 as the leader to coordinate the task".into()
}
fn default_iterations() -> u32 {
    4
}
fn default_critic() -> String {
    "scripted_critic".into()
}
fn default_coordinator() -> String {
    "scripted_coordinator".into()
}
fn default_budget() -> usize {
    DEFAULT_EVENT_BUDGET
}

impl Default for ReflectPlan {
    fn default() -> Self {
        ReflectPlan {
            seed_prompt: default_seed_prompt(),
            iterations: default_iterations(),
            mode: Mode::Full,
            critic_backend: default_critic(),
            coordinator_backend: default_coordinator(),
            event_budget: default_budget(),
        }
    }
}

impl ReflectPlan {
    pub fn settings(&self) -> LoopSettings {
        LoopSettings {
            seed_prompt: self.seed_prompt.clone(),
            iterations: self.iterations,
            mode: self.mode,
            critic_backend: self.critic_backend.clone(),
            coordinator_backend: self.coordinator_backend.clone(),
            event_budget: self.event_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Named backends; the scripted policies are always available under their policy names.
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    pub episode: EpisodeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect: Option<ReflectPlan>,
    /// Backend used by `classify` and `report` to label messages.
    #[serde(default = "default_classifier")]
    pub classifier_backend: String,
    /// Extra scenario JSON files, added to the built-in ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_dir: Option<PathBuf>,
    /// Template overrides (`<role>.txt`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

fn default_classifier() -> String {
    "rubric_classifier".into()
}

const SECRET_KEYS: [&str; 7] = ["api_key", "apikey", "key", "token", "secret", "password", "authorization"];

fn find_secret(v: &serde_json::Value, path: &str) -> Option<String> {
    match v {
        serde_json::Value::Object(m) => m.iter().find_map(|(k, v)| {
            let key = format!("{path}.{k}");
            let lower = k.to_ascii_lowercase();
            if SECRET_KEYS.contains(&lower.as_str()) || lower.ends_with("_key") || lower.ends_with("_token") {
                Some(key)
            } else {
                find_secret(v, &key)
            }
        }),
        _ => None,
    }
}

impl ExperimentConfig {
    /// A config around one episode, with only the built-in backends.
    pub fn for_episode(episode: EpisodeConfig) -> Self {
        ExperimentConfig {
            backends: BTreeMap::new(),
            episode,
            batch: None,
            reflect: None,
            classifier_backend: default_classifier(),
            scenario_dir: None,
            template_dir: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if json { Self::from_json(&text) } else { Self::from_toml(&text) }.map_err(|e| match e {
            ConfigFileError::Parse { message, .. } => ConfigFileError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        // Relative paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scenario_dir, &mut cfg.template_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigFileError> {
        let parse = |message: String| ConfigFileError::Parse {
            path: "<toml>".into(),
            message,
        };
        let raw: toml::Value = toml::from_str(text).map_err(|e| parse(e.to_string()))?;
        let value = serde_json::to_value(raw).map_err(|e| parse(e.to_string()))?;
        Self::from_value(value).map_err(|e| match e {
            ConfigFileError::Parse { message, .. } => parse(message),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigFileError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigFileError::Parse {
            path: "<json>".into(),
            message: e.to_string(),
        })?;
        Self::from_value(value)
    }

    fn from_value(value: serde_json::Value) -> Result<Self, ConfigFileError> {
        if let Some(b) = value.get("backends") {
            if let Some(key) = find_secret(b, "backends") {
                return Err(ConfigFileError::SecretInConfig { key });
            }
        }
        serde_json::from_value(value).map_err(|e| ConfigFileError::Parse {
            path: String::new(),
            message: e.to_string(),
        })
    }

    pub fn registry(&self) -> BackendRegistry {
        let mut specs: BTreeMap<String, BackendSpec> = ["greedy_searcher", "leaderful", "noisy", "scripted_critic", "scripted_coordinator", "rubric_classifier"]
            .into_iter()
            .map(|p| (p.to_string(), BackendSpec::scripted(p)))
            .collect();
        specs.extend(self.backends.clone());
        BackendRegistry::new(specs)
    }

    pub fn catalog(&self) -> Result<ScenarioCatalog, ConfigFileError> {
        let mut c = ScenarioCatalog::builtin();
        if let Some(dir) = &self.scenario_dir {
            c.load_dir(dir)?;
        }
        Ok(c)
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigFileError> {
        Ok(match &self.template_dir {
            Some(d) => TemplateSet::from_dir(d)?,
            None => TemplateSet::builtin(),
        })
    }

    /// Every episode this config can produce, one per condition and seed.
    pub fn batch_items(&self) -> Vec<BatchItem> {
        let plan = self.batch.clone().unwrap_or(BatchPlan {
            seeds: vec![],
            seed_count: default_seed_count(),
            conditions: vec![],
        });
        let conditions = if plan.conditions.is_empty() {
            vec![Condition {
                name: "base".into(),
                organization_prompt: None,
                backend: None,
                election: None,
                leader_correction: None,
                scenario: None,
            }]
        } else {
            plan.conditions.clone()
        };
        let seeds = plan.seed_list();
        conditions
            .iter()
            .flat_map(|c| {
                seeds.iter().map(move |s| BatchItem {
                    condition: c.name.clone(),
                    config: c.apply(&self.episode, *s),
                })
            })
            .collect()
    }

    /// Startup checks: scenarios and backends exist, configs are valid and
    /// live backends have their token variable set.
    pub fn validate(&self, needs_reflect: bool) -> Result<(), ConfigFileError> {
        let catalog = self.catalog()?;
        let registry = self.registry();
        self.templates()?;
        let mut episodes: Vec<(String, EpisodeConfig)> = vec![("episode".into(), self.episode.clone())];
        if let Some(plan) = &self.batch {
            for (i, c) in plan.conditions.iter().enumerate() {
                episodes.push((format!("batch.conditions[{i}]"), c.apply(&self.episode, 0)));
            }
        }
        for (key, ep) in &episodes {
            if catalog.get(&ep.scenario).is_err() {
                return Err(ConfigFileError::UnknownScenario {
                    key: format!("{key}.scenario"),
                    name: ep.scenario.clone(),
                });
            }
            for (i, p) in ep.team.iter().enumerate() {
                if p.is_human {
                    continue;
                }
                if registry.spec(&p.backend_ref).is_err() {
                    return Err(ConfigFileError::UnknownBackend {
                        key: format!("{key}.team[{i}].backend_ref"),
                        name: p.backend_ref.clone(),
                    });
                }
            }
            if let Err(e) = ep.validate() {
                return Err(ConfigFileError::Invalid {
                    key: key.clone(),
                    message: e.to_string(),
                });
            }
            let names: Vec<&str> = ep.team.iter().filter(|p| !p.is_human).map(|p| p.backend_ref.as_str()).collect();
            registry.check(&names)?;
        }
        if needs_reflect {
            let plan = self.reflect.clone().unwrap_or_default();
            for (key, name) in [
                ("reflect.critic_backend", &plan.critic_backend),
                ("reflect.coordinator_backend", &plan.coordinator_backend),
            ] {
                if registry.spec(name).is_err() {
                    return Err(ConfigFileError::UnknownBackend {
                        key: key.into(),
                        name: name.clone(),
                    });
                }
                registry.check(&[name])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
classifier_backend = "rubric_classifier"

[backends.gpt]
kind = "http_chat"
base_url = "https://example.invalid/v1"
model = "some-model"
auth_env = "ORGSIM_TEST_UNSET_KEY"

[episode]
scenario = "prepare_afternoon_tea"
seed = 1
team = [
  { agent_id = 1, backend_ref = "leaderful" },
  { agent_id = 2, backend_ref = "leaderful" },
  { agent_id = 3, backend_ref = "leaderful" },
]

[batch]
seed_count = 3
conditions = [
  { name = "none", organization_prompt = "", backend = "noisy" },
  { name = "leader", organization_prompt = "Agent 1 is the leader to coordinate the task." },
]

[reflect]
iterations = 2
"#;

    #[test]
    fn toml_round_trip_and_batch_expansion() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.episode.team.len(), 3);
        let items = c.batch_items();
        assert_eq!(items.len(), 6);
        assert_eq!(items[0].config.team[0].backend_ref, "noisy");
        assert_eq!(items[4].config.seed, 1);
        assert_eq!(c.reflect.as_ref().unwrap().iterations, 2);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), c);
    }

    #[test]
    fn validation_names_the_offending_key() {
        let mut c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.validate(true).unwrap();
        c.episode.team[1].backend_ref = "nope".into();
        let e = c.validate(false).unwrap_err();
        assert_eq!(e.key(), Some("episode.team[1].backend_ref"));
        let mut c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.episode.scenario = "mars_base".into();
        assert_eq!(c.validate(false).unwrap_err().key(), Some("episode.scenario"));
        let mut c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.episode.team[0].backend_ref = "gpt".into();
        assert!(matches!(c.validate(false), Err(ConfigFileError::Gateway(GatewayError::MissingAuth { .. }))));
    }

    #[test]
    fn secrets_are_rejected() {
        let bad = SAMPLE.replace("auth_env = \"ORGSIM_TEST_UNSET_KEY\"", "auth_env = \"X\"\napi_key = \"sk-123\"");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert_eq!(e.key(), Some("backends.gpt.api_key"));
    }

    #[test]
    fn election_condition_adds_the_directive() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let cond = Condition {
            name: "elect".into(),
            organization_prompt: None,
            backend: None,
            election: Some(true),
            leader_correction: None,
            scenario: None,
        };
        let ep = cond.apply(&c.episode, 3);
        ep.validate().unwrap();
        assert!(ep.organization_prompt.contains("Elect a new leader every 10 steps"));
    }
}
