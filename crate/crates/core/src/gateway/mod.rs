//! Model backends: an OpenAI-compatible chat client and deterministic scripted policies.

mod http;
pub mod scripted;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{DialogueEntry, MemoryStore, DIALOGUE_WINDOW};
use crate::world::{AgentId, GoalProgress, Observation, World, WorldError, WorldState};

pub use http::{HttpChatBackend, ReqwestTransport, RetryPolicy, Sleeper, ThreadSleeper, Transport, TransportError};

pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 256;
pub const DEFAULT_COMPLETIONS: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: ChatRole,
    pub content: String,
}

impl ChatTurn {
    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatTurn {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub turns: Vec<ChatTurn>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub completions: u32,
    /// Structured copy of what the prompt was rendered from. Never sent on the wire.
    #[serde(skip)]
    pub sidecar: Option<Sidecar>,
}

impl ChatRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        ChatRequest {
            system_text: system_text.into(),
            turns: vec![ChatTurn::user(user_text)],
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            completions: DEFAULT_COMPLETIONS,
            sidecar: None,
        }
    }

    pub fn with_sidecar(mut self, sidecar: Sidecar) -> Self {
        self.sidecar = Some(sidecar);
        self
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    /// Follow-up request after an unusable reply.
    pub fn reask(&self, reply: &str, correction: &str) -> Self {
        let mut next = self.clone();
        next.turns.push(ChatTurn::assistant(reply));
        next.turns.push(ChatTurn::user(correction));
        next
    }

    /// Role of the request, for the call log.
    pub fn role(&self) -> RequestRole {
        self.sidecar
            .as_ref()
            .map_or(RequestRole::Other, |s| s.payload.role())
    }

    pub fn is_reask(&self) -> bool {
        self.turns.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>) -> Self {
        ChatResponse {
            content: content.into(),
            prompt_tokens: None,
            completion_tokens: None,
            latency_ms: 0,
        }
    }
}

/// What an agent prompt was rendered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub agent_id: AgentId,
    pub roster: Vec<AgentId>,
    pub step: u32,
    pub round: u32,
    pub organization: String,
    pub leader: Option<AgentId>,
    pub observation: Observation,
    pub progress: GoalProgress,
    pub recent_dialogue: Vec<DialogueEntry>,
    /// Dialogue entries ever recorded for this agent; lets stateful policies
    /// tell which of `recent_dialogue` they have not seen yet.
    pub dialogue_total: usize,
}

impl AgentView {
    /// Snapshot of what `agent` knows right now.
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        world: &World,
        state: &WorldState,
        agent: AgentId,
        roster: &[AgentId],
        memory: &MemoryStore,
        organization: &str,
        leader: Option<AgentId>,
        round: u32,
    ) -> Result<Self, WorldError> {
        Ok(AgentView {
            agent_id: agent,
            roster: roster.to_vec(),
            step: state.step + 1,
            round,
            organization: organization.to_string(),
            leader,
            observation: world.observe(state, agent)?,
            progress: world.goal_progress(state),
            recent_dialogue: memory.recent_dialogue(DIALOGUE_WINDOW).to_vec(),
            dialogue_total: memory.dialogue().len(),
        })
    }

    /// Entries not covered by an earlier view whose total was `seen_total`.
    pub fn unseen_dialogue(&self, seen_total: usize) -> &[DialogueEntry] {
        let fresh = self.dialogue_total.saturating_sub(seen_total);
        let n = fresh.min(self.recent_dialogue.len());
        &self.recent_dialogue[self.recent_dialogue.len() - n..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentActivity {
    pub agent: AgentId,
    pub messages_sent: u32,
    pub tokens_sent: u32,
    pub successful_actions: u32,
    pub failed_actions: u32,
    pub items_delivered: u32,
    pub waits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticView {
    pub team: Vec<AgentId>,
    pub leader: Option<AgentId>,
    pub steps: u32,
    pub completed: bool,
    pub activity: Vec<AgentActivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub iteration: u32,
    pub prompt: String,
    pub steps: u32,
    pub comm_cost: f64,
    pub ranking: Option<Vec<AgentId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorView {
    pub team: Vec<AgentId>,
    pub records: Vec<RecordSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTask {
    Communicate,
    Act,
    Elect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum SidecarPayload {
    Agent { task: AgentTask, view: Box<AgentView> },
    Critic(CriticView),
    Coordinator(CoordinatorView),
    Classify { dialogue: String },
}

impl SidecarPayload {
    pub fn role(&self) -> RequestRole {
        match self {
            SidecarPayload::Agent { task, .. } => match task {
                AgentTask::Communicate => RequestRole::Communicate,
                AgentTask::Act => RequestRole::Act,
                AgentTask::Elect => RequestRole::Elect,
            },
            SidecarPayload::Critic(_) => RequestRole::Critic,
            SidecarPayload::Coordinator(_) => RequestRole::Coordinator,
            SidecarPayload::Classify { .. } => RequestRole::Classify,
        }
    }
}

/// The placeholder values a prompt was rendered with, plus a structured payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fields: BTreeMap<String, String>,
    pub payload: SidecarPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestRole {
    Communicate,
    Act,
    Elect,
    Critic,
    Coordinator,
    Classify,
    Other,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<BackendError> },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("replay transcript exhausted")]
    ReplayExhausted,
    #[error("scripted policy `{0}` needs a structured prompt sidecar")]
    MissingSidecar(String),
}

impl BackendError {
    /// 429, 5xx and timeouts are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            BackendError::Timeout => true,
            _ => false,
        }
    }

    pub fn is_replay_exhausted(&self) -> bool {
        matches!(self, BackendError::ReplayExhausted)
    }
}

pub trait Backend: Send {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    HttpChat {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        auth_env: String,
        #[serde(default)]
        min_interval_ms: u64,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Scripted {
        policy: String,
        #[serde(default)]
        params: serde_json::Value,
    },
}

impl BackendSpec {
    pub fn scripted(policy: &str) -> Self {
        BackendSpec::Scripted {
            policy: policy.to_string(),
            params: serde_json::Value::Null,
        }
    }

    pub fn scripted_with(policy: &str, params: serde_json::Value) -> Self {
        BackendSpec::Scripted {
            policy: policy.to_string(),
            params,
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self, BackendSpec::HttpChat { .. })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{backend}` needs environment variable {env}")]
    MissingAuth { backend: String, env: String },
    #[error("unknown scripted policy `{0}`")]
    UnknownPolicy(String),
    #[error("bad parameters for policy `{policy}`: {message}")]
    BadParams { policy: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub backend: String,
    pub agent: Option<AgentId>,
    pub role: RequestRole,
    pub ok: bool,
}

/// Shared, append-only record of every backend call.
#[derive(Debug, Clone, Default)]
pub struct CallLog {
    inner: Arc<Mutex<Vec<CallRecord>>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, record: CallRecord) {
        self.inner.lock().expect("call log poisoned").push(record);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().expect("call log poisoned").clone()
    }

    pub fn count(&self, role: RequestRole) -> usize {
        self.inner
            .lock()
            .expect("call log poisoned")
            .iter()
            .filter(|r| r.role == role)
            .count()
    }
}

struct Logged {
    name: String,
    agent: Option<AgentId>,
    log: CallLog,
    inner: Box<dyn Backend>,
}

impl Backend for Logged {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let out = self.inner.complete(request);
        self.log.push(CallRecord {
            backend: self.name.clone(),
            agent: self.agent,
            role: request.role(),
            ok: out.is_ok(),
        });
        out
    }
}

/// Named backend specs, instantiated per agent per episode.
#[derive(Debug, Clone, Default)]
pub struct BackendRegistry {
    specs: BTreeMap<String, BackendSpec>,
    log: CallLog,
}

impl BackendRegistry {
    pub fn new(specs: BTreeMap<String, BackendSpec>) -> Self {
        BackendRegistry {
            specs,
            log: CallLog::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, spec: BackendSpec) {
        self.specs.insert(name.into(), spec);
    }

    pub fn spec(&self, name: &str) -> Result<&BackendSpec, GatewayError> {
        self.specs
            .get(name)
            .ok_or_else(|| GatewayError::UnknownBackend(name.to_string()))
    }

    pub fn specs(&self) -> &BTreeMap<String, BackendSpec> {
        &self.specs
    }

    pub fn call_log(&self) -> &CallLog {
        &self.log
    }

    /// Startup check for the named backends: they exist, scripted policies are
    /// known with valid parameters, and live backends have their auth variable set.
    pub fn check(&self, names: &[&str]) -> Result<(), GatewayError> {
        for name in names {
            match self.spec(name)? {
                BackendSpec::HttpChat { auth_env, .. } => {
                    if std::env::var(auth_env).map_or(true, |v| v.is_empty()) {
                        return Err(GatewayError::MissingAuth {
                            backend: name.to_string(),
                            env: auth_env.clone(),
                        });
                    }
                }
                BackendSpec::Scripted { policy, params } => {
                    scripted::build(policy, params, None, 0)?;
                }
            }
        }
        Ok(())
    }

    /// A fresh backend instance. `agent` and `seed` make scripted state per agent and per episode.
    pub fn instantiate(
        &self,
        name: &str,
        agent: Option<AgentId>,
        seed: u64,
    ) -> Result<Box<dyn Backend>, GatewayError> {
        let inner: Box<dyn Backend> = match self.spec(name)? {
            BackendSpec::HttpChat {
                base_url,
                model,
                auth_env,
                min_interval_ms,
                timeout_secs,
            } => {
                let key = std::env::var(auth_env).map_err(|_| GatewayError::MissingAuth {
                    backend: name.to_string(),
                    env: auth_env.clone(),
                })?;
                Box::new(HttpChatBackend::new(
                    base_url,
                    model,
                    key,
                    *min_interval_ms,
                    *timeout_secs,
                ))
            }
            BackendSpec::Scripted { policy, params } => scripted::build(policy, params, agent, seed)?,
        };
        Ok(Box::new(Logged {
            name: name.to_string(),
            agent,
            log: self.log.clone(),
            inner,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults() {
        let r = ChatRequest::new("sys", "user");
        assert_eq!(r.temperature, 0.8);
        assert_eq!(r.max_output_tokens, 256);
        assert_eq!(r.completions, 1);
    }

    #[test]
    fn transient_classification() {
        for s in [429, 500, 502, 503, 599] {
            assert!(BackendError::Http {
                status: s,
                body: String::new()
            }
            .is_transient());
        }
        for s in [400, 401, 404, 422] {
            assert!(!BackendError::Http {
                status: s,
                body: String::new()
            }
            .is_transient());
        }
        assert!(BackendError::Timeout.is_transient());
        assert!(!BackendError::Transport("dns".into()).is_transient());
    }

    #[test]
    fn spec_json_shapes() {
        let s: BackendSpec = serde_json::from_str(
            r#"{"kind":"http_chat","base_url":"http://x/v1","model":"gpt-4","auth_env":"KEY"}"#,
        )
        .unwrap();
        assert!(matches!(s, BackendSpec::HttpChat { timeout_secs: 60, min_interval_ms: 0, .. }));
        let s: BackendSpec =
            serde_json::from_str(r#"{"kind":"scripted","policy":"greedy_searcher"}"#).unwrap();
        assert_eq!(s, BackendSpec::scripted("greedy_searcher"));
    }

    #[test]
    fn missing_auth_is_a_startup_error() {
        let mut reg = BackendRegistry::default();
        reg.insert(
            "live",
            BackendSpec::HttpChat {
                base_url: "http://127.0.0.1:9/v1".into(),
                model: "m".into(),
                auth_env: "ORGSIM_TEST_SURELY_UNSET_KEY".into(),
                min_interval_ms: 0,
                timeout_secs: 1,
            },
        );
        assert!(matches!(
            reg.check(&["live"]),
            Err(GatewayError::MissingAuth { .. })
        ));
        assert!(matches!(
            reg.check(&["nope"]),
            Err(GatewayError::UnknownBackend(_))
        ));
    }

    #[test]
    fn unknown_policy_rejected() {
        let mut reg = BackendRegistry::default();
        reg.insert("x", BackendSpec::scripted("telepathy"));
        assert_eq!(
            reg.check(&["x"]),
            Err(GatewayError::UnknownPolicy("telepathy".into()))
        );
    }

    #[test]
    fn calls_are_logged() {
        let mut reg = BackendRegistry::default();
        reg.insert(
            "r",
            BackendSpec::scripted_with("replay", serde_json::json!({"replies": ["a"]})),
        );
        let mut b = reg.instantiate("r", Some(2), 0).unwrap();
        assert_eq!(b.complete(&ChatRequest::new("", "")).unwrap().content, "a");
        assert!(b.complete(&ChatRequest::new("", "")).is_err());
        let log = reg.call_log().records();
        assert_eq!(log.len(), 2);
        assert!(log[0].ok && !log[1].ok);
        assert_eq!(log[0].agent, Some(2));
    }
}
