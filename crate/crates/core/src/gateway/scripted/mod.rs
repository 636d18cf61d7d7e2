//! Deterministic rule-based backends.
//!
//! | policy                 | role                                          |
//! |------------------------|-----------------------------------------------|
//! | `greedy_searcher`      | team agent, searches and broadcasts findings  |
//! | `leaderful`            | team agent, leader assigns rooms              |
//! | `noisy`                | team agent, duplicate and conflicting talk    |
//! | `replay`               | any role, fixed replies in call order         |
//! | `scripted_critic`      | critic                                        |
//! | `scripted_coordinator` | coordinator                                   |
//! | `rubric_classifier`    | behavior classifier                           |
//!
//! Agent policies read the structured sidecar of the request, never the prompt prose.

mod policies;
mod reviewers;
mod search;

use std::collections::{BTreeMap, VecDeque};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{Backend, BackendError, ChatRequest, ChatResponse, GatewayError, SidecarPayload};
use crate::world::AgentId;

pub const POLICIES: [&str; 7] = [
    "greedy_searcher",
    "leaderful",
    "noisy",
    "replay",
    "scripted_critic",
    "scripted_coordinator",
    "rubric_classifier",
];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReplayParams {
    replies: Vec<String>,
    /// Per-agent transcripts keyed by agent id; used when the backend serves an agent.
    per_agent: BTreeMap<String, Vec<String>>,
}

/// Emits recorded replies verbatim, in call order.
#[derive(Debug, Clone)]
pub struct Replay {
    queue: VecDeque<String>,
}

impl Replay {
    pub fn new(replies: impl IntoIterator<Item = String>) -> Self {
        Replay {
            queue: replies.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Backend for Replay {
    fn complete(&mut self, _request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.queue
            .pop_front()
            .map(ChatResponse::text)
            .ok_or(BackendError::ReplayExhausted)
    }
}

enum Policy {
    Greedy(policies::Greedy),
    Leaderful(policies::Leaderful),
    Noisy(Box<policies::Noisy>),
    Critic(reviewers::Critic),
    Coordinator(reviewers::Coordinator),
    Rubric,
}

struct Scripted {
    name: &'static str,
    policy: Policy,
}

impl Backend for Scripted {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let missing = || BackendError::MissingSidecar(self.name.to_string());
        let payload = &request.sidecar.as_ref().ok_or_else(missing)?.payload;
        let text = match (&mut self.policy, payload) {
            (Policy::Greedy(p), SidecarPayload::Agent { task, view }) => p.respond(*task, view),
            (Policy::Leaderful(p), SidecarPayload::Agent { task, view }) => p.respond(*task, view),
            (Policy::Noisy(p), SidecarPayload::Agent { task, view }) => p.respond(*task, view),
            (Policy::Critic(p), SidecarPayload::Critic(v)) => p.respond(v),
            (Policy::Coordinator(p), SidecarPayload::Coordinator(v)) => p.respond(v),
            (Policy::Rubric, SidecarPayload::Classify { dialogue }) => {
                if dialogue.trim().is_empty() {
                    reviewers::labels_reply([false; 3])
                } else {
                    reviewers::labels_reply(reviewers::rubric_labels(dialogue))
                }
            }
            _ => return Err(missing()),
        };
        Ok(ChatResponse::text(text))
    }
}

fn params<T: DeserializeOwned + Default>(policy: &str, v: &serde_json::Value) -> Result<T, GatewayError> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| GatewayError::BadParams {
        policy: policy.to_string(),
        message: e.to_string(),
    })
}

/// Per-agent, per-episode RNG seed for randomized policies.
fn agent_seed(seed: u64, agent: Option<AgentId>) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(agent.unwrap_or(0)).wrapping_add(1)
}

pub(crate) fn build(
    policy: &str,
    p: &serde_json::Value,
    agent: Option<AgentId>,
    seed: u64,
) -> Result<Box<dyn Backend>, GatewayError> {
    let scripted = |name: &'static str, policy: Policy| -> Box<dyn Backend> { Box::new(Scripted { name, policy }) };
    Ok(match policy {
        "greedy_searcher" => {
            params::<NoParams>(policy, p)?;
            scripted("greedy_searcher", Policy::Greedy(policies::Greedy::default()))
        }
        "leaderful" => scripted(
            "leaderful",
            Policy::Leaderful(policies::Leaderful::new(params(policy, p)?)),
        ),
        "noisy" => {
            let np: policies::NoisyParams = params(policy, p)?;
            for (k, r) in [("duplicate_rate", np.duplicate_rate), ("conflict_rate", np.conflict_rate)] {
                if !(0.0..=1.0).contains(&r) {
                    return Err(GatewayError::BadParams {
                        policy: policy.to_string(),
                        message: format!("{k} must be within [0, 1]"),
                    });
                }
            }
            scripted("noisy", Policy::Noisy(Box::new(policies::Noisy::new(np, agent_seed(seed, agent)))))
        }
        "replay" => {
            let rp: ReplayParams = params(policy, p)?;
            let replies = match agent.and_then(|a| rp.per_agent.get(&a.to_string())) {
                Some(list) => list.clone(),
                None => rp.replies,
            };
            Box::new(Replay::new(replies))
        }
        "scripted_critic" => scripted(
            "scripted_critic",
            Policy::Critic(reviewers::Critic::new(params(policy, p)?)),
        ),
        "scripted_coordinator" => {
            params::<NoParams>(policy, p)?;
            scripted("scripted_coordinator", Policy::Coordinator(reviewers::Coordinator))
        }
        "rubric_classifier" => {
            params::<NoParams>(policy, p)?;
            scripted("rubric_classifier", Policy::Rubric)
        }
        other => return Err(GatewayError::UnknownPolicy(other.to_string())),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[cfg(test)]
mod tests;
