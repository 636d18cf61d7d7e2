use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentProfile;
use crate::comms::TurnOrder;
use crate::world::AgentId;

pub const LEADER_CORRECTION: &str = "If the leader's instructions are not right, you can correct the leader.";
pub const DEFAULT_MAX_STEPS: u32 = 250;

static LEADER_IN_PROMPT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bagent[ _]?(\d+)\s+(?:is|as)\s+the\s+leader").unwrap());

/// The designated leader named by an organization prompt, if any.
pub fn leader_from_prompt(prompt: &str) -> Option<AgentId> {
    LEADER_IN_PROMPT
        .captures(prompt)
        .and_then(|c| c[1].parse().ok())
}

fn default_interval() -> u32 {
    10
}

fn default_window() -> usize {
    12
}

fn default_one() -> u32 {
    1
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_interval")]
    pub interval_steps: u32,
    #[serde(default = "default_window")]
    pub window_messages: usize,
    /// Message-and-vote rounds per election; each agent's last valid vote counts.
    #[serde(default = "default_one")]
    pub negotiation_rounds: u32,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig {
            enabled: false,
            interval_steps: default_interval(),
            window_messages: default_window(),
            negotiation_rounds: 1,
        }
    }
}

impl ElectionConfig {
    pub fn is_due(&self, step: u32) -> bool {
        self.enabled && step > 0 && self.interval_steps > 0 && step.is_multiple_of(self.interval_steps)
    }

    /// Organization prompt for the election condition.
    pub fn directive(&self) -> String {
        format!(
            "Elect a new leader every {} steps to coordinate the task. After the election, the other agents should follow the leader's instructions.",
            self.interval_steps
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub scenario: String,
    pub seed: u64,
    pub team: Vec<AgentProfile>,
    #[serde(default)]
    pub organization_prompt: String,
    #[serde(default)]
    pub election: ElectionConfig,
    #[serde(default)]
    pub leader_correction_enabled: bool,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    #[serde(default = "default_one")]
    pub comm_rounds_per_step: u32,
    #[serde(default)]
    pub turn_order: TurnOrder,
    /// Overrides the leader inferred from the organization prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated_leader: Option<AgentId>,
    /// Seconds a human turn may stay open before it counts as silence or a wait.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("team is empty")]
    EmptyTeam,
    #[error("agent ids must be 1..={n} in order, found {found:?}")]
    AgentIds { n: usize, found: Vec<AgentId> },
    #[error("at most one human slot is supported")]
    TooManyHumans,
    #[error("election is enabled but the organization prompt has no election directive")]
    MissingElectionDirective,
    #[error("{field} must be at least 1")]
    Zero { field: &'static str },
    #[error("designated leader Agent_{0} is not on the team")]
    LeaderNotOnTeam(AgentId),
}

impl EpisodeConfig {
    /// A team of `n` agents sharing one backend.
    pub fn uniform(scenario: &str, seed: u64, n: u32, backend: &str) -> Self {
        EpisodeConfig {
            scenario: scenario.to_string(),
            seed,
            team: (1..=n).map(|a| AgentProfile::new(a, backend)).collect(),
            organization_prompt: String::new(),
            election: ElectionConfig::default(),
            leader_correction_enabled: false,
            max_steps: DEFAULT_MAX_STEPS,
            comm_rounds_per_step: 1,
            turn_order: TurnOrder::default(),
            designated_leader: None,
            human_timeout_secs: None,
        }
    }

    pub fn roster(&self) -> Vec<AgentId> {
        self.team.iter().map(|p| p.agent_id).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.team.is_empty() {
            return Err(ConfigError::EmptyTeam);
        }
        let ids = self.roster();
        if ids.iter().enumerate().any(|(i, a)| *a as usize != i + 1) {
            return Err(ConfigError::AgentIds {
                n: ids.len(),
                found: ids,
            });
        }
        if self.team.iter().filter(|p| p.is_human).count() > 1 {
            return Err(ConfigError::TooManyHumans);
        }
        if self.max_steps == 0 {
            return Err(ConfigError::Zero { field: "max_steps" });
        }
        if self.comm_rounds_per_step == 0 {
            return Err(ConfigError::Zero {
                field: "comm_rounds_per_step",
            });
        }
        if self.election.enabled {
            if self.election.interval_steps == 0 {
                return Err(ConfigError::Zero {
                    field: "election.interval_steps",
                });
            }
            if self.election.negotiation_rounds == 0 {
                return Err(ConfigError::Zero {
                    field: "election.negotiation_rounds",
                });
            }
            if !self
                .organization_prompt
                .to_lowercase()
                .contains("elect a new leader")
            {
                return Err(ConfigError::MissingElectionDirective);
            }
        }
        if let Some(l) = self.initial_leader() {
            if !ids.contains(&l) {
                return Err(ConfigError::LeaderNotOnTeam(l));
            }
        }
        Ok(())
    }

    pub fn initial_leader(&self) -> Option<AgentId> {
        self.designated_leader
            .or_else(|| leader_from_prompt(&self.organization_prompt))
    }

    /// Organization text shown to agents while `leader` is in charge.
    pub fn organization_text(&self, leader: Option<AgentId>) -> String {
        let mut parts: Vec<String> = Vec::new();
        if !self.organization_prompt.trim().is_empty() {
            parts.push(self.organization_prompt.trim().to_string());
        }
        if self.leader_correction_enabled && !self.organization_prompt.contains(LEADER_CORRECTION) {
            parts.push(LEADER_CORRECTION.to_string());
        }
        if self.election.enabled {
            if let Some(l) = leader {
                parts.push(format!("The current leader is Agent_{l}."));
            }
        }
        parts.join(" ")
    }

    /// Backend names referenced by non-human team members, deduplicated.
    pub fn backend_refs(&self) -> Vec<&str> {
        let mut refs: Vec<&str> = self
            .team
            .iter()
            .filter(|p| !p.is_human)
            .map(|p| p.backend_ref.as_str())
            .collect();
        refs.sort_unstable();
        refs.dedup();
        refs
    }
}
