//! Per-agent stack: profile, memory, prompt assembly and reply parsing.

mod memory;
mod parse;
mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use memory::{
    ActionEntry, DialogueDirection, DialogueEntry, MemoryStore, ACTION_WINDOW, DIALOGUE_WINDOW,
};
pub use parse::{parse_action_reply, parse_comm_reply, parse_vote, CommDecision, Payload};
pub use template::{Template, TemplateError, TemplateSet};

use crate::world::{AgentId, Observation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    #[serde(default)]
    pub display_name: String,
    pub backend_ref: String,
    #[serde(default)]
    pub is_human: bool,
}

impl AgentProfile {
    pub fn new(agent_id: AgentId, backend_ref: impl Into<String>) -> Self {
        AgentProfile {
            agent_id,
            display_name: display_name(agent_id),
            backend_ref: backend_ref.into(),
            is_human: false,
        }
    }

    pub fn human(agent_id: AgentId) -> Self {
        AgentProfile {
            is_human: true,
            ..Self::new(agent_id, "human")
        }
    }

    pub fn name(&self) -> String {
        if self.display_name.is_empty() {
            display_name(self.agent_id)
        } else {
            self.display_name.clone()
        }
    }
}

pub fn display_name(agent: AgentId) -> String {
    format!("Agent_{agent}")
}

/// A rendered prompt plus the values bound to its placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub placeholder_values: BTreeMap<String, String>,
}

/// Everything an agent prompt is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub profile: &'a AgentProfile,
    pub roster: &'a [AgentId],
    pub organization: &'a str,
    pub goal: &'a str,
    pub observation: &'a Observation,
    pub memory: &'a MemoryStore,
    /// Present on election steps.
    pub election_directive: Option<&'a str>,
}

impl PromptInputs<'_> {
    fn base_values(&self, dialogue_window: usize) -> BTreeMap<String, String> {
        let teammates: Vec<String> = self
            .roster
            .iter()
            .filter(|a| **a != self.profile.agent_id)
            .map(|a| display_name(*a))
            .collect();
        let actions = self
            .observation
            .available_actions
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{}. {}", i + 1, a.label))
            .collect::<Vec<_>>()
            .join("\n");
        let values = [
            ("AGENT_NAME", self.profile.name()),
            ("TEAM_SIZE", self.roster.len().to_string()),
            ("TEAMMATES", teammates.join(", ")),
            ("ORGANIZATION_INSTRUCTION", self.organization.to_string()),
            ("GOAL", self.goal.to_string()),
            ("PROGRESS", self.observation.progress_text.clone()),
            ("OBSERVATION", self.observation.describe()),
            ("AVAILABLE_ACTIONS", actions),
            (
                "DIALOGUE_HISTORY",
                self.memory.render_dialogue(dialogue_window),
            ),
            ("ACTION_HISTORY", self.memory.render_actions(ACTION_WINDOW)),
            (
                "ELECTION_DIRECTIVE",
                self.election_directive.unwrap_or_default().to_string(),
            ),
        ];
        values
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

fn bundle(template: &Template, values: BTreeMap<String, String>) -> PromptBundle {
    let (system_text, user_text) = template
        .render(&values)
        .expect("template placeholders are checked when the set is loaded");
    PromptBundle {
        system_text,
        user_text,
        placeholder_values: values,
    }
}

pub fn render_comm_prompt(templates: &TemplateSet, inputs: &PromptInputs<'_>) -> PromptBundle {
    bundle(&templates.communicator, inputs.base_values(DIALOGUE_WINDOW))
}

pub fn render_action_prompt(templates: &TemplateSet, inputs: &PromptInputs<'_>) -> PromptBundle {
    bundle(&templates.actor, inputs.base_values(DIALOGUE_WINDOW))
}

pub fn render_election_prompt(
    templates: &TemplateSet,
    inputs: &PromptInputs<'_>,
    window_messages: usize,
    current_leader: Option<AgentId>,
) -> PromptBundle {
    let mut values = inputs.base_values(window_messages);
    values.insert(
        "CURRENT_LEADER".into(),
        current_leader.map_or_else(|| "none".to_string(), display_name),
    );
    bundle(&templates.election, values)
}
