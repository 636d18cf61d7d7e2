use serde::{Deserialize, Serialize};

use crate::comms::{Message, Recipients};
use crate::world::AgentId;

/// Messages shown to an agent in its prompts.
pub const DIALOGUE_WINDOW: usize = 12;
/// Past actions shown to an agent in its prompts.
pub const ACTION_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum DialogueDirection {
    Sent { to: Recipients },
    Received { from: AgentId, broadcast: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueEntry {
    pub step: u32,
    #[serde(flatten)]
    pub direction: DialogueDirection,
    pub content: String,
}

impl DialogueEntry {
    pub fn render(&self) -> String {
        let (from, to) = match &self.direction {
            DialogueDirection::Sent { to } => ("You".to_string(), to.describe()),
            DialogueDirection::Received { from, broadcast } => (
                format!("Agent_{from}"),
                if *broadcast {
                    "everyone".to_string()
                } else {
                    "you".to_string()
                },
            ),
        };
        format!("[step {}] {from} -> {to}: {}", self.step, self.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub step: u32,
    pub action: String,
    pub outcome: String,
}

/// Append-only per-agent history.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStore {
    dialogue: Vec<DialogueEntry>,
    actions: Vec<ActionEntry>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sent(&mut self, message: &Message) {
        self.dialogue.push(DialogueEntry {
            step: message.step,
            direction: DialogueDirection::Sent {
                to: message.recipients.clone(),
            },
            content: message.content.clone(),
        });
    }

    pub fn record_received(&mut self, message: &Message) {
        self.dialogue.push(DialogueEntry {
            step: message.step,
            direction: DialogueDirection::Received {
                from: message.sender,
                broadcast: message.recipients == Recipients::All,
            },
            content: message.content.clone(),
        });
    }

    pub fn record_action(&mut self, step: u32, action: impl Into<String>, outcome: impl Into<String>) {
        self.actions.push(ActionEntry {
            step,
            action: action.into(),
            outcome: outcome.into(),
        });
    }

    pub fn dialogue(&self) -> &[DialogueEntry] {
        &self.dialogue
    }

    pub fn actions(&self) -> &[ActionEntry] {
        &self.actions
    }

    /// The latest `n` dialogue entries, oldest first.
    pub fn recent_dialogue(&self, n: usize) -> &[DialogueEntry] {
        &self.dialogue[self.dialogue.len().saturating_sub(n)..]
    }

    pub fn recent_actions(&self, n: usize) -> &[ActionEntry] {
        &self.actions[self.actions.len().saturating_sub(n)..]
    }

    pub fn render_dialogue(&self, n: usize) -> String {
        let recent = self.recent_dialogue(n);
        if recent.is_empty() {
            return "(none)".to_string();
        }
        recent
            .iter()
            .map(DialogueEntry::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render_actions(&self, n: usize) -> String {
        let recent = self.recent_actions(n);
        if recent.is_empty() {
            return "(none)".to_string();
        }
        recent
            .iter()
            .map(|a| format!("[step {}] {} -> {}", a.step, a.action, a.outcome))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(step: u32, sender: AgentId, recipients: Recipients, content: &str) -> Message {
        Message::new(step, 0, 0, sender, recipients, content.to_string(), None)
    }

    #[test]
    fn append_preserves_order() {
        let mut m = MemoryStore::new();
        for i in 0..3 {
            m.record_received(&msg(i, 2, Recipients::All, &format!("m{i}")));
        }
        let contents: Vec<_> = m.dialogue().iter().map(|d| d.content.as_str()).collect();
        assert_eq!(contents, ["m0", "m1", "m2"]);
    }

    #[test]
    fn window_keeps_latest_entries_oldest_first() {
        let mut m = MemoryStore::new();
        for i in 1..=15 {
            m.record_received(&msg(i, 2, Recipients::All, &format!("m{i}")));
        }
        let recent = m.recent_dialogue(DIALOGUE_WINDOW);
        assert_eq!(recent.len(), 12);
        assert_eq!(recent[0].content, "m4");
        assert_eq!(recent[11].content, "m15");
        let text = m.render_dialogue(DIALOGUE_WINDOW);
        assert!(!text.contains("m3\n") && !text.ends_with("m3"));
        assert!(text.starts_with("[step 4] Agent_2 -> everyone: m4"));
    }

    #[test]
    fn thirty_messages_render_twelve() {
        let mut m = MemoryStore::new();
        for i in 0..30 {
            m.record_sent(&msg(i, 1, Recipients::Agents(vec![2]), "x"));
        }
        assert_eq!(m.render_dialogue(DIALOGUE_WINDOW).lines().count(), 12);
    }

    #[test]
    fn empty_buffers_render_none_marker() {
        let m = MemoryStore::new();
        assert_eq!(m.render_dialogue(DIALOGUE_WINDOW), "(none)");
        assert_eq!(m.render_actions(ACTION_WINDOW), "(none)");
    }

    #[test]
    fn action_window_is_twenty() {
        let mut m = MemoryStore::new();
        for i in 0..25 {
            m.record_action(i, "[wait]", "success");
        }
        let text = m.render_actions(ACTION_WINDOW);
        assert_eq!(text.lines().count(), 20);
        assert!(text.starts_with("[step 5]"));
    }
}
