//! Communication phase: turn-taking, routing and token accounting.
//!
//! Agents speak one at a time in a fixed order. A speaker's payloads are
//! delivered to recipients' memories before the next speaker's prompt is
//! rendered, so later speakers can respond within the same phase.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{CommDecision, MemoryStore};
use crate::world::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipients {
    All,
    Agents(Vec<AgentId>),
}

impl Recipients {
    pub fn describe(&self) -> String {
        match self {
            Recipients::All => "everyone".to_string(),
            Recipients::Agents(ids) => ids
                .iter()
                .map(|a| format!("Agent_{a}"))
                .collect::<Vec<_>>()
                .join(", "),
        }
    }

    /// Concrete recipient ids for a sender within `roster`.
    pub fn resolve(&self, sender: AgentId, roster: &[AgentId]) -> Vec<AgentId> {
        match self {
            Recipients::All => roster.iter().copied().filter(|a| *a != sender).collect(),
            Recipients::Agents(ids) => ids.iter().copied().filter(|a| *a != sender).collect(),
        }
    }
}

/// Token count of a message: the backend-reported usage when known, otherwise
/// `ceil(chars / 4)`.
pub fn count_tokens(content: &str, usage_hint: Option<u32>) -> u32 {
    if let Some(hint) = usage_hint {
        return hint;
    }
    let chars = content.chars().count() as u32;
    chars.div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub step: u32,
    pub round: u32,
    pub turn_index: u32,
    pub sender: AgentId,
    pub recipients: Recipients,
    pub content: String,
    pub token_count: u32,
}

impl Message {
    pub fn new(
        step: u32,
        round: u32,
        turn_index: u32,
        sender: AgentId,
        recipients: Recipients,
        content: String,
        usage_hint: Option<u32>,
    ) -> Self {
        let token_count = count_tokens(&content, usage_hint);
        Message {
            step,
            round,
            turn_index,
            sender,
            recipients,
            content,
            token_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommPhase {
    #[default]
    Regular,
    Election,
}

/// One agent's turn in one communication round. No messages means silence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommRecord {
    pub step: u32,
    pub phase: CommPhase,
    pub round: u32,
    pub turn_index: u32,
    pub sender: AgentId,
    pub messages: Vec<Message>,
    /// Raw replies from the backend (or the human's serialized decision), in call order.
    #[serde(default)]
    pub replies: Vec<String>,
}

impl CommRecord {
    pub fn is_silence(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Deliver a message: one `received` entry per recipient, regardless of room,
/// and one `sent` entry for the sender.
pub fn route(message: &Message, memories: &mut BTreeMap<AgentId, MemoryStore>) {
    let roster: Vec<AgentId> = memories.keys().copied().collect();
    for r in message.recipients.resolve(message.sender, &roster) {
        if let Some(m) = memories.get_mut(&r) {
            m.record_received(message);
        }
    }
    if let Some(m) = memories.get_mut(&message.sender) {
        m.record_sent(message);
    }
}

/// The outcome of asking one agent to speak.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpeakerTurn {
    pub decision: Option<CommDecision>,
    pub replies: Vec<String>,
    pub usage_hint: Option<u32>,
}

impl SpeakerTurn {
    pub fn silent() -> Self {
        SpeakerTurn::default()
    }
}

/// Turn order for the communication phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TurnOrder {
    #[default]
    Ascending,
    /// Ascending order rotated left by `(step - 1) mod team size`.
    Rotating,
}

impl TurnOrder {
    pub fn order(&self, roster: &[AgentId], step: u32) -> Vec<AgentId> {
        let mut ids = roster.to_vec();
        ids.sort_unstable();
        if let TurnOrder::Rotating = self {
            if !ids.is_empty() {
                let k = (step.saturating_sub(1) as usize) % ids.len();
                ids.rotate_left(k);
            }
        }
        ids
    }
}

/// Turn a speaker's decision into messages, deliver them, and record the turn.
pub fn deliver_turn(
    step: u32,
    round: u32,
    phase: CommPhase,
    turn_index: u32,
    sender: AgentId,
    turn: SpeakerTurn,
    memories: &mut BTreeMap<AgentId, MemoryStore>,
) -> CommRecord {
    let payloads: Vec<(Recipients, String)> = match turn.decision {
        Some(CommDecision::Broadcast { content }) => vec![(Recipients::All, content)],
        Some(CommDecision::Targeted { payloads }) => payloads
            .into_iter()
            .map(|p| (Recipients::Agents(vec![p.to]), p.content))
            .collect(),
        Some(CommDecision::Silence) | None => Vec::new(),
    };
    // Reported usage covers the whole reply, so it only maps onto a lone payload.
    let hint = if payloads.len() == 1 { turn.usage_hint } else { None };
    let messages: Vec<Message> = payloads
        .into_iter()
        .map(|(recipients, content)| Message::new(step, round, turn_index, sender, recipients, content, hint))
        .collect();
    for m in &messages {
        route(m, memories);
    }
    CommRecord {
        step,
        phase,
        round,
        turn_index,
        sender,
        messages,
        replies: turn.replies,
    }
}

/// Run one communication round.
///
/// `speak` is called once per agent in `order`, after all earlier speakers'
/// messages have been routed; it sees the speaker's up-to-date memory.
pub fn run_comm_round<F>(
    step: u32,
    round: u32,
    phase: CommPhase,
    order: &[AgentId],
    memories: &mut BTreeMap<AgentId, MemoryStore>,
    mut speak: F,
) -> Vec<CommRecord>
where
    F: FnMut(AgentId, &MemoryStore) -> SpeakerTurn,
{
    let team = order.len() as u32;
    order
        .iter()
        .enumerate()
        .map(|(pos, &sender)| {
            let turn = speak(sender, &memories[&sender]);
            deliver_turn(step, round, phase, round * team + pos as u32, sender, turn, memories)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{DialogueDirection, Payload};

    fn memories(n: u32) -> BTreeMap<AgentId, MemoryStore> {
        (1..=n).map(|a| (a, MemoryStore::new())).collect()
    }

    #[test]
    fn token_proxy_and_hint() {
        assert_eq!(count_tokens("", None), 0);
        assert_eq!(count_tokens("abcdefghijklmnop", None), 4);
        assert_eq!(count_tokens("abcdefghijklmnopq", None), 5);
        assert_eq!(count_tokens("anything at all", Some(23)), 23);
    }

    #[test]
    fn broadcast_routes_to_everyone_else() {
        let mut mem = memories(3);
        let m = Message::new(1, 0, 0, 1, Recipients::All, "hello".into(), None);
        route(&m, &mut mem);
        assert_eq!(mem[&1].dialogue().len(), 1);
        assert!(matches!(
            mem[&1].dialogue()[0].direction,
            DialogueDirection::Sent { .. }
        ));
        assert_eq!(mem[&2].dialogue().len(), 1);
        assert_eq!(mem[&3].dialogue().len(), 1);
    }

    #[test]
    fn targeted_message_skips_others() {
        let mut mem = memories(3);
        let m = Message::new(1, 0, 0, 1, Recipients::Agents(vec![3]), "x".into(), None);
        route(&m, &mut mem);
        assert!(mem[&2].dialogue().is_empty());
        assert_eq!(mem[&3].dialogue().len(), 1);
    }

    #[test]
    fn later_speakers_see_earlier_messages() {
        let mut mem = memories(3);
        let mut seen = Vec::new();
        let records = run_comm_round(1, 0, CommPhase::Regular, &[1, 2, 3], &mut mem, |a, m| {
            seen.push((a, m.dialogue().len()));
            if a == 1 {
                SpeakerTurn {
                    decision: Some(CommDecision::Broadcast {
                        content: "found wine".into(),
                    }),
                    ..Default::default()
                }
            } else {
                SpeakerTurn::silent()
            }
        });
        assert_eq!(seen, vec![(1, 0), (2, 1), (3, 1)]);
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].messages.len(), 1);
        assert!(records[1].is_silence() && records[2].is_silence());
    }

    #[test]
    fn all_silent_round() {
        let mut mem = memories(3);
        let records = run_comm_round(1, 0, CommPhase::Regular, &[1, 2, 3], &mut mem, |_, _| {
            SpeakerTurn::silent()
        });
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(CommRecord::is_silence));
        let indices: Vec<_> = records.iter().map(|r| r.turn_index).collect();
        assert_eq!(indices, vec![0, 1, 2]);
    }

    #[test]
    fn distinct_payloads_become_separate_messages() {
        let mut mem = memories(3);
        let records = run_comm_round(2, 0, CommPhase::Regular, &[1, 2, 3], &mut mem, |a, _| {
            if a == 2 {
                SpeakerTurn {
                    decision: Some(CommDecision::Targeted {
                        payloads: vec![
                            Payload {
                                to: 1,
                                content: "check the kitchen".into(),
                            },
                            Payload {
                                to: 3,
                                content: "check the bathroom".into(),
                            },
                        ],
                    }),
                    usage_hint: Some(99),
                    ..Default::default()
                }
            } else {
                SpeakerTurn::silent()
            }
        });
        let msgs = &records[1].messages;
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].recipients, Recipients::Agents(vec![1]));
        assert_eq!(msgs[1].recipients, Recipients::Agents(vec![3]));
        // usage covers the whole reply, so per-payload counts fall back to the proxy
        assert_eq!(msgs[0].token_count, count_tokens("check the kitchen", None));
        assert_eq!(mem[&1].dialogue().len(), 1);
        assert_eq!(mem[&3].dialogue().len(), 1);
        assert_eq!(mem[&2].dialogue().len(), 2);
    }

    #[test]
    fn rotating_order() {
        let roster = [3, 1, 2];
        assert_eq!(TurnOrder::Ascending.order(&roster, 5), vec![1, 2, 3]);
        assert_eq!(TurnOrder::Rotating.order(&roster, 1), vec![1, 2, 3]);
        assert_eq!(TurnOrder::Rotating.order(&roster, 2), vec![2, 3, 1]);
        assert_eq!(TurnOrder::Rotating.order(&roster, 4), vec![1, 2, 3]);
    }
}
