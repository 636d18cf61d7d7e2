use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::comms::{CommRecord, Message};
use crate::world::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTokens {
    pub a: AgentId,
    pub b: AgentId,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Step at which the goal was met, or `max_steps` when it never was.
    pub steps_to_completion: u32,
    pub steps_elapsed: u32,
    pub completed: bool,
    /// Set when the episode did not complete, so the step count is a cap.
    pub flagged: bool,
    pub message_count: u64,
    /// Generated communication volume: each message counted once.
    pub total_tokens: u64,
    /// Delivered volume: each message counted once per recipient.
    pub total_tokens_per_recipient: u64,
    pub avg_tokens_per_step: f64,
    #[serde(with = "crate::id_keys")]
    pub per_agent_tokens: BTreeMap<AgentId, u64>,
    /// Unordered pairs with `a < b`; broadcasts count once per sender-recipient pair.
    pub per_pair_tokens: Vec<PairTokens>,
}

fn recipients(m: &Message, roster: &[AgentId]) -> Vec<AgentId> {
    m.recipients.resolve(m.sender, roster)
}

impl EpisodeMetrics {
    /// Metrics from the communication log alone.
    pub fn compute<'a>(
        comm: impl IntoIterator<Item = &'a CommRecord>,
        roster: &[AgentId],
        steps_elapsed: u32,
        completed: bool,
        max_steps: u32,
    ) -> Self {
        let mut total = 0u64;
        let mut per_recipient = 0u64;
        let mut count = 0u64;
        let mut per_agent: BTreeMap<AgentId, u64> = roster.iter().map(|a| (*a, 0)).collect();
        let mut pairs: BTreeMap<(AgentId, AgentId), u64> = BTreeMap::new();
        for rec in comm {
            for m in &rec.messages {
                let t = u64::from(m.token_count);
                count += 1;
                total += t;
                *per_agent.entry(m.sender).or_default() += t;
                for r in recipients(m, roster) {
                    per_recipient += t;
                    let key = (m.sender.min(r), m.sender.max(r));
                    *pairs.entry(key).or_default() += t;
                }
            }
        }
        let avg = if steps_elapsed == 0 {
            0.0
        } else {
            total as f64 / f64::from(steps_elapsed)
        };
        EpisodeMetrics {
            steps_to_completion: if completed { steps_elapsed } else { max_steps },
            steps_elapsed,
            completed,
            flagged: !completed,
            message_count: count,
            total_tokens: total,
            total_tokens_per_recipient: per_recipient,
            avg_tokens_per_step: avg,
            per_agent_tokens: per_agent,
            per_pair_tokens: pairs
                .into_iter()
                .map(|((a, b), tokens)| PairTokens { a, b, tokens })
                .collect(),
        }
    }
}
