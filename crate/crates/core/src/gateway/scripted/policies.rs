//! Searching team policies: greedy, leaderful and noisy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::search::{order_text, parse_news, retell, rooms_in, Searcher};
use crate::agents::{CommDecision, DialogueDirection, Payload};
use crate::gateway::{AgentTask, AgentView};
use crate::world::{Action, AgentId};

fn action_reply(view: &AgentView, action: &Action) -> String {
    let label = view
        .observation
        .available_actions
        .iter()
        .find(|a| a.action == *action)
        .map_or("[wait]", |a| a.label.as_str());
    format!("ACTION: {label}")
}

fn vote_reply(candidate: AgentId) -> String {
    format!("VOTE: Agent_{candidate}")
}

/// Explores the lowest-index unexplored room, opens containers by id, grabs
/// needed items, delivers, and broadcasts what it finds.
#[derive(Debug, Default)]
pub(crate) struct Greedy {
    search: Searcher,
}

impl Greedy {
    pub fn respond(&mut self, task: AgentTask, view: &AgentView) -> String {
        self.search.update(view);
        match task {
            AgentTask::Communicate => match self.search.take_findings(view) {
                Some(content) => CommDecision::Broadcast { content }.serialize(),
                None => CommDecision::Silence.serialize(),
            },
            AgentTask::Act => action_reply(view, &self.search.act(view)),
            AgentTask::Elect => vote_reply(view.leader.unwrap_or(view.agent_id)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct LeaderfulParams {
    pub leader: AgentId,
}

impl Default for LeaderfulParams {
    fn default() -> Self {
        LeaderfulParams { leader: 1 }
    }
}

/// The leader splits the house into disjoint room assignments and sends each
/// follower its own order; followers search their rooms first and report to the
/// leader, who passes the team's news on to everyone.
#[derive(Debug)]
pub(crate) struct Leaderful {
    params: LeaderfulParams,
    search: Searcher,
    /// Leader whose order we last followed, or who we were when we gave orders.
    orders_from: Option<AgentId>,
    relayed: usize,
    /// Assignments handed out while leading, the leader's own last.
    plan: Vec<(AgentId, Vec<String>)>,
}

impl Leaderful {
    pub fn new(params: LeaderfulParams) -> Self {
        Leaderful {
            params,
            search: Searcher::default(),
            orders_from: None,
            relayed: 0,
            plan: Vec::new(),
        }
    }

    fn leader(&self, view: &AgentView) -> AgentId {
        view.leader.unwrap_or(self.params.leader)
    }

    /// Current room first for the leader, then the rest round-robin over followers and leader.
    pub(crate) fn partition(view: &AgentView) -> Vec<(AgentId, Vec<String>)> {
        let me = view.agent_id;
        let mut order: Vec<AgentId> = view.roster.iter().copied().filter(|a| *a != me).collect();
        order.sort_unstable();
        order.push(me);
        let mut plan: Vec<(AgentId, Vec<String>)> = order.iter().map(|a| (*a, Vec::new())).collect();
        let here = view.observation.room.clone();
        let mut rooms: Vec<String> = view.observation.rooms.clone();
        rooms.sort();
        rooms.retain(|r| *r != here);
        let n = plan.len();
        plan[n - 1].1.push(here);
        for (i, r) in rooms.into_iter().enumerate() {
            plan[i % n].1.push(r);
        }
        plan
    }

    fn follow_orders(&mut self, view: &AgentView) {
        let leader = self.leader(view);
        let order = view.recent_dialogue.iter().rev().find(|e| {
            matches!(e.direction, DialogueDirection::Received { from, .. } if from == leader)
                && e.content.starts_with(&format!("Agent_{}, please search", view.agent_id))
        });
        if let Some(e) = order {
            let rooms = rooms_in(&e.content, &view.observation.rooms);
            if !rooms.is_empty() {
                self.search.assigned = rooms;
                self.orders_from = Some(leader);
            }
        }
    }

    /// Once its own rooms are done, the leader helps the follower with the most
    /// rooms not yet reported searched, starting from that follower's last room.
    fn help(&mut self, view: &AgentView) {
        let Some((_, own)) = self.plan.iter().find(|(a, _)| *a == view.agent_id) else {
            return;
        };
        if own.iter().any(|r| !self.search.exhausted(r)) {
            return;
        }
        let target = self
            .plan
            .iter()
            .filter(|(a, _)| *a != view.agent_id)
            .map(|(_, rooms)| rooms.iter().filter(|r| !self.search.exhausted(r)).collect::<Vec<_>>())
            .filter(|left| !left.is_empty())
            .max_by_key(|left| left.len())
            .and_then(|left| left.last().map(|r| (*r).clone()));
        if let Some(room) = target {
            let mut assigned = own.clone();
            assigned.push(room);
            self.search.assigned = assigned;
        }
    }

    /// Followers' reports since the last relay, retold, plus the leader's own news.
    fn relay(&mut self, view: &AgentView) -> Option<String> {
        let mut parts: Vec<String> = view
            .unseen_dialogue(self.relayed)
            .iter()
            .filter_map(|e| match e.direction {
                DialogueDirection::Received { from, .. } if from != view.agent_id => {
                    let news = parse_news(&e.content, &view.observation.rooms);
                    (news != Default::default()).then(|| retell(&e.content, from))
                }
                _ => None,
            })
            .collect();
        self.relayed = view.dialogue_total;
        parts.extend(self.search.take_findings(view));
        (!parts.is_empty()).then(|| parts.join(" "))
    }

    pub fn respond(&mut self, task: AgentTask, view: &AgentView) -> String {
        self.search.update(view);
        let leader = self.leader(view);
        let i_lead = leader == view.agent_id;
        if !i_lead {
            self.follow_orders(view);
        } else if task == AgentTask::Act {
            self.help(view);
        }
        match task {
            AgentTask::Communicate => {
                if i_lead && self.orders_from != Some(view.agent_id) {
                    self.orders_from = Some(view.agent_id);
                    self.plan = Self::partition(view);
                    let mut payloads = Vec::new();
                    for (agent, rooms) in self.plan.clone() {
                        if agent == view.agent_id {
                            self.search.assigned = rooms;
                        } else {
                            payloads.push(Payload {
                                to: agent,
                                content: order_text(agent, &rooms),
                            });
                        }
                    }
                    // The leader's own findings are not announced while it gives orders.
                    let _ = self.search.take_findings(view);
                    if payloads.is_empty() {
                        return CommDecision::Silence.serialize();
                    }
                    return CommDecision::Targeted { payloads }.serialize();
                }
                if i_lead {
                    return match self.relay(view) {
                        Some(content) => CommDecision::Broadcast { content }.serialize(),
                        None => CommDecision::Silence.serialize(),
                    };
                }
                match self.search.take_findings(view) {
                    Some(content) if view.roster.contains(&leader) => CommDecision::Targeted {
                        payloads: vec![Payload { to: leader, content }],
                    }
                    .serialize(),
                    _ => CommDecision::Silence.serialize(),
                }
            }
            AgentTask::Act => action_reply(view, &self.search.act(view)),
            AgentTask::Elect => vote_reply(leader),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct NoisyParams {
    /// Chance that an original message is sent again, verbatim, on the next turn.
    pub duplicate_rate: f64,
    /// Chance that a turn issues a search order to a random teammate.
    pub conflict_rate: f64,
}

impl Default for NoisyParams {
    fn default() -> Self {
        NoisyParams {
            duplicate_rate: 0.5,
            conflict_rate: 0.3,
        }
    }
}

/// Greedy actions with wasteful talk: repeated messages and uncoordinated
/// orders, which recipients follow like any other order.
#[derive(Debug)]
pub(crate) struct Noisy {
    params: NoisyParams,
    search: Searcher,
    rng: ChaCha8Rng,
    pending: Option<CommDecision>,
    orders_seen: usize,
}

impl Noisy {
    pub fn new(params: NoisyParams, seed: u64) -> Self {
        Noisy {
            params,
            search: Searcher::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            orders_seen: 0,
        }
    }

    /// Comply with the newest search order addressed to us, whoever sent it.
    fn take_orders(&mut self, view: &AgentView) {
        let prefix = format!("Agent_{}, please search", view.agent_id);
        let order = view
            .unseen_dialogue(self.orders_seen)
            .iter()
            .rev()
            .find(|e| matches!(e.direction, DialogueDirection::Received { .. }) && e.content.starts_with(&prefix));
        if let Some(e) = order {
            let rooms = rooms_in(&e.content, &view.observation.rooms);
            if !rooms.is_empty() {
                self.search.assigned = rooms;
            }
        }
        self.orders_seen = view.dialogue_total;
    }

    fn original(&mut self, view: &AgentView) -> CommDecision {
        let findings = self.search.take_findings(view);
        let mates: Vec<AgentId> = view
            .roster
            .iter()
            .copied()
            .filter(|a| *a != view.agent_id)
            .collect();
        if !mates.is_empty() && self.rng.random_bool(self.params.conflict_rate) {
            let to = mates[self.rng.random_range(0..mates.len())];
            let rooms = &view.observation.rooms;
            let room = rooms[self.rng.random_range(0..rooms.len())].clone();
            return CommDecision::Targeted {
                payloads: vec![Payload {
                    to,
                    content: order_text(to, &[room]),
                }],
            };
        }
        match findings {
            Some(content) => CommDecision::Broadcast { content },
            None => CommDecision::Silence,
        }
    }

    pub fn respond(&mut self, task: AgentTask, view: &AgentView) -> String {
        self.search.update(view);
        self.take_orders(view);
        match task {
            AgentTask::Communicate => {
                if let Some(dup) = self.pending.take() {
                    return dup.serialize();
                }
                let d = self.original(view);
                if d != CommDecision::Silence && self.rng.random_bool(self.params.duplicate_rate) {
                    self.pending = Some(d.clone());
                }
                d.serialize()
            }
            AgentTask::Act => action_reply(view, &self.search.act(view)),
            AgentTask::Elect => {
                let k = view.roster[self.rng.random_range(0..view.roster.len())];
                vote_reply(k)
            }
        }
    }
}
