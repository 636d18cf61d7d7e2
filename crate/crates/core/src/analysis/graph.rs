use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::agents::display_name;
use crate::comms::Message;
use crate::world::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub agent: AgentId,
    pub leader: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: AgentId,
    pub b: AgentId,
    pub weight: u64,
}

/// Undirected communication graph; edge weight is the tokens exchanged by the pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// A broadcast adds its full token count to the edge between the sender and each recipient.
pub fn comm_graph(messages: &[&Message], roster: &[AgentId], leader: Option<AgentId>) -> CommGraph {
    let mut w: BTreeMap<(AgentId, AgentId), u64> = BTreeMap::new();
    for m in messages {
        for r in m.recipients.resolve(m.sender, roster) {
            *w.entry((m.sender.min(r), m.sender.max(r))).or_default() += u64::from(m.token_count);
        }
    }
    let mut ids = roster.to_vec();
    ids.sort_unstable();
    CommGraph {
        nodes: ids
            .iter()
            .map(|a| GraphNode {
                agent: *a,
                leader: Some(*a) == leader,
            })
            .collect(),
        edges: w
            .into_iter()
            .filter(|(_, weight)| *weight > 0)
            .map(|((a, b), weight)| GraphEdge { a, b, weight })
            .collect(),
    }
}

impl CommGraph {
    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Sum of the weights of edges touching `agent`.
    pub fn incident_weight(&self, agent: AgentId) -> u64 {
        self.edges
            .iter()
            .filter(|e| e.a == agent || e.b == agent)
            .map(|e| e.weight)
            .sum()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph comm {\n");
        for n in &self.nodes {
            let shape = if n.leader { ", shape=doublecircle" } else { "" };
            let _ = writeln!(out, "  a{} [label=\"{}\"{shape}];", n.agent, display_name(n.agent));
        }
        for e in &self.edges {
            let _ = writeln!(out, "  a{} -- a{} [weight={w}, label=\"{w}\"];", e.a, e.b, w = e.weight);
        }
        out.push_str("}\n");
        out
    }

    /// `{"nodes": [...], "adjacency": {"1": [{"agent": 2, "weight": 10}], ...}}`
    pub fn to_json(&self) -> serde_json::Value {
        let mut adj: BTreeMap<String, Vec<serde_json::Value>> =
            self.nodes.iter().map(|n| (n.agent.to_string(), Vec::new())).collect();
        for e in &self.edges {
            for (from, to) in [(e.a, e.b), (e.b, e.a)] {
                adj.entry(from.to_string())
                    .or_default()
                    .push(serde_json::json!({ "agent": to, "weight": e.weight }));
            }
        }
        serde_json::json!({ "nodes": self.nodes, "adjacency": adj })
    }
}
