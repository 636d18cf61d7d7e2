//! Scripted stand-ins for the critic, coordinator and behavior classifier.

use serde::Deserialize;

use crate::gateway::{CoordinatorView, CriticView};
use crate::world::AgentId;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct CriticParams {
    /// Leave out the RANKING section on the first call, to exercise the re-ask path.
    pub omit_ranking_once: bool,
}

#[derive(Debug)]
pub(crate) struct Critic {
    params: CriticParams,
    calls: u32,
}

impl Critic {
    pub fn new(params: CriticParams) -> Self {
        Critic { params, calls: 0 }
    }

    /// Rank by items delivered, then successful actions, then messages sent, then id.
    pub(crate) fn ranking(view: &CriticView) -> Vec<AgentId> {
        let mut acts = view.activity.clone();
        acts.sort_by(|a, b| {
            b.items_delivered
                .cmp(&a.items_delivered)
                .then(b.successful_actions.cmp(&a.successful_actions))
                .then(b.messages_sent.cmp(&a.messages_sent))
                .then(a.agent.cmp(&b.agent))
        });
        let mut ids: Vec<AgentId> = acts.iter().map(|a| a.agent).collect();
        for a in &view.team {
            if !ids.contains(a) {
                ids.push(*a);
            }
        }
        ids
    }

    pub fn respond(&mut self, view: &CriticView) -> String {
        self.calls += 1;
        let ranking = Self::ranking(view);
        let mut out = String::from("KEY_STEPS:\n");
        out.push_str(&if view.completed {
            format!("The team completed the task in {} steps.", view.steps)
        } else {
            format!("The team did not complete the task within {} steps.", view.steps)
        });
        out.push_str("\nAGENT_EVAL:\n");
        for a in &view.activity {
            out.push_str(&format!(
                "Agent_{}: delivered {} items with {} successful and {} failed actions, waited {} times, sent {} messages.\n",
                a.agent, a.items_delivered, a.successful_actions, a.failed_actions, a.waits, a.messages_sent
            ));
        }
        if !(self.params.omit_ranking_once && self.calls == 1) {
            let names: Vec<String> = ranking.iter().map(|a| format!("Agent_{a}")).collect();
            out.push_str(&format!("RANKING: {}\n", names.join(" > ")));
        }
        out.push_str("PROBLEMS:\n");
        let mut problems = Vec::new();
        for a in &view.activity {
            if a.waits > view.steps / 4 {
                problems.push(format!("- Agent_{} was idle for {} steps.", a.agent, a.waits));
            }
            if a.failed_actions > 0 {
                problems.push(format!(
                    "- Agent_{} attempted {} actions that failed.",
                    a.agent, a.failed_actions
                ));
            }
        }
        if problems.is_empty() {
            problems.push("- No major problems.".into());
        }
        out.push_str(&problems.join("\n"));
        out
    }
}

/// Proposes three leadership structures around the best-ranked agent and
/// adopts the first not yet tried, else the cheapest tried one.
#[derive(Debug, Default)]
pub(crate) struct Coordinator;

impl Coordinator {
    pub(crate) fn candidates(view: &CoordinatorView) -> [String; 3] {
        let leader = view
            .records
            .last()
            .and_then(|r| r.ranking.as_ref())
            .and_then(|r| r.first().copied())
            .or_else(|| view.team.first().copied())
            .unwrap_or(1);
        [
            format!("Agent_{leader} as the leader to coordinate the task. Agent_{leader} assigns each teammate different rooms to search."),
            format!("Agent_{leader} as the leader to coordinate the task. Teammates report every item they find to Agent_{leader} and only speak when they have news."),
            format!("Agent_{leader} as the leader to coordinate the task. If the leader's instructions are not right, teammates can correct the leader."),
        ]
    }

    pub fn respond(&mut self, view: &CoordinatorView) -> String {
        let cands = Self::candidates(view);
        let untried = cands
            .iter()
            .position(|c| view.records.iter().all(|r| r.prompt != *c));
        let (choice, why) = match untried {
            Some(i) => (i, "it has not been tried yet".to_string()),
            None => {
                let best = view
                    .records
                    .iter()
                    .filter_map(|r| cands.iter().position(|c| *c == r.prompt).map(|i| (r.steps, i)))
                    .min()
                    .map_or(0, |(_, i)| i);
                (best, "it took the fewest steps so far".to_string())
            }
        };
        let last = view.records.last();
        let thoughts = match last {
            Some(r) => format!(
                "The last instruction took {} steps at a cost of {:.2} tokens per step.",
                r.steps, r.comm_cost
            ),
            None => "No previous episodes.".to_string(),
        };
        format!(
            "THOUGHTS: {thoughts}\nCANDIDATE_1: {}\nCANDIDATE_2: {}\nCANDIDATE_3: {}\nCHOICE: {}\nRATIONALE: Candidate {} is chosen because {why}.",
            cands[0],
            cands[1],
            cands[2],
            choice + 1,
            choice + 1
        )
    }
}

/// Keyword rubric for the three behavior labels.
pub(crate) fn rubric_labels(dialogue: &str) -> [bool; 3] {
    let t = dialogue.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| t.contains(w));
    let info = has(&[
        "i found", "i have", "i am in", "i'm in", "i am at", "i'm at", "i've", "is in the", "are in the",
        "there is", "there are", "i will", "i'll", "placed", "i am heading", "i'm heading", "haven't found",
        "i am going", "i'm going", "located",
    ]);
    let lead = has(&[
        "please", "go to", "you should", "can you", "could you", "let's", "assign", "you take", "help me",
        "check the", "search the", "bring",
    ]);
    let request = t.contains('?') || has(&["let me know", "what should", "tell me", "update me"]);
    [info, lead, request]
}

pub(crate) fn labels_reply(labels: [bool; 3]) -> String {
    format!(
        "LABEL1: {}\nLABEL2: {}\nLABEL3: {}",
        u8::from(labels[0]),
        u8::from(labels[1]),
        u8::from(labels[2])
    )
}
