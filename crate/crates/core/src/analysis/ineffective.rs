use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::comms::{Message, Recipients};
use crate::world::AgentId;

/// Two messages within this many steps of each other share a window.
pub const WINDOW_STEPS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IneffectiveCounts {
    pub duplicated: usize,
    pub repeated_command: usize,
    pub conflicting_command: usize,
    pub ignored_request: usize,
}

static VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(search|check|explore|go to|look in|look at|open|grab|bring|put|find)\s+(?:the\s+)?([a-z][a-z_]*(?:\s+and\s+(?:the\s+)?[a-z][a-z_]*)?)").unwrap()
});
static ADDRESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*Agent[ _]?(\d+)\s*,").unwrap());

fn normalize(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// An order: the agents it addresses and what it asks them to work on.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Command {
    step: u32,
    addressees: Vec<AgentId>,
    target: String,
}

fn command(m: &Message, roster: &[AgentId]) -> Option<Command> {
    let content = m.content.as_str();
    let (addressees, body) = match (&m.recipients, ADDRESS.captures(content)) {
        (_, Some(c)) => (vec![c[1].parse().ok()?], &content[c[0].len()..]),
        (Recipients::Agents(ids), None) => (ids.clone(), content),
        (Recipients::All, None) => return None,
    };
    // Reports like "I will check the kitchen" describe the sender's own plan.
    let cap = VERB.captures(body)?;
    let before = body[..cap.get(0)?.start()].to_lowercase();
    if before.contains("i will") || before.contains("i'll") || before.contains("i am going") || before.contains("i'm going") {
        return None;
    }
    let addressees: Vec<AgentId> = addressees.into_iter().filter(|a| *a != m.sender && roster.contains(a)).collect();
    if addressees.is_empty() {
        return None;
    }
    let target = normalize(&cap[2]).replace("the ", "");
    Some(Command {
        step: m.step,
        addressees,
        target,
    })
}

/// Rule-based counts of ineffective communication in a message log.
///
/// * duplicated: same normalized content as an earlier message within the window, from any sender
/// * repeated command: same target ordered to the same addressee again within the window
/// * conflicting command: a different target ordered to the same addressee within the window
/// * ignored request: a question to specific agents that none of them answers within the window
pub fn detect_ineffective(messages: &[&Message], roster: &[AgentId]) -> IneffectiveCounts {
    let mut counts = IneffectiveCounts::default();
    let norm: Vec<String> = messages.iter().map(|m| normalize(&m.content)).collect();
    for (i, m) in messages.iter().enumerate() {
        let dup = (0..i)
            .rev()
            .take_while(|&j| m.step - messages[j].step < WINDOW_STEPS)
            .any(|j| !norm[i].is_empty() && norm[j] == norm[i]);
        if dup {
            counts.duplicated += 1;
        }
    }
    let mut last_order: BTreeMap<AgentId, Command> = BTreeMap::new();
    for (i, m) in messages.iter().enumerate() {
        // A verbatim duplicate is already counted; do not count it again as a command.
        let is_dup = (0..i).rev().take_while(|&j| m.step - messages[j].step < WINDOW_STEPS).any(|j| norm[j] == norm[i]);
        let Some(c) = command(m, roster) else {
            continue;
        };
        for a in &c.addressees {
            if let Some(prev) = last_order.get(a) {
                if c.step - prev.step < WINDOW_STEPS && !is_dup {
                    if prev.target == c.target {
                        counts.repeated_command += 1;
                    } else {
                        counts.conflicting_command += 1;
                    }
                }
            }
            last_order.insert(*a, c.clone());
        }
    }
    for (i, m) in messages.iter().enumerate() {
        let Recipients::Agents(to) = &m.recipients else {
            continue;
        };
        if !m.content.contains('?') {
            continue;
        }
        let answered = messages[i + 1..]
            .iter()
            .take_while(|r| r.step - m.step < WINDOW_STEPS)
            .any(|r| to.contains(&r.sender) && r.recipients.resolve(r.sender, roster).contains(&m.sender));
        if !answered {
            counts.ignored_request += 1;
        }
    }
    counts
}
