//! Line-oriented reply grammar shared by models, scripted policies and humans.
//!
//! ```text
//! SEND TO ALL: <message>          broadcast
//! SEND TO Agent_<k>: <message>    one line per targeted recipient
//! SILENCE                         nothing to say (also implied by no send line)
//! ACTION: <action label>
//! VOTE: Agent_<k>
//! ```

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::world::{Action, AgentId, AvailableAction};

static SEND_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*>`-]*send\s+to\s+(all|agent[\s_]*(\d+))\s*[:\-]\s*(.*?)[\s*`]*$").unwrap()
});
static ACTION_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\s*>`-]*action\s*:\s*(.*?)[\s*`]*$").unwrap());
static VOTE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\s*>`-]*vote\s*:\s*agent[\s_]*(\d+)").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub to: AgentId,
    pub content: String,
}

/// What an agent decided to say in one communication turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CommDecision {
    Broadcast { content: String },
    Targeted { payloads: Vec<Payload> },
    Silence,
}

impl CommDecision {
    /// Emit the decision in the reply grammar.
    pub fn serialize(&self) -> String {
        match self {
            CommDecision::Broadcast { content } => format!("SEND TO ALL: {content}"),
            CommDecision::Targeted { payloads } => payloads
                .iter()
                .map(|p| format!("SEND TO Agent_{}: {}", p.to, p.content))
                .collect::<Vec<_>>()
                .join("\n"),
            CommDecision::Silence => "SILENCE".to_string(),
        }
    }

    /// Structural validity for a sender within a roster: targeted payloads are
    /// non-empty, unique, never addressed to the sender, and contents are non-blank.
    pub fn validate(&self, sender: AgentId, roster: &[AgentId]) -> Result<(), String> {
        match self {
            CommDecision::Silence => Ok(()),
            CommDecision::Broadcast { content } => {
                if content.trim().is_empty() {
                    Err("broadcast content is empty".into())
                } else if content.contains('\n') {
                    Err("message content must be a single line".into())
                } else {
                    Ok(())
                }
            }
            CommDecision::Targeted { payloads } => {
                if payloads.is_empty() {
                    return Err("targeted message has no recipients".into());
                }
                let mut seen = BTreeSet::new();
                for (i, p) in payloads.iter().enumerate() {
                    if p.to == sender {
                        return Err(format!("payloads[{i}].to: cannot message yourself"));
                    }
                    if !roster.contains(&p.to) {
                        return Err(format!("payloads[{i}].to: Agent_{} is not on the team", p.to));
                    }
                    if !seen.insert(p.to) {
                        return Err(format!("payloads[{i}].to: duplicate recipient Agent_{}", p.to));
                    }
                    if p.content.trim().is_empty() {
                        return Err(format!("payloads[{i}].content: empty"));
                    }
                    if p.content.contains('\n') {
                        return Err(format!("payloads[{i}].content: must be a single line"));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Parse a communication reply. Never fails: unusable payloads are dropped and
/// reported as warnings, and a reply without send lines is silence.
pub fn parse_comm_reply(
    raw: &str,
    roster: &[AgentId],
    sender: AgentId,
) -> (CommDecision, Vec<String>) {
    let mut warnings = Vec::new();
    let mut broadcast: Option<String> = None;
    let mut payloads: Vec<Payload> = Vec::new();
    for line in raw.lines() {
        let Some(caps) = SEND_LINE.captures(line) else {
            continue;
        };
        let content = caps[3].trim().to_string();
        if content.is_empty() {
            warnings.push(format!("ignored empty message line `{}`", line.trim()));
            continue;
        }
        match caps.get(2) {
            None => {
                if broadcast.is_some() {
                    warnings.push("ignored extra SEND TO ALL line".to_string());
                } else {
                    broadcast = Some(content);
                }
            }
            Some(id) => {
                let Ok(to) = id.as_str().parse::<AgentId>() else {
                    warnings.push(format!("unparsable recipient in `{}`", line.trim()));
                    continue;
                };
                if to == sender {
                    warnings.push(format!("dropped message from Agent_{sender} to itself"));
                } else if !roster.contains(&to) {
                    warnings.push(format!("dropped message to unknown recipient Agent_{to}"));
                } else if payloads.iter().any(|p| p.to == to) {
                    warnings.push(format!("dropped duplicate message to Agent_{to}"));
                } else {
                    payloads.push(Payload { to, content });
                }
            }
        }
    }
    let decision = match broadcast {
        Some(content) => {
            if !payloads.is_empty() {
                warnings.push("targeted lines ignored because the reply also broadcasts".into());
            }
            CommDecision::Broadcast { content }
        }
        None if !payloads.is_empty() => CommDecision::Targeted { payloads },
        None => CommDecision::Silence,
    };
    (decision, warnings)
}

/// Match the first `ACTION:` line against the available labels, case-insensitively.
pub fn parse_action_reply(raw: &str, available: &[AvailableAction]) -> Option<Action> {
    let choice = raw.lines().find_map(|l| ACTION_LINE.captures(l))?;
    let wanted = choice[1].trim().trim_end_matches('.').trim();
    available
        .iter()
        .find(|a| a.label.eq_ignore_ascii_case(wanted))
        .map(|a| a.action.clone())
}

/// First `VOTE: Agent_k` line, if any.
pub fn parse_vote(raw: &str) -> Option<AgentId> {
    raw.lines()
        .find_map(|l| VOTE_LINE.captures(l))
        .and_then(|c| c[1].parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ROSTER: [AgentId; 3] = [1, 2, 3];

    #[test]
    fn broadcast_line() {
        let (d, w) = parse_comm_reply("SEND TO ALL: I found wine in the kitchen.", &ROSTER, 1);
        assert_eq!(
            d,
            CommDecision::Broadcast {
                content: "I found wine in the kitchen.".into()
            }
        );
        assert!(w.is_empty());
    }

    #[test]
    fn targeted_lines_keep_distinct_payloads() {
        let (d, _) = parse_comm_reply(
            "SEND TO Agent_2: check bedroom\nSEND TO Agent_3: check bathroom",
            &ROSTER,
            1,
        );
        assert_eq!(
            d,
            CommDecision::Targeted {
                payloads: vec![
                    Payload {
                        to: 2,
                        content: "check bedroom".into()
                    },
                    Payload {
                        to: 3,
                        content: "check bathroom".into()
                    },
                ]
            }
        );
    }

    #[test]
    fn silence_keyword_and_no_send_line() {
        assert_eq!(
            parse_comm_reply("I will stay quiet. SILENCE", &ROSTER, 3).0,
            CommDecision::Silence
        );
        assert_eq!(parse_comm_reply("", &ROSTER, 3).0, CommDecision::Silence);
    }

    #[test]
    fn unknown_recipient_dropped_with_warning() {
        let (d, w) = parse_comm_reply(
            "SEND TO Agent_7: hello\nSEND TO Agent_2: go to the kitchen",
            &ROSTER,
            1,
        );
        assert_eq!(
            d,
            CommDecision::Targeted {
                payloads: vec![Payload {
                    to: 2,
                    content: "go to the kitchen".into()
                }]
            }
        );
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("Agent_7"));
    }

    #[test]
    fn self_addressed_and_duplicate_recipients_dropped() {
        let (d, w) = parse_comm_reply(
            "SEND TO Agent_1: note to self\nSEND TO Agent_2: a\nsend to agent 2: b",
            &ROSTER,
            1,
        );
        assert_eq!(
            d,
            CommDecision::Targeted {
                payloads: vec![Payload {
                    to: 2,
                    content: "a".into()
                }]
            }
        );
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn action_extracted_after_reasoning() {
        let available = vec![
            AvailableAction {
                label: "[open] <kitchencabinet> (101)".into(),
                action: Action::Open { target: 101 },
            },
            AvailableAction {
                label: "[wait]".into(),
                action: Action::Noop,
            },
        ];
        assert_eq!(
            parse_action_reply("ACTION: [open] <kitchencabinet> (101)", &available),
            Some(Action::Open { target: 101 })
        );
        assert_eq!(
            parse_action_reply(
                "The wine might be in the cabinet.\nSo I open it.\naction: [OPEN] <KitchenCabinet> (101).",
                &available
            ),
            Some(Action::Open { target: 101 })
        );
        assert_eq!(
            parse_action_reply("ACTION: [grab] <wine> (999)", &available),
            None
        );
        // only the first ACTION line counts
        assert_eq!(
            parse_action_reply("ACTION: [jump]\nACTION: [wait]", &available),
            None
        );
    }

    #[test]
    fn votes() {
        assert_eq!(parse_vote("I support Agent_2.\nVOTE: Agent_2"), Some(2));
        assert_eq!(parse_vote("vote: agent 3"), Some(3));
        assert_eq!(parse_vote("I vote for Agent_2"), None);
    }

    #[test]
    fn validate_rejects_malformed_human_submissions() {
        let bad = CommDecision::Targeted { payloads: vec![] };
        assert!(bad.validate(1, &ROSTER).is_err());
        let bad = CommDecision::Targeted {
            payloads: vec![Payload {
                to: 9,
                content: "x".into(),
            }],
        };
        assert!(bad.validate(1, &ROSTER).unwrap_err().contains("not on the team"));
        let ok = CommDecision::Broadcast {
            content: "Check the bathroom, Agent_3".into(),
        };
        assert!(ok.validate(1, &ROSTER).is_ok());
    }

    fn content() -> impl Strategy<Value = String> {
        "[A-Za-z0-9][A-Za-z0-9 ,.!?'<>()_-]{0,60}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty", |s| !s.is_empty())
    }

    fn decision() -> impl Strategy<Value = CommDecision> {
        prop_oneof![
            Just(CommDecision::Silence),
            content().prop_map(|content| CommDecision::Broadcast { content }),
            (proptest::sample::subsequence(vec![2u32, 3, 4, 5], 1..=4), proptest::collection::vec(content(), 4))
                .prop_map(|(to, texts)| CommDecision::Targeted {
                    payloads: to
                        .into_iter()
                        .zip(texts)
                        .map(|(to, content)| Payload { to, content })
                        .collect()
                }),
        ]
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(d in decision()) {
            let roster = [1, 2, 3, 4, 5];
            let (parsed, warnings) = parse_comm_reply(&d.serialize(), &roster, 1);
            prop_assert_eq!(parsed, d);
            prop_assert!(warnings.is_empty());
        }

        #[test]
        fn parsing_is_total(raw in "\\PC{0,400}") {
            let _ = parse_comm_reply(&raw, &ROSTER, 1);
            let _ = parse_action_reply(&raw, &[]);
            let _ = parse_vote(&raw);
        }
    }
}
