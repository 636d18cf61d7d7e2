use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{sections, ReflectError, ReflectionRecord};
use crate::agents::{display_name, TemplateSet};
use crate::gateway::{Backend, ChatRequest, CoordinatorView, RecordSummary, Sidecar, SidecarPayload};
use crate::world::AgentId;

/// Output budget for the coordinator, which has to fit three instructions.
pub const COORDINATOR_MAX_OUTPUT_TOKENS: u32 = 512;

const TAGS: [&str; 6] = ["THOUGHTS", "CANDIDATE_1", "CANDIDATE_2", "CANDIDATE_3", "CHOICE", "RATIONALE"];

static AGENT_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bAgent[ _]([A-Za-z0-9]+)\b").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub thoughts: String,
    pub candidates: Vec<String>,
    pub chosen_index: usize,
    pub rationale: String,
}

impl CandidateSet {
    pub fn chosen(&self) -> &str {
        &self.candidates[self.chosen_index]
    }

    /// Agent names in the candidates that are not on the team, such as `Agent Z`.
    pub fn unknown_agents(&self, team: &[AgentId]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.candidates {
            for m in AGENT_NAME.captures_iter(c) {
                let known = m[1].parse::<AgentId>().is_ok_and(|id| team.contains(&id));
                if !known && !out.contains(&m[0].to_string()) {
                    out.push(m[0].to_string());
                }
            }
        }
        out
    }
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_candidates(reply: &str) -> Result<CandidateSet, String> {
    let found = sections(reply, &TAGS);
    let missing: Vec<&str> = TAGS
        .iter()
        .copied()
        .filter(|t| *t != "THOUGHTS" && *t != "RATIONALE" && !found.contains_key(*t))
        .collect();
    if !missing.is_empty() {
        return Err(format!("missing section(s): {}", missing.join(", ")));
    }
    let candidates: Vec<String> = (1..=3)
        .map(|i| normalized(&found[format!("CANDIDATE_{i}").as_str()]))
        .collect();
    if candidates.iter().any(String::is_empty) {
        return Err("a candidate is empty".into());
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if candidates[i] == candidates[j] {
                return Err(format!("CANDIDATE_{} and CANDIDATE_{} are identical", i + 1, j + 1));
            }
        }
    }
    let choice_text = found["CHOICE"].trim();
    let chosen_index = choice_text
        .chars()
        .find(|c| c.is_ascii_digit())
        .and_then(|c| c.to_digit(10))
        .filter(|d| (1..=3).contains(d))
        .ok_or_else(|| format!("CHOICE must be 1, 2 or 3, got `{choice_text}`"))? as usize
        - 1;
    Ok(CandidateSet {
        thoughts: found.get("THOUGHTS").map(|s| s.trim().to_string()).unwrap_or_default(),
        candidates,
        chosen_index,
        rationale: found.get("RATIONALE").map(|s| s.trim().to_string()).unwrap_or_default(),
    })
}

/// The instruction examples block: one entry per record with its results.
pub fn render_examples(history: &[ReflectionRecord]) -> String {
    let mut blocks = Vec::new();
    for r in history {
        let mut b = format!(
            "Example {}:\nInstruction: {}\nSteps taken: {}\nCommunication cost: {:.2} tokens per step",
            r.iteration + 1,
            if r.organization_prompt.is_empty() { "(none)" } else { &r.organization_prompt },
            r.steps,
            r.comm_cost
        );
        if let Some(c) = &r.critic_summary {
            b.push_str(&format!("\nCritic summary:\n{}", c.summary()));
        }
        if let Some(d) = &r.dialogue {
            b.push_str(&format!("\nDialogue:\n{d}"));
        }
        blocks.push(b);
    }
    blocks.join("\n\n")
}

/// Ask the coordinator for three new instructions and its pick. One re-ask on
/// an unusable reply.
pub fn reflect(
    templates: &TemplateSet,
    history: &[ReflectionRecord],
    team: &[AgentId],
    goal: &str,
    backend: &mut dyn Backend,
) -> Result<CandidateSet, ReflectError> {
    if history.is_empty() {
        return Err(ReflectError::EmptyHistory);
    }
    let values: BTreeMap<String, String> = [
        ("TEAM", team.iter().map(|a| display_name(*a)).collect::<Vec<_>>().join(", ")),
        ("GOAL", goal.to_string()),
        ("INSTRUCTION_EXAMPLES", render_examples(history)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let (system, user) = templates.coordinator.render(&values)?;
    let view = CoordinatorView {
        team: team.to_vec(),
        records: history
            .iter()
            .map(|r| RecordSummary {
                iteration: r.iteration,
                prompt: r.organization_prompt.clone(),
                steps: r.steps,
                comm_cost: r.comm_cost,
                ranking: r.critic_summary.as_ref().map(|c| c.leadership_ranking.clone()),
            })
            .collect(),
    };
    let request = ChatRequest::new(system, user)
        .with_max_output_tokens(COORDINATOR_MAX_OUTPUT_TOKENS)
        .with_sidecar(Sidecar {
            fields: values,
            payload: SidecarPayload::Coordinator(view),
        });
    let first = backend.complete(&request)?.content;
    let problem = match parse_candidates(&first) {
        Ok(c) => return Ok(c),
        Err(e) => e,
    };
    tracing::warn!("coordinator reply unusable ({problem}); asking again");
    let reask = request.reask(
        &first,
        &format!("Your answer could not be used: {problem}. Answer again with THOUGHTS, three distinct CANDIDATE_1..CANDIDATE_3 lines, CHOICE and RATIONALE."),
    );
    let second = backend.complete(&reask)?.content;
    parse_candidates(&second).map_err(|error| ReflectError::CoordinatorReply { error, reply: second })
}
