use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{sections, ReflectError};
use crate::agents::{display_name, TemplateSet};
use crate::comms::Recipients;
use crate::gateway::{AgentActivity, Backend, ChatRequest, CriticView, Sidecar, SidecarPayload};
use crate::orchestrator::{Record, Trajectory};
use crate::world::{Action, ActionOutcome, AgentId, World};

/// Default number of trajectory events shown to the critic.
pub const DEFAULT_EVENT_BUDGET: usize = 120;

static AGENT_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bagent[ _]?(\d+)").unwrap());

const CRITIC_TAGS: [&str; 4] = ["KEY_STEPS", "AGENT_EVAL", "RANKING", "PROBLEMS"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticReport {
    pub key_steps: String,
    #[serde(with = "crate::id_keys")]
    pub per_agent_eval: BTreeMap<AgentId, String>,
    pub leadership_ranking: Vec<AgentId>,
    pub problems: Vec<String>,
}

impl CriticReport {
    /// Compact text for the coordinator's instruction examples.
    pub fn summary(&self) -> String {
        let ranking: Vec<String> = self.leadership_ranking.iter().map(|a| display_name(*a)).collect();
        let mut out = format!("Key steps: {}\nLeadership ranking: {}", self.key_steps, ranking.join(" > "));
        for (a, e) in &self.per_agent_eval {
            out.push_str(&format!("\n{}: {e}", display_name(*a)));
        }
        if !self.problems.is_empty() {
            out.push_str("\nProblems:");
            for p in &self.problems {
                out.push_str(&format!("\n- {p}"));
            }
        }
        out
    }
}

/// Parse the four tagged sections of a critic reply. The ranking must name
/// every team member exactly once.
pub fn parse_critic_report(reply: &str, team: &[AgentId]) -> Result<CriticReport, String> {
    let found = sections(reply, &CRITIC_TAGS);
    let missing: Vec<&str> = CRITIC_TAGS
        .iter()
        .copied()
        .filter(|t| !found.contains_key(*t))
        .collect();
    if !missing.is_empty() {
        return Err(format!("missing section(s): {}", missing.join(", ")));
    }
    let mut per_agent_eval = BTreeMap::new();
    for line in found["AGENT_EVAL"].lines() {
        let line = line.trim().trim_start_matches(['-', '*', ' ']);
        let Some((who, text)) = line.split_once(':') else {
            continue;
        };
        if let Some(c) = AGENT_REF.captures(who) {
            if let Ok(id) = c[1].parse::<AgentId>() {
                per_agent_eval.insert(id, text.trim().to_string());
            }
        }
    }
    let ranking: Vec<AgentId> = AGENT_REF
        .captures_iter(&found["RANKING"])
        .filter_map(|c| c[1].parse().ok())
        .collect();
    let mut sorted = ranking.clone();
    sorted.sort_unstable();
    let mut expected = team.to_vec();
    expected.sort_unstable();
    if sorted != expected {
        return Err(format!(
            "RANKING must list each of {} exactly once, got {:?}",
            team.iter().map(|a| display_name(*a)).collect::<Vec<_>>().join(", "),
            ranking
        ));
    }
    let problems = found["PROBLEMS"]
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim())
        .map(|l| l.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')').trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    Ok(CriticReport {
        key_steps: found["KEY_STEPS"].trim().to_string(),
        per_agent_eval,
        leadership_ranking: ranking,
        problems,
    })
}

fn recipients_text(r: &Recipients) -> String {
    match r {
        Recipients::All => "all".to_string(),
        Recipients::Agents(_) => r.describe(),
    }
}

/// One line per message, action and election, oldest first. Over `budget`
/// lines, the oldest action lines are dropped first; messages are always kept.
pub fn render_trajectory(trajectory: &Trajectory, budget: usize) -> String {
    enum Kind {
        Message,
        Other,
    }
    let mut lines: Vec<(Kind, String)> = Vec::new();
    for e in &trajectory.events {
        match e {
            Record::Comm(c) => {
                for m in &c.messages {
                    lines.push((
                        Kind::Message,
                        format!(
                            "Step {} | {} -> {}: {}",
                            m.step,
                            display_name(m.sender),
                            recipients_text(&m.recipients),
                            m.content
                        ),
                    ));
                }
            }
            Record::Action(a) => {
                let outcome = match &a.outcome {
                    ActionOutcome::Success => "success".to_string(),
                    ActionOutcome::Failure { reason } => format!("failed ({reason})"),
                };
                lines.push((
                    Kind::Other,
                    format!("Step {} | {} does {}: {outcome}", a.step, display_name(a.agent), a.label),
                ));
            }
            Record::Election(r) => {
                let winner = r.tally.leader.map_or_else(|| "nobody".to_string(), display_name);
                lines.push((Kind::Other, format!("Step {} | election: {winner} leads", r.step)));
            }
            _ => {}
        }
    }
    let mut drop = lines.len().saturating_sub(budget);
    let mut omitted = 0;
    let kept: Vec<String> = lines
        .into_iter()
        .filter_map(|(k, l)| match k {
            Kind::Other if drop > 0 => {
                drop -= 1;
                omitted += 1;
                None
            }
            _ => Some(l),
        })
        .collect();
    let mut out = String::new();
    if omitted > 0 {
        out.push_str(&format!("[{omitted} earlier action records omitted]\n"));
    }
    out.push_str(&kept.join("\n"));
    out
}

/// Per-agent counts the scripted critic ranks by.
pub fn activity(trajectory: &Trajectory, world: &World) -> Vec<AgentActivity> {
    let targets: Vec<_> = world.goal().predicates.iter().map(|p| p.target_surface_id).collect();
    let mut acts: BTreeMap<AgentId, AgentActivity> = trajectory
        .header
        .config
        .roster()
        .into_iter()
        .map(|a| {
            (
                a,
                AgentActivity {
                    agent: a,
                    messages_sent: 0,
                    tokens_sent: 0,
                    successful_actions: 0,
                    failed_actions: 0,
                    items_delivered: 0,
                    waits: 0,
                },
            )
        })
        .collect();
    for c in trajectory.comm_records() {
        if let Some(a) = acts.get_mut(&c.sender) {
            a.messages_sent += c.messages.len() as u32;
            a.tokens_sent += c.messages.iter().map(|m| m.token_count).sum::<u32>();
        }
    }
    for r in trajectory.action_records() {
        let Some(a) = acts.get_mut(&r.agent) else {
            continue;
        };
        match (&r.action, &r.outcome) {
            (Action::Noop, _) => a.waits += 1,
            (_, ActionOutcome::Failure { .. }) => a.failed_actions += 1,
            (action, ActionOutcome::Success) => {
                a.successful_actions += 1;
                if let Action::Put { destination, .. } = action {
                    if targets.contains(destination) {
                        a.items_delivered += 1;
                    }
                }
            }
        }
    }
    acts.into_values().collect()
}

/// Ask the critic to evaluate one episode. One re-ask on an unusable reply.
pub fn criticize(
    templates: &TemplateSet,
    trajectory: &Trajectory,
    organization_prompt: &str,
    world: &World,
    backend: &mut dyn Backend,
    budget: usize,
) -> Result<CriticReport, ReflectError> {
    let team = trajectory.header.config.roster();
    let values: BTreeMap<String, String> = [
        ("TEAM", team.iter().map(|a| display_name(*a)).collect::<Vec<_>>().join(", ")),
        ("GOAL", world.goal_text()),
        ("ORGANIZATION_INSTRUCTION", organization_prompt.to_string()),
        ("TRAJECTORIES", render_trajectory(trajectory, budget)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let (system, user) = templates.critic.render(&values)?;
    let view = CriticView {
        team: team.clone(),
        leader: trajectory.footer.leadership.current_leader,
        steps: trajectory.footer.metrics.steps_elapsed,
        completed: trajectory.footer.metrics.completed,
        activity: activity(trajectory, world),
    };
    let request = ChatRequest::new(system, user).with_sidecar(Sidecar {
        fields: values,
        payload: SidecarPayload::Critic(view),
    });
    let first = backend.complete(&request)?.content;
    let problem = match parse_critic_report(&first, &team) {
        Ok(r) => return Ok(r),
        Err(e) => e,
    };
    tracing::warn!("critic reply unusable ({problem}); asking again");
    let reask = request.reask(
        &first,
        &format!("Your answer could not be used: {problem}. Answer again with all four sections KEY_STEPS, AGENT_EVAL, RANKING and PROBLEMS."),
    );
    let second = backend.complete(&reask)?.content;
    parse_critic_report(&second, &team).map_err(|error| ReflectError::CriticReply { error, reply: second })
}
