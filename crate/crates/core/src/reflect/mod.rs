//! Criticize-reflect loop: a critic reviews each episode, a coordinator
//! proposes the next organization prompt.

mod coordinator;
mod critic;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coordinator::{parse_candidates, reflect, render_examples, CandidateSet, COORDINATOR_MAX_OUTPUT_TOKENS};
pub use critic::{activity, criticize, parse_critic_report, render_trajectory, CriticReport, DEFAULT_EVENT_BUDGET};

use crate::agents::{display_name, TemplateError};
use crate::comms::Recipients;
use crate::gateway::{Backend, BackendError, GatewayError};
use crate::orchestrator::{run_episode, EpisodeConfig, EpisodeContext, EpisodeError, EpisodeIo, Trajectory};
use crate::world::ScenarioError;

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("critic reply unusable after one re-ask: {error}")]
    CriticReply { error: String, reply: String },
    #[error("coordinator reply unusable after one re-ask: {error}")]
    CoordinatorReply { error: String, reply: String },
    #[error("reflection needs at least one record")]
    EmptyHistory,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("episode failed: {0}")]
    Episode(#[from] EpisodeError),
    #[error("lineage file: {0}")]
    Io(#[from] std::io::Error),
}

/// Split a reply into tagged sections. A tag starts a line (markdown bold and
/// heading marks allowed) and is followed by `:`; its content runs until the
/// next tag. Tags match case-insensitively. The first occurrence of a tag wins.
pub(crate) fn sections(text: &str, tags: &[&'static str]) -> BTreeMap<&'static str, String> {
    let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for line in text.lines() {
        let bare = line.trim().trim_start_matches(['#', '*', ' ']);
        let tag = tags.iter().copied().find(|t| {
            bare.len() >= t.len()
                && bare.is_char_boundary(t.len())
                && bare[..t.len()].eq_ignore_ascii_case(t)
                && bare[t.len()..].trim_start_matches('*').trim_start().starts_with(':')
        });
        if let Some(t) = tag {
            let rest = bare[t.len()..].trim_start_matches('*').trim_start();
            let rest = rest[1..].trim_start_matches('*').trim();
            if out.contains_key(t) {
                current = None;
                continue;
            }
            out.insert(t, rest.to_string());
            current = Some(t);
        } else if let Some(t) = current {
            let s = out.get_mut(t).expect("current section exists");
            if !s.is_empty() {
                s.push('\n');
            }
            s.push_str(line.trim_end());
        }
    }
    for v in out.values_mut() {
        *v = v.trim().to_string();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    /// The coordinator sees raw dialogue instead of a critic report.
    NoCritic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub iteration: u32,
    pub organization_prompt: String,
    pub steps: u32,
    pub comm_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_summary: Option<CriticReport>,
    /// Raw dialogue shown to the coordinator in no-critic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<String>,
    pub completed: bool,
    /// The coordinator's proposal made after this episode; absent on the last record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<CandidateSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_agents: Vec<String>,
}

/// Every message of an episode, one per line.
pub fn render_dialogue(trajectory: &Trajectory) -> String {
    trajectory
        .comm_records()
        .flat_map(|c| &c.messages)
        .map(|m| {
            let to = match &m.recipients {
                Recipients::All => "all".to_string(),
                r => r.describe(),
            };
            format!("Step {} | {} -> {to}: {}", m.step, display_name(m.sender), m.content)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    pub seed_prompt: String,
    pub iterations: u32,
    pub mode: Mode,
    pub critic_backend: String,
    pub coordinator_backend: String,
    #[serde(default = "default_budget")]
    pub event_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_EVENT_BUDGET
}

#[derive(Debug)]
pub struct LoopOutcome {
    pub records: Vec<ReflectionRecord>,
    pub trajectories: Vec<Trajectory>,
    /// Set when an iteration failed; completed records are kept.
    pub error: Option<ReflectError>,
}

fn append_lineage(path: Option<&Path>, record: &ReflectionRecord) -> Result<(), ReflectError> {
    let Some(path) = path else {
        return Ok(());
    };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(record).expect("record serializes"))?;
    Ok(())
}

/// Read a lineage file written by [`run_reflect_loop`].
pub fn read_lineage(path: &Path) -> Result<Vec<ReflectionRecord>, ReflectError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| ReflectError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        })
        .collect()
}

/// Run `iterations` rounds of episode, critic (full mode only) and coordinator,
/// then a final episode with the last adopted prompt. Produces
/// `iterations + 1` records when nothing fails. Each record is appended to
/// `lineage` as soon as it is final.
pub fn run_reflect_loop(
    ctx: EpisodeContext<'_>,
    base: &EpisodeConfig,
    settings: &LoopSettings,
    lineage: Option<&Path>,
) -> LoopOutcome {
    let mut out = LoopOutcome {
        records: Vec::new(),
        trajectories: Vec::new(),
        error: None,
    };
    if settings.iterations == 0 {
        out.error = Some(ReflectError::NoIterations);
        return out;
    }
    if let Some(p) = lineage {
        if let Err(e) = std::fs::write(p, "") {
            out.error = Some(e.into());
            return out;
        }
    }
    let mut reviewers = Reviewers::default();
    let mut prompt = settings.seed_prompt.clone();
    for iteration in 0..=settings.iterations {
        match iterate(ctx, base, settings, &mut reviewers, &mut out, iteration, &prompt, lineage) {
            Ok(Some(next)) => prompt = next,
            Ok(None) => break,
            Err(e) => {
                tracing::warn!("reflect iteration {iteration} failed: {e}");
                out.error = Some(e);
                break;
            }
        }
    }
    out
}

/// Critic and coordinator instances, created on first use and kept for the whole loop.
#[derive(Default)]
struct Reviewers {
    critic: Option<Box<dyn Backend>>,
    coordinator: Option<Box<dyn Backend>>,
}

fn instance<'a>(
    slot: &'a mut Option<Box<dyn Backend>>,
    ctx: EpisodeContext<'_>,
    name: &str,
    seed: u64,
) -> Result<&'a mut dyn Backend, GatewayError> {
    if slot.is_none() {
        *slot = Some(ctx.registry.instantiate(name, None, seed)?);
    }
    Ok(slot.as_mut().expect("just set").as_mut())
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    ctx: EpisodeContext<'_>,
    base: &EpisodeConfig,
    settings: &LoopSettings,
    reviewers: &mut Reviewers,
    out: &mut LoopOutcome,
    iteration: u32,
    prompt: &str,
    lineage: Option<&Path>,
) -> Result<Option<String>, ReflectError> {
    let mut config = base.clone();
    config.organization_prompt = prompt.to_string();
    let directive = config.election.directive();
    if config.election.enabled && !prompt.contains(&directive) {
        config.organization_prompt = format!("{prompt} {directive}");
    }
    let trajectory = run_episode(ctx, &config, EpisodeIo::default())?;
    let world = ctx.catalog.world(&config.scenario)?;
    let metrics = &trajectory.footer.metrics;
    let mut record = ReflectionRecord {
        iteration,
        organization_prompt: prompt.to_string(),
        steps: metrics.steps_to_completion,
        comm_cost: metrics.avg_tokens_per_step,
        critic_summary: None,
        dialogue: None,
        completed: metrics.completed,
        next: None,
        unknown_agents: Vec::new(),
    };
    let last = iteration == settings.iterations;
    if !last {
        match settings.mode {
            Mode::Full => {
                let critic = instance(&mut reviewers.critic, ctx, &settings.critic_backend, config.seed)?;
                record.critic_summary = Some(criticize(
                    ctx.templates,
                    &trajectory,
                    prompt,
                    &world,
                    critic,
                    settings.event_budget,
                )?);
            }
            Mode::NoCritic => record.dialogue = Some(render_dialogue(&trajectory)),
        }
    }
    out.trajectories.push(trajectory);
    if last {
        append_lineage(lineage, &record)?;
        out.records.push(record);
        return Ok(None);
    }
    let team = config.roster();
    let mut history = out.records.clone();
    history.push(record.clone());
    let coordinator = instance(&mut reviewers.coordinator, ctx, &settings.coordinator_backend, config.seed)?;
    let set = reflect(ctx.templates, &history, &team, &world.goal_text(), coordinator)?;
    record.unknown_agents = set.unknown_agents(&team);
    if !record.unknown_agents.is_empty() {
        tracing::warn!(
            "coordinator candidates name agents not on the team: {}",
            record.unknown_agents.join(", ")
        );
    }
    let next = set.chosen().to_string();
    record.next = Some(set);
    append_lineage(lineage, &record)?;
    out.records.push(record);
    Ok(Some(next))
}
