//! The episode loop: election when due, communication, actions, progress check.

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use super::config::{ConfigError, EpisodeConfig};
use super::election::{tally_votes, Ballot, ElectionRecord, LeadershipState};
use super::human::{EpisodeObserver, HumanPort, HumanTurn, TurnPhase};
use super::metrics::EpisodeMetrics;
use super::trajectory::{
    ActionRecord, EndReason, Footer, Header, ProgressRecord, Record, Trajectory, WarningRecord,
    FORMAT_VERSION,
};
use crate::agents::{
    parse_action_reply, parse_comm_reply, parse_vote, render_action_prompt, render_comm_prompt,
    render_election_prompt, AgentProfile, CommDecision, MemoryStore, PromptBundle, PromptInputs,
    TemplateSet,
};
use crate::comms::{deliver_turn, CommPhase, SpeakerTurn};
use crate::gateway::{
    AgentTask, AgentView, Backend, BackendError, BackendRegistry, BackendSpec, ChatRequest,
    GatewayError, Sidecar, SidecarPayload,
};
use crate::world::{Action, AgentId, ScenarioCatalog, ScenarioError, World, WorldState};

const ACTION_CORRECTION: &str =
    "Your reply did not name one of the available actions. Reply with one line: ACTION: <action copied verbatim from the list>";

/// Shared, read-only inputs for running episodes.
#[derive(Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub catalog: &'a ScenarioCatalog,
    pub registry: &'a BackendRegistry,
    pub templates: &'a TemplateSet,
}

/// Optional live hooks: a human seat and a record observer.
#[derive(Default)]
pub struct EpisodeIo<'a> {
    pub human: Option<&'a mut dyn HumanPort>,
    pub observer: Option<&'a mut dyn EpisodeObserver>,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid episode config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("Agent_{0} is a human slot but no human port is attached")]
    NoHumanPort(AgentId),
    #[error("world error: {0}")]
    World(String),
}

enum Seat {
    Model(Box<dyn Backend>),
    Human,
}

struct Episode<'c, 'io> {
    ctx: EpisodeContext<'c>,
    config: &'c EpisodeConfig,
    world: World,
    state: WorldState,
    roster: Vec<AgentId>,
    goal: String,
    memories: BTreeMap<AgentId, MemoryStore>,
    seats: BTreeMap<AgentId, Seat>,
    leadership: LeadershipState,
    events: Vec<Record>,
    io: EpisodeIo<'io>,
    exhausted: bool,
}

/// Run one episode to completion, the step cap, or the end of a replay.
pub fn run_episode(
    ctx: EpisodeContext<'_>,
    config: &EpisodeConfig,
    io: EpisodeIo<'_>,
) -> Result<Trajectory, EpisodeError> {
    config.validate()?;
    let world = ctx.catalog.world(&config.scenario)?;
    let refs = config.backend_refs();
    ctx.registry.check(&refs)?;
    let mut seats = BTreeMap::new();
    for p in &config.team {
        let seat = if p.is_human {
            if io.human.is_none() {
                return Err(EpisodeError::NoHumanPort(p.agent_id));
            }
            Seat::Human
        } else {
            Seat::Model(ctx.registry.instantiate(&p.backend_ref, Some(p.agent_id), config.seed)?)
        };
        seats.insert(p.agent_id, seat);
    }
    let roster = config.roster();
    let state = world.init(config.seed, &roster);
    let goal = world.goal_text();
    let backends: BTreeMap<String, BackendSpec> = refs
        .iter()
        .map(|r| Ok((r.to_string(), ctx.registry.spec(r)?.clone())))
        .collect::<Result<_, GatewayError>>()?;
    let mut ep = Episode {
        ctx,
        config,
        world,
        state,
        goal,
        memories: roster.iter().map(|a| (*a, MemoryStore::new())).collect(),
        roster,
        seats,
        leadership: config
            .initial_leader()
            .map(LeadershipState::designated)
            .unwrap_or_default(),
        events: Vec::new(),
        io,
        exhausted: false,
    };
    let header = Header {
        format: FORMAT_VERSION,
        config: config.clone(),
        backends,
    };
    if let Some(obs) = ep.io.observer.as_deref_mut() {
        obs.record(&Record::Header(Box::new(header.clone())));
    }
    let end_reason = ep.run()?;
    let completed = end_reason == EndReason::Completed;
    let metrics = EpisodeMetrics::compute(
        ep.events.iter().filter_map(|e| match e {
            Record::Comm(c) => Some(c),
            _ => None,
        }),
        &ep.roster,
        ep.state.step,
        completed,
        config.max_steps,
    );
    let footer = Footer {
        end_reason,
        metrics,
        leadership: ep.leadership.clone(),
    };
    if let Some(obs) = ep.io.observer.as_deref_mut() {
        obs.record(&Record::Footer(Box::new(footer.clone())));
    }
    Ok(Trajectory {
        header,
        events: ep.events,
        footer,
    })
}

impl Episode<'_, '_> {
    fn emit(&mut self, record: Record) {
        if let Some(obs) = self.io.observer.as_deref_mut() {
            obs.record(&record);
        }
        self.events.push(record);
    }

    fn warn(&mut self, step: u32, agent: Option<AgentId>, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(step, ?agent, "{message}");
        self.emit(Record::Warning(WarningRecord {
            step,
            agent,
            message,
        }));
    }

    fn run(&mut self) -> Result<EndReason, EpisodeError> {
        while self.state.step < self.config.max_steps {
            let t = self.state.step + 1;
            let election_step = self.config.election.is_due(t);
            if election_step {
                self.election(t)?;
            }
            for round in 0..self.config.comm_rounds_per_step {
                if self.exhausted {
                    break;
                }
                self.comm_round(t, round, election_step)?;
            }
            if !self.exhausted {
                self.action_phase(t, election_step)?;
            }
            if self.exhausted {
                return Ok(EndReason::ReplayExhausted);
            }
            self.world.end_action_phase(&mut self.state);
            let progress = self.world.goal_progress(&self.state);
            self.emit(Record::Progress(ProgressRecord {
                step: t,
                satisfied: progress.satisfied,
                required: progress.required,
            }));
            if progress.is_complete() {
                return Ok(EndReason::Completed);
            }
        }
        Ok(EndReason::MaxSteps)
    }

    fn profile(&self, agent: AgentId) -> &AgentProfile {
        self.config
            .team
            .iter()
            .find(|p| p.agent_id == agent)
            .expect("roster comes from the team")
    }

    fn view(&self, agent: AgentId, round: u32) -> Result<AgentView, EpisodeError> {
        let leader = self.leadership.current_leader;
        AgentView::capture(
            &self.world,
            &self.state,
            agent,
            &self.roster,
            &self.memories[&agent],
            &self.config.organization_text(leader),
            leader,
            round,
        )
        .map_err(|e| EpisodeError::World(e.to_string()))
    }

    fn prompt(
        &self,
        agent: AgentId,
        view: &AgentView,
        task: AgentTask,
        election_step: bool,
    ) -> PromptBundle {
        let directive = election_step.then(|| self.config.election.directive());
        let inputs = PromptInputs {
            profile: self.profile(agent),
            roster: &self.roster,
            organization: &view.organization,
            goal: &self.goal,
            observation: &view.observation,
            memory: &self.memories[&agent],
            election_directive: directive.as_deref(),
        };
        let t = self.ctx.templates;
        match task {
            AgentTask::Communicate => render_comm_prompt(t, &inputs),
            AgentTask::Act => render_action_prompt(t, &inputs),
            AgentTask::Elect => render_election_prompt(
                t,
                &inputs,
                self.config.election.window_messages,
                self.leadership.current_leader,
            ),
        }
    }

    fn human_turn(&self, agent: AgentId, phase: TurnPhase, prompt: PromptBundle, view: &AgentView) -> HumanTurn {
        HumanTurn {
            agent,
            step: view.step,
            phase,
            roster: self.roster.clone(),
            prompt,
            available_actions: view.observation.available_actions.clone(),
            timeout: self.config.human_timeout_secs.map(Duration::from_secs),
        }
    }

    /// Call the agent's backend; `None` means the replay ran out.
    fn call(
        &mut self,
        agent: AgentId,
        request: &ChatRequest,
        step: u32,
    ) -> Option<Result<crate::gateway::ChatResponse, BackendError>> {
        let Some(Seat::Model(backend)) = self.seats.get_mut(&agent) else {
            unreachable!("call is only used for model seats");
        };
        match backend.complete(request) {
            Err(e) if e.is_replay_exhausted() => {
                self.exhausted = true;
                self.warn(step, Some(agent), "replay exhausted; ending episode");
                None
            }
            r => Some(r),
        }
    }

    fn request(prompt: PromptBundle, task: AgentTask, view: AgentView) -> ChatRequest {
        ChatRequest::new(prompt.system_text, prompt.user_text).with_sidecar(Sidecar {
            fields: prompt.placeholder_values,
            payload: SidecarPayload::Agent {
                task,
                view: Box::new(view),
            },
        })
    }

    /// One speaker's turn; `(turn, vote)` or `None` when the replay ran out.
    fn speak(
        &mut self,
        agent: AgentId,
        step: u32,
        round: u32,
        task: AgentTask,
        election_step: bool,
    ) -> Result<Option<(SpeakerTurn, Option<AgentId>)>, EpisodeError> {
        let view = self.view(agent, round)?;
        let prompt = self.prompt(agent, &view, task, election_step);
        if let Some(Seat::Human) = self.seats.get(&agent) {
            let phase = if task == AgentTask::Elect {
                TurnPhase::Elect
            } else {
                TurnPhase::Communicate
            };
            let turn = self.human_turn(agent, phase, prompt, &view);
            let port = self.io.human.as_deref_mut().expect("checked at start");
            let answer = if phase == TurnPhase::Elect {
                port.election_turn(&turn)
            } else {
                port.comm_turn(&turn).map(|d| (d, None))
            };
            return Ok(Some(match answer {
                Some((decision, vote)) => {
                    let mut reply = decision.serialize();
                    if let Some(v) = vote {
                        reply.push_str(&format!("\nVOTE: Agent_{v}"));
                    }
                    let decision = match turn.check_decision(&decision) {
                        Ok(()) => decision,
                        Err(e) => {
                            self.warn(step, Some(agent), format!("invalid human message: {e}"));
                            CommDecision::Silence
                        }
                    };
                    (
                        SpeakerTurn {
                            decision: Some(decision),
                            replies: vec![reply],
                            usage_hint: None,
                        },
                        vote,
                    )
                }
                None => {
                    self.warn(step, Some(agent), "human turn timed out; treated as silence");
                    let mut turn = SpeakerTurn::silent();
                    turn.replies.push(CommDecision::Silence.serialize());
                    (turn, None)
                }
            }));
        }
        let request = Self::request(prompt, task, view);
        let Some(result) = self.call(agent, &request, step) else {
            return Ok(None);
        };
        Ok(Some(match result {
            Ok(resp) => {
                let (decision, warnings) = parse_comm_reply(&resp.content, &self.roster, agent);
                for w in warnings {
                    self.warn(step, Some(agent), w);
                }
                let vote = if task == AgentTask::Elect {
                    parse_vote(&resp.content)
                } else {
                    None
                };
                (
                    SpeakerTurn {
                        decision: Some(decision),
                        usage_hint: resp.completion_tokens,
                        replies: vec![resp.content],
                    },
                    vote,
                )
            }
            Err(e) => {
                self.warn(step, Some(agent), format!("backend error, treated as silence: {e}"));
                (SpeakerTurn::silent(), None)
            }
        }))
    }

    /// Speak in `order`, delivering each turn before the next speaker is asked.
    fn round_of_turns(
        &mut self,
        step: u32,
        round: u32,
        phase: CommPhase,
        election_step: bool,
        mut on_vote: impl FnMut(AgentId, Option<AgentId>),
    ) -> Result<(), EpisodeError> {
        let order = self.config.turn_order.order(&self.roster, step);
        let team = order.len() as u32;
        let task = match phase {
            CommPhase::Regular => AgentTask::Communicate,
            CommPhase::Election => AgentTask::Elect,
        };
        for (pos, agent) in order.into_iter().enumerate() {
            let Some((turn, vote)) = self.speak(agent, step, round, task, election_step)? else {
                return Ok(());
            };
            on_vote(agent, vote);
            let rec = deliver_turn(
                step,
                round,
                phase,
                round * team + pos as u32,
                agent,
                turn,
                &mut self.memories,
            );
            self.emit(Record::Comm(rec));
        }
        Ok(())
    }

    fn comm_round(&mut self, step: u32, round: u32, election_step: bool) -> Result<(), EpisodeError> {
        self.round_of_turns(step, round, CommPhase::Regular, election_step, |_, _| {})
    }

    fn election(&mut self, step: u32) -> Result<(), EpisodeError> {
        let previous = self.leadership.current_leader;
        let roster = self.roster.clone();
        let mut votes: BTreeMap<AgentId, Option<AgentId>> = roster.iter().map(|a| (*a, None)).collect();
        for round in 0..self.config.election.negotiation_rounds {
            self.round_of_turns(step, round, CommPhase::Election, true, |agent, vote| {
                if let Some(v) = vote.filter(|v| roster.contains(v)) {
                    votes.insert(agent, Some(v));
                }
            })?;
            if self.exhausted {
                return Ok(());
            }
        }
        let tally = tally_votes(&votes, &self.roster, previous);
        self.leadership.apply(step, &tally);
        self.emit(Record::Election(ElectionRecord {
            step,
            previous_leader: previous,
            ballots: votes
                .into_iter()
                .map(|(voter, vote)| Ballot { voter, vote })
                .collect(),
            tally,
        }));
        Ok(())
    }

    fn action_phase(&mut self, step: u32, election_step: bool) -> Result<(), EpisodeError> {
        for agent in self.roster.clone() {
            let Some((action, replies)) = self.choose_action(agent, step, election_step)? else {
                return Ok(());
            };
            let outcome = self.world.apply_action(&mut self.state, agent, &action);
            let label = self.world.label(&action);
            if let Some(m) = self.memories.get_mut(&agent) {
                m.record_action(step, label.clone(), outcome.describe());
            }
            self.emit(Record::Action(ActionRecord {
                step,
                agent,
                action,
                label,
                outcome,
                replies,
            }));
        }
        Ok(())
    }

    fn choose_action(
        &mut self,
        agent: AgentId,
        step: u32,
        election_step: bool,
    ) -> Result<Option<(Action, Vec<String>)>, EpisodeError> {
        let view = self.view(agent, 0)?;
        let prompt = self.prompt(agent, &view, AgentTask::Act, election_step);
        if let Some(Seat::Human) = self.seats.get(&agent) {
            let turn = self.human_turn(agent, TurnPhase::Act, prompt, &view);
            let port = self.io.human.as_deref_mut().expect("checked at start");
            return Ok(Some(match port.action_turn(&turn) {
                Some(a) => {
                    let reply = format!("ACTION: {}", self.world.label(&a));
                    (a, vec![reply])
                }
                None => {
                    self.warn(step, Some(agent), "human turn timed out; waiting this step");
                    let reply = format!("ACTION: {}", self.world.label(&Action::Noop));
                    (Action::Noop, vec![reply])
                }
            }));
        }
        let available = view.observation.available_actions.clone();
        let request = Self::request(prompt, AgentTask::Act, view);
        let mut replies = Vec::new();
        let Some(first) = self.call(agent, &request, step) else {
            return Ok(None);
        };
        let first = match first {
            Ok(r) => r.content,
            Err(e) => {
                self.warn(step, Some(agent), format!("backend error, waiting this step: {e}"));
                return Ok(Some((Action::Noop, replies)));
            }
        };
        replies.push(first.clone());
        if let Some(a) = parse_action_reply(&first, &available) {
            return Ok(Some((a, replies)));
        }
        let reask = request.reask(&first, ACTION_CORRECTION);
        let Some(second) = self.call(agent, &reask, step) else {
            return Ok(None);
        };
        match second {
            Ok(r) => {
                replies.push(r.content.clone());
                if let Some(a) = parse_action_reply(&r.content, &available) {
                    return Ok(Some((a, replies)));
                }
                self.warn(step, Some(agent), "unparsable action after one re-ask; waiting this step");
            }
            Err(e) => self.warn(step, Some(agent), format!("backend error, waiting this step: {e}")),
        }
        Ok(Some((Action::Noop, replies)))
    }
}

/// Config and registry that replay a recorded episode from its stored replies.
pub fn replay_setup(trajectory: &Trajectory) -> (EpisodeConfig, BackendRegistry) {
    let mut config = trajectory.header.config.clone();
    let replies = trajectory.replies_by_agent();
    let mut registry = BackendRegistry::new(BTreeMap::new());
    for p in &mut config.team {
        let name = format!("replay_agent_{}", p.agent_id);
        let list = replies.get(&p.agent_id).cloned().unwrap_or_default();
        registry.insert(
            name.clone(),
            BackendSpec::scripted_with("replay", serde_json::json!({ "replies": list })),
        );
        p.backend_ref = name;
        p.is_human = false;
    }
    (config, registry)
}
