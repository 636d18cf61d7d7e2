//! Symbolic household environment.
//!
//! A [`World`] wraps a validated [`Scenario`] together with lookup tables; a
//! [`WorldState`] is the mutable ground truth of one episode. Agents only see
//! what [`World::observe`] returns: the contents of open containers, surfaces
//! and loose objects in their own room, and teammates in the same room.

mod action;
mod scenario;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{Action, ActionOutcome, AvailableAction};
pub use scenario::{
    ContainerSpec, GoalPredicate, GoalSpec, LooseObjectSpec, ObjectSpec, Scenario, ScenarioError,
    SurfaceSpec,
};

pub type EntityId = u32;
pub type AgentId = u32;

/// Objects an agent can carry at once.
pub const HAND_CAPACITY: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntityKind {
    Container,
    Surface,
    Object,
}

#[derive(Debug, Clone)]
struct EntityInfo {
    kind: EntityKind,
    name: String,
    /// Fixed room for containers and surfaces, initial room for objects.
    room: String,
}

/// Where an object currently is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum ObjectLocation {
    InContainer { id: EntityId },
    OnSurface { id: EntityId },
    HeldBy { agent: AgentId },
    InRoom { room: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step: u32,
    pub agent_locations: BTreeMap<AgentId, String>,
    pub container_open: BTreeMap<EntityId, bool>,
    pub object_location: BTreeMap<EntityId, ObjectLocation>,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn held_by(&self, agent: AgentId) -> Vec<EntityId> {
        self.object_location
            .iter()
            .filter(|(_, loc)| matches!(loc, ObjectLocation::HeldBy { agent: a } if *a == agent))
            .map(|(id, _)| *id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub id: EntityId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleContainer {
    pub id: EntityId,
    pub name: String,
    pub open: bool,
    /// `None` while closed.
    pub contents: Option<Vec<ObjectRef>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleSurface {
    pub id: EntityId,
    pub name: String,
    pub contents: Vec<ObjectRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub agent_id: AgentId,
    pub room: String,
    /// Every room of the home, in scenario order. The floor plan is common knowledge.
    pub rooms: Vec<String>,
    pub visible_containers: Vec<VisibleContainer>,
    pub visible_surfaces: Vec<VisibleSurface>,
    pub visible_loose_objects: Vec<ObjectRef>,
    pub teammates_in_room: Vec<AgentId>,
    pub held: Vec<ObjectRef>,
    pub progress_text: String,
    pub available_actions: Vec<AvailableAction>,
}

impl Observation {
    pub fn action_labels(&self) -> Vec<String> {
        self.available_actions.iter().map(|a| a.label.clone()).collect()
    }

    /// Perception text inserted into prompts.
    pub fn describe(&self) -> String {
        let mut out = format!("You are in the {}.", self.room);
        let fmt = |objs: &[ObjectRef]| {
            if objs.is_empty() {
                "nothing".to_string()
            } else {
                objs.iter()
                    .map(|o| format!("<{}> ({})", o.name, o.id))
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        };
        for c in &self.visible_containers {
            match &c.contents {
                Some(objs) => out.push_str(&format!(
                    "\nThe <{}> ({}) is open and contains {}.",
                    c.name,
                    c.id,
                    fmt(objs)
                )),
                None => out.push_str(&format!(
                    "\nThe <{}> ({}) is closed and unchecked.",
                    c.name, c.id
                )),
            }
        }
        for s in &self.visible_surfaces {
            out.push_str(&format!(
                "\nOn the <{}> ({}) there is {}.",
                s.name,
                s.id,
                fmt(&s.contents)
            ));
        }
        if !self.visible_loose_objects.is_empty() {
            out.push_str(&format!(
                "\nLying around: {}.",
                fmt(&self.visible_loose_objects)
            ));
        }
        if self.teammates_in_room.is_empty() {
            out.push_str("\nNo teammates are in this room.");
        } else {
            let names: Vec<_> = self
                .teammates_in_room
                .iter()
                .map(|a| format!("Agent_{a}"))
                .collect();
            out.push_str(&format!("\nTeammates here: {}.", names.join(", ")));
        }
        out.push_str(&format!("\nYou are holding {}.", fmt(&self.held)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassProgress {
    pub object_class: String,
    pub target_surface_id: EntityId,
    pub target_name: String,
    pub required: u32,
    /// Instances on the target surface, not capped by `required`.
    pub placed: u32,
}

impl ClassProgress {
    pub fn satisfied(&self) -> u32 {
        self.placed.min(self.required)
    }

    pub fn missing(&self) -> u32 {
        self.required - self.satisfied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalProgress {
    pub satisfied: u32,
    pub required: u32,
    pub classes: Vec<ClassProgress>,
    pub text: String,
}

impl GoalProgress {
    pub fn fraction(&self) -> f64 {
        if self.required == 0 {
            1.0
        } else {
            f64::from(self.satisfied) / f64::from(self.required)
        }
    }

    pub fn is_complete(&self) -> bool {
        self.satisfied == self.required
    }
}

/// A validated scenario with precomputed lookups.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Arc<Scenario>,
    entities: BTreeMap<EntityId, EntityInfo>,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let mut entities = BTreeMap::new();
        for c in &scenario.containers {
            entities.insert(
                c.id,
                EntityInfo {
                    kind: EntityKind::Container,
                    name: c.name.clone(),
                    room: c.room.clone(),
                },
            );
        }
        for s in &scenario.surfaces {
            entities.insert(
                s.id,
                EntityInfo {
                    kind: EntityKind::Surface,
                    name: s.name.clone(),
                    room: s.room.clone(),
                },
            );
        }
        for (name, id, room) in scenario.objects() {
            entities.insert(
                id,
                EntityInfo {
                    kind: EntityKind::Object,
                    name: name.to_string(),
                    room: room.to_string(),
                },
            );
        }
        Ok(World {
            scenario: Arc::new(scenario),
            entities,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.scenario.goal
    }

    pub fn entity_name(&self, id: EntityId) -> Option<&str> {
        self.entities.get(&id).map(|e| e.name.as_str())
    }

    fn is(&self, id: EntityId, kind: EntityKind) -> bool {
        self.entities.get(&id).is_some_and(|e| e.kind == kind)
    }

    fn fixed_room(&self, id: EntityId) -> Option<&str> {
        self.entities
            .get(&id)
            .filter(|e| e.kind != EntityKind::Object)
            .map(|e| e.room.as_str())
    }

    /// Fresh episode state: every container closed, objects at their declared
    /// locations, agents placed in rooms drawn uniformly from the seeded generator.
    pub fn init(&self, seed: u64, agents: &[AgentId]) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rooms = &self.scenario.rooms;
        let agent_locations = agents
            .iter()
            .map(|&a| (a, rooms[rng.random_range(0..rooms.len())].clone()))
            .collect();
        let container_open = self
            .scenario
            .containers
            .iter()
            .map(|c| (c.id, false))
            .collect();
        let mut object_location = BTreeMap::new();
        for c in &self.scenario.containers {
            for o in &c.contents {
                object_location.insert(o.id, ObjectLocation::InContainer { id: c.id });
            }
        }
        for o in &self.scenario.loose_objects {
            object_location.insert(
                o.id,
                ObjectLocation::InRoom {
                    room: o.room.clone(),
                },
            );
        }
        WorldState {
            step: 0,
            agent_locations,
            container_open,
            object_location,
            rng,
        }
    }

    /// Convenience for the scenario's default team `1..=agent_count`.
    pub fn init_default(&self, seed: u64) -> WorldState {
        let agents: Vec<AgentId> = (1..=self.scenario.agent_count).collect();
        self.init(seed, &agents)
    }

    /// Whether `object` is visible to someone standing in `room`.
    fn object_visible_in(&self, state: &WorldState, object: EntityId, room: &str) -> bool {
        let Some(loc) = state.object_location.get(&object) else {
            return false;
        };
        match loc {
            ObjectLocation::InContainer { id } => {
                state.container_open.get(id).copied().unwrap_or(false)
                    && self.fixed_room(*id) == Some(room)
            }
            ObjectLocation::OnSurface { id } => self.fixed_room(*id) == Some(room),
            ObjectLocation::InRoom { room: r } => r == room,
            ObjectLocation::HeldBy { .. } => false,
        }
    }

    fn object_ref(&self, id: EntityId) -> ObjectRef {
        ObjectRef {
            id,
            name: self.entities[&id].name.clone(),
        }
    }

    fn objects_at(&self, state: &WorldState, at: &ObjectLocation) -> Vec<ObjectRef> {
        state
            .object_location
            .iter()
            .filter(|(_, loc)| *loc == at)
            .map(|(id, _)| self.object_ref(*id))
            .collect()
    }

    pub fn observe(&self, state: &WorldState, agent: AgentId) -> Result<Observation, WorldError> {
        let room = state
            .agent_locations
            .get(&agent)
            .ok_or(WorldError::UnknownAgent(agent))?
            .clone();
        let visible_containers = self
            .scenario
            .containers
            .iter()
            .filter(|c| c.room == room)
            .map(|c| {
                let open = state.container_open[&c.id];
                VisibleContainer {
                    id: c.id,
                    name: c.name.clone(),
                    open,
                    contents: open
                        .then(|| self.objects_at(state, &ObjectLocation::InContainer { id: c.id })),
                }
            })
            .collect();
        let visible_surfaces = self
            .scenario
            .surfaces
            .iter()
            .filter(|s| s.room == room)
            .map(|s| VisibleSurface {
                id: s.id,
                name: s.name.clone(),
                contents: self.objects_at(state, &ObjectLocation::OnSurface { id: s.id }),
            })
            .collect();
        let visible_loose_objects = self.objects_at(
            state,
            &ObjectLocation::InRoom {
                room: room.clone(),
            },
        );
        let teammates_in_room = state
            .agent_locations
            .iter()
            .filter(|(a, r)| **a != agent && **r == room)
            .map(|(a, _)| *a)
            .collect();
        let held = state
            .held_by(agent)
            .into_iter()
            .map(|id| self.object_ref(id))
            .collect();
        let progress = self.goal_progress(state);
        Ok(Observation {
            agent_id: agent,
            room,
            rooms: self.scenario.rooms.clone(),
            visible_containers,
            visible_surfaces,
            visible_loose_objects,
            teammates_in_room,
            held,
            progress_text: progress.text,
            available_actions: self.legal_actions(state, agent),
        })
    }

    pub fn label(&self, action: &Action) -> String {
        let ent = |id: &EntityId| {
            format!(
                "<{}> ({})",
                self.entity_name(*id).unwrap_or("unknown"),
                id
            )
        };
        match action {
            Action::WalkToRoom { room } => format!("[walk] <{room}>"),
            Action::WalkToEntity { target } => format!("[walktowards] {}", ent(target)),
            Action::Open { target } => format!("[open] {}", ent(target)),
            Action::Close { target } => format!("[close] {}", ent(target)),
            Action::Grab { target } => format!("[grab] {}", ent(target)),
            Action::Put {
                target,
                destination,
            } => format!("[put] {} {}", ent(target), ent(destination)),
            Action::Noop => "[wait]".to_string(),
        }
    }

    /// Every action that would succeed for `agent` in `state`, in a stable order.
    ///
    /// An unknown agent has no legal actions.
    pub fn legal_actions(&self, state: &WorldState, agent: AgentId) -> Vec<AvailableAction> {
        let Some(room) = state.agent_locations.get(&agent) else {
            return Vec::new();
        };
        let mut actions = Vec::new();
        for r in &self.scenario.rooms {
            if r != room {
                actions.push(Action::WalkToRoom { room: r.clone() });
            }
        }
        for s in &self.scenario.surfaces {
            if &s.room != room {
                actions.push(Action::WalkToEntity { target: s.id });
            }
        }
        for c in self.scenario.containers.iter().filter(|c| &c.room == room) {
            if state.container_open[&c.id] {
                actions.push(Action::Close { target: c.id });
            } else {
                actions.push(Action::Open { target: c.id });
            }
        }
        let held = state.held_by(agent);
        if held.len() < HAND_CAPACITY {
            for id in state.object_location.keys() {
                if self.object_visible_in(state, *id, room) {
                    actions.push(Action::Grab { target: *id });
                }
            }
        }
        for obj in &held {
            for s in self.scenario.surfaces.iter().filter(|s| &s.room == room) {
                actions.push(Action::Put {
                    target: *obj,
                    destination: s.id,
                });
            }
            for c in self.scenario.containers.iter().filter(|c| &c.room == room) {
                if state.container_open[&c.id] {
                    actions.push(Action::Put {
                        target: *obj,
                        destination: c.id,
                    });
                }
            }
        }
        actions.push(Action::Noop);
        actions
            .into_iter()
            .map(|action| AvailableAction {
                label: self.label(&action),
                action,
            })
            .collect()
    }

    /// Apply one action. Illegal actions leave the state untouched and return a
    /// failure outcome; nothing here ever panics on model output.
    pub fn apply_action(
        &self,
        state: &mut WorldState,
        agent: AgentId,
        action: &Action,
    ) -> ActionOutcome {
        let Some(room) = state.agent_locations.get(&agent).cloned() else {
            return ActionOutcome::fail(format!("unknown agent {agent}"));
        };
        match action {
            Action::Noop => ActionOutcome::Success,
            Action::WalkToRoom { room: target } => {
                if !self.scenario.rooms.contains(target) {
                    ActionOutcome::fail(format!("no room named {target}"))
                } else if *target == room {
                    ActionOutcome::fail(format!("already in the {target}"))
                } else {
                    state.agent_locations.insert(agent, target.clone());
                    ActionOutcome::Success
                }
            }
            Action::WalkToEntity { target } => {
                if !self.is(*target, EntityKind::Surface) {
                    return ActionOutcome::fail(format!("{target} is not a known surface"));
                }
                let dest = self.fixed_room(*target).unwrap_or_default().to_string();
                if dest == room {
                    return ActionOutcome::fail("already next to it");
                }
                state.agent_locations.insert(agent, dest);
                ActionOutcome::Success
            }
            Action::Open { target } | Action::Close { target } => {
                let opening = matches!(action, Action::Open { .. });
                if !self.is(*target, EntityKind::Container) {
                    return ActionOutcome::fail(format!("{target} is not a container"));
                }
                if self.fixed_room(*target) != Some(room.as_str()) {
                    return ActionOutcome::fail("container is in another room");
                }
                let open = state.container_open.get_mut(target).expect("container");
                if *open == opening {
                    return ActionOutcome::fail(if opening {
                        "already open"
                    } else {
                        "already closed"
                    });
                }
                *open = opening;
                ActionOutcome::Success
            }
            Action::Grab { target } => {
                if !self.is(*target, EntityKind::Object) {
                    return ActionOutcome::fail(format!("{target} is not an object"));
                }
                if state.held_by(agent).len() >= HAND_CAPACITY {
                    return ActionOutcome::fail("hands full");
                }
                if !self.object_visible_in(state, *target, &room) {
                    return ActionOutcome::fail("object is not visible from here");
                }
                state
                    .object_location
                    .insert(*target, ObjectLocation::HeldBy { agent });
                ActionOutcome::Success
            }
            Action::Put {
                target,
                destination,
            } => {
                if state.object_location.get(target) != Some(&ObjectLocation::HeldBy { agent }) {
                    return ActionOutcome::fail("not holding that object");
                }
                if self.fixed_room(*destination) != Some(room.as_str()) {
                    return ActionOutcome::fail("destination is not in this room");
                }
                let loc = if self.is(*destination, EntityKind::Surface) {
                    ObjectLocation::OnSurface { id: *destination }
                } else if self.is(*destination, EntityKind::Container) {
                    if !state.container_open[destination] {
                        return ActionOutcome::fail("container is closed");
                    }
                    ObjectLocation::InContainer { id: *destination }
                } else {
                    return ActionOutcome::fail("destination cannot hold objects");
                };
                state.object_location.insert(*target, loc);
                ActionOutcome::Success
            }
        }
    }

    /// Close an action phase: every agent has acted once.
    pub fn end_action_phase(&self, state: &mut WorldState) {
        state.step += 1;
    }

    pub fn goal_progress(&self, state: &WorldState) -> GoalProgress {
        let classes: Vec<ClassProgress> = self
            .scenario
            .goal
            .predicates
            .iter()
            .map(|p| {
                let placed = state
                    .object_location
                    .iter()
                    .filter(|(id, loc)| {
                        **loc
                            == ObjectLocation::OnSurface {
                                id: p.target_surface_id,
                            }
                            && self.entities[id].name == p.object_class
                    })
                    .count() as u32;
                ClassProgress {
                    object_class: p.object_class.clone(),
                    target_surface_id: p.target_surface_id,
                    target_name: self
                        .entity_name(p.target_surface_id)
                        .unwrap_or_default()
                        .to_string(),
                    required: p.required_count,
                    placed,
                }
            })
            .collect();
        let satisfied = classes.iter().map(ClassProgress::satisfied).sum();
        let required = classes.iter().map(|c| c.required).sum();
        let mut lines = Vec::new();
        let placed: Vec<_> = classes
            .iter()
            .filter(|c| c.satisfied() > 0)
            .map(|c| format!("{} x{}", c.object_class, c.satisfied()))
            .collect();
        let missing: Vec<_> = classes
            .iter()
            .filter(|c| c.missing() > 0)
            .map(|c| format!("{} x{}", c.object_class, c.missing()))
            .collect();
        lines.push(format!("{satisfied}/{required} required items in place."));
        lines.push(format!(
            "Placed: {}.",
            if placed.is_empty() {
                "none".to_string()
            } else {
                placed.join(", ")
            }
        ));
        lines.push(format!(
            "Still missing: {}.",
            if missing.is_empty() {
                "none".to_string()
            } else {
                missing.join(", ")
            }
        ));
        GoalProgress {
            satisfied,
            required,
            classes,
            text: lines.join("\n"),
        }
    }

    /// Natural-language goal statement for prompts.
    pub fn goal_text(&self) -> String {
        let mut by_target: BTreeMap<EntityId, Vec<String>> = BTreeMap::new();
        for p in &self.scenario.goal.predicates {
            by_target
                .entry(p.target_surface_id)
                .or_default()
                .push(format!("{} <{}>", p.required_count, p.object_class));
        }
        by_target
            .into_iter()
            .map(|(target, items)| {
                format!(
                    "Transport {} to the <{}> ({}).",
                    items.join(", "),
                    self.entity_name(target).unwrap_or_default(),
                    target
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Built-in scenarios plus any loaded from directories on disk.
#[derive(Debug, Clone, Default)]
pub struct ScenarioCatalog {
    scenarios: BTreeMap<String, Scenario>,
}

const BUILTIN_SCENARIOS: &[&str] = &[
    include_str!("../../scenarios/prepare_afternoon_tea.json"),
    include_str!("../../scenarios/read_book.json"),
    include_str!("../../scenarios/put_dishwasher_hard.json"),
    include_str!("../../scenarios/prepare_food.json"),
    include_str!("../../scenarios/put_dishwasher_easy.json"),
    include_str!("../../scenarios/put_fridge.json"),
    include_str!("../../scenarios/setup_table.json"),
];

impl ScenarioCatalog {
    pub fn builtin() -> Self {
        let mut catalog = ScenarioCatalog::default();
        for text in BUILTIN_SCENARIOS {
            let s = Scenario::from_json(text).expect("built-in scenario parses");
            s.validate().expect("built-in scenario is valid");
            catalog.scenarios.insert(s.name.clone(), s);
        }
        catalog
    }

    /// Add every `*.json` scenario in `dir`; later files override earlier names.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, ScenarioError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ScenarioError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && !p
                        .file_name()
                        .is_some_and(|n| n.to_string_lossy().ends_with(".schema.json"))
            })
            .collect();
        paths.sort();
        for path in &paths {
            self.insert(Scenario::load(path)?);
        }
        Ok(paths.len())
    }

    pub fn insert(&mut self, scenario: Scenario) {
        self.scenarios.insert(scenario.name.clone(), scenario);
    }

    pub fn get(&self, name: &str) -> Result<&Scenario, ScenarioError> {
        self.scenarios
            .get(name)
            .ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))
    }

    pub fn world(&self, name: &str) -> Result<World, ScenarioError> {
        World::new(self.get(name)?.clone())
    }

    pub fn names(&self) -> Vec<String> {
        self.scenarios.keys().cloned().collect()
    }
}
