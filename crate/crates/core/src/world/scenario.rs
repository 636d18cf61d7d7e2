//! Scenario description files and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EntityId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("duplicate entity id {0}")]
    DuplicateId(EntityId),
    #[error("duplicate room name `{0}`")]
    DuplicateRoom(String),
    #[error("entity {id} is assigned to unknown room `{room}`")]
    UnknownRoom { id: EntityId, room: String },
    #[error("goal references object class `{0}` that does not exist in the scenario")]
    UnknownGoalClass(String),
    #[error("goal target {0} is not a surface of the scenario")]
    UnknownGoalSurface(EntityId),
    #[error("goal requires {required} × `{class}` but the scenario only has {available}")]
    GoalExceedsInventory {
        class: String,
        required: u32,
        available: u32,
    },
    #[error("goal predicate for `{0}` has a zero required count")]
    ZeroRequiredCount(String),
    #[error("goal has no predicates")]
    EmptyGoal,
    #[error("scenario has no rooms")]
    NoRooms,
    #[error("agent_count must be positive")]
    NoAgents,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("failed to read scenario file {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed scenario file {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub id: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub name: String,
    pub id: EntityId,
    pub room: String,
    #[serde(default)]
    pub contents: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub name: String,
    pub id: EntityId,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LooseObjectSpec {
    pub name: String,
    pub id: EntityId,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalPredicate {
    pub object_class: String,
    pub target_surface_id: EntityId,
    pub required_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub predicates: Vec<GoalPredicate>,
}

impl GoalSpec {
    pub fn total_required(&self) -> u32 {
        self.predicates.iter().map(|p| p.required_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub rooms: Vec<String>,
    pub containers: Vec<ContainerSpec>,
    pub surfaces: Vec<SurfaceSpec>,
    #[serde(default)]
    pub loose_objects: Vec<LooseObjectSpec>,
    pub goal: GoalSpec,
    pub agent_count: u32,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let scenario: Scenario = Self::from_json(&text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Every object of the scenario as `(name, id, initial room)`, in declaration order.
    pub fn objects(&self) -> impl Iterator<Item = (&str, EntityId, &str)> {
        let in_containers = self.containers.iter().flat_map(|c| {
            c.contents
                .iter()
                .map(move |o| (o.name.as_str(), o.id, c.room.as_str()))
        });
        let loose = self
            .loose_objects
            .iter()
            .map(|o| (o.name.as_str(), o.id, o.room.as_str()));
        in_containers.chain(loose)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.rooms.is_empty() {
            return Err(ScenarioError::NoRooms);
        }
        if self.agent_count == 0 {
            return Err(ScenarioError::NoAgents);
        }
        let mut rooms = BTreeSet::new();
        for room in &self.rooms {
            if !rooms.insert(room.as_str()) {
                return Err(ScenarioError::DuplicateRoom(room.clone()));
            }
        }
        let mut ids = BTreeSet::new();
        let mut check = |id: EntityId, room: &str| -> Result<(), ScenarioError> {
            if !ids.insert(id) {
                return Err(ScenarioError::DuplicateId(id));
            }
            if !rooms.contains(room) {
                return Err(ScenarioError::UnknownRoom {
                    id,
                    room: room.to_string(),
                });
            }
            Ok(())
        };
        for c in &self.containers {
            check(c.id, &c.room)?;
            for o in &c.contents {
                check(o.id, &c.room)?;
            }
        }
        for s in &self.surfaces {
            check(s.id, &s.room)?;
        }
        for o in &self.loose_objects {
            check(o.id, &o.room)?;
        }

        if self.goal.predicates.is_empty() {
            return Err(ScenarioError::EmptyGoal);
        }
        let mut inventory: BTreeMap<&str, u32> = BTreeMap::new();
        for (name, _, _) in self.objects() {
            *inventory.entry(name).or_default() += 1;
        }
        let mut required: BTreeMap<&str, u32> = BTreeMap::new();
        for p in &self.goal.predicates {
            if p.required_count == 0 {
                return Err(ScenarioError::ZeroRequiredCount(p.object_class.clone()));
            }
            if !inventory.contains_key(p.object_class.as_str()) {
                return Err(ScenarioError::UnknownGoalClass(p.object_class.clone()));
            }
            if !self.surfaces.iter().any(|s| s.id == p.target_surface_id) {
                return Err(ScenarioError::UnknownGoalSurface(p.target_surface_id));
            }
            *required.entry(p.object_class.as_str()).or_default() += p.required_count;
        }
        for (class, count) in required {
            let available = inventory[class];
            if count > available {
                return Err(ScenarioError::GoalExceedsInventory {
                    class: class.to_string(),
                    required: count,
                    available,
                });
            }
        }
        Ok(())
    }
}
