use serde::{Deserialize, Serialize};

use super::EntityId;

/// One environment action. Each non-`Noop` variant carries its target.
///
/// `Put` additionally names the destination surface or container, since a
/// held object can be placed on any co-located receptacle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    WalkToRoom { room: String },
    WalkToEntity { target: EntityId },
    Open { target: EntityId },
    Close { target: EntityId },
    Grab { target: EntityId },
    Put { target: EntityId, destination: EntityId },
    Noop,
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::WalkToRoom { .. } => "walk_to_room",
            Action::WalkToEntity { .. } => "walk_to_entity",
            Action::Open { .. } => "open",
            Action::Close { .. } => "close",
            Action::Grab { .. } => "grab",
            Action::Put { .. } => "put",
            Action::Noop => "noop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ActionOutcome {
    Success,
    Failure { reason: String },
}

impl ActionOutcome {
    pub fn fail(reason: impl Into<String>) -> Self {
        ActionOutcome::Failure {
            reason: reason.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, ActionOutcome::Success)
    }

    pub fn describe(&self) -> String {
        match self {
            ActionOutcome::Success => "success".to_string(),
            ActionOutcome::Failure { reason } => format!("failed: {reason}"),
        }
    }
}

/// A legal action together with the text label shown to agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailableAction {
    pub label: String,
    pub action: Action,
}
