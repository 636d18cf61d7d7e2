//! Suspend-and-resume hooks for a human-controlled team slot.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::trajectory::Record;
use crate::agents::{CommDecision, PromptBundle};
use crate::world::{Action, AgentId, AvailableAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnPhase {
    Communicate,
    Act,
    Elect,
}

/// Everything a model in the same seat would be shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTurn {
    pub agent: AgentId,
    pub step: u32,
    pub phase: TurnPhase,
    pub roster: Vec<AgentId>,
    pub prompt: PromptBundle,
    pub available_actions: Vec<AvailableAction>,
    #[serde(skip)]
    pub timeout: Option<Duration>,
}

impl HumanTurn {
    pub fn check_decision(&self, d: &CommDecision) -> Result<(), String> {
        d.validate(self.agent, &self.roster)
    }

    /// Resolve a submitted action label against the listed actions.
    pub fn check_action(&self, label: &str) -> Result<Action, String> {
        let wanted = label.trim();
        self.available_actions
            .iter()
            .find(|a| a.label.eq_ignore_ascii_case(wanted))
            .map(|a| a.action.clone())
            .ok_or_else(|| format!("action: `{wanted}` is not one of the available actions"))
    }
}

/// Source of human decisions. Implementations block until a valid submission
/// arrives or the turn's timeout passes (`None`).
pub trait HumanPort: Send {
    fn comm_turn(&mut self, turn: &HumanTurn) -> Option<CommDecision>;
    fn action_turn(&mut self, turn: &HumanTurn) -> Option<Action>;

    /// Election turn: an optional message plus a vote. Defaults to speaking without voting.
    fn election_turn(&mut self, turn: &HumanTurn) -> Option<(CommDecision, Option<AgentId>)> {
        self.comm_turn(turn).map(|d| (d, None))
    }
}

/// Receives every trajectory record as soon as it is produced.
pub trait EpisodeObserver: Send {
    fn record(&mut self, record: &Record);
}

impl<F: FnMut(&Record) + Send> EpisodeObserver for F {
    fn record(&mut self, record: &Record) {
        self(record)
    }
}
