use serde::{Deserialize, Serialize};

use super::classify::{classify_message, BehaviorLabels, ClassifyError};
use crate::agents::TemplateSet;
use crate::comms::Message;
use crate::gateway::Backend;
use crate::orchestrator::{LeadershipState, Trajectory};

/// Every message of a trajectory, in log order.
pub fn messages(trajectory: &Trajectory) -> Vec<&Message> {
    trajectory.comm_records().flat_map(|c| &c.messages).collect()
}

/// Label every message of a trajectory, in log order.
pub fn label_messages(
    templates: &TemplateSet,
    trajectory: &Trajectory,
    backend: &mut dyn Backend,
) -> Result<Vec<BehaviorLabels>, ClassifyError> {
    messages(trajectory)
        .into_iter()
        .map(|m| classify_message(templates, &m.content, backend).map(|c| c.labels))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolePartition {
    Leader,
    NonLeader,
    /// Used when no leader was ever set.
    AllAgents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRow {
    pub role: RolePartition,
    pub messages: usize,
    /// Percent of this role's messages carrying each label.
    pub info_sharing: f64,
    pub leadership_assistance: f64,
    pub request_guidance: f64,
}

fn row(role: RolePartition, labels: &[BehaviorLabels]) -> RoleRow {
    let pct = |f: fn(&BehaviorLabels) -> bool| {
        if labels.is_empty() {
            0.0
        } else {
            100.0 * labels.iter().filter(|l| f(l)).count() as f64 / labels.len() as f64
        }
    };
    RoleRow {
        role,
        messages: labels.len(),
        info_sharing: pct(|l| l.info_sharing),
        leadership_assistance: pct(|l| l.leadership_assistance),
        request_guidance: pct(|l| l.request_guidance),
    }
}

/// Label percentages per role. A message counts as the leader's when its
/// sender led at the step it was sent.
pub fn behavior_stats(messages: &[&Message], leadership: &LeadershipState, labels: &[BehaviorLabels]) -> Vec<RoleRow> {
    assert_eq!(messages.len(), labels.len(), "every message needs labels");
    let ever_led = leadership.history.iter().any(|c| c.leader.is_some());
    if !ever_led {
        return vec![row(RolePartition::AllAgents, labels)];
    }
    let (mut lead, mut rest) = (Vec::new(), Vec::new());
    for (m, l) in messages.iter().zip(labels) {
        if leadership.leader_at(m.step) == Some(m.sender) {
            lead.push(*l);
        } else {
            rest.push(*l);
        }
    }
    vec![row(RolePartition::Leader, &lead), row(RolePartition::NonLeader, &rest)]
}
