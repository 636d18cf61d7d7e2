use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::world::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Designated,
    Elected,
    IncumbentByDefault,
}

/// Which branch of the vote-counting rule decided an election.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TallyRule {
    Majority,
    Plurality,
    TieIncumbent,
    TieLowestId,
    AllAbstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub leader: Option<AgentId>,
    pub rule: TallyRule,
    #[serde(with = "crate::id_keys")]
    pub counts: BTreeMap<AgentId, u32>,
}

impl Tally {
    pub fn mechanism(&self) -> Mechanism {
        match self.rule {
            TallyRule::TieIncumbent | TallyRule::AllAbstain => Mechanism::IncumbentByDefault,
            _ => Mechanism::Elected,
        }
    }
}

/// Count votes. A vote for someone outside the team is an abstention.
///
/// Strict majority of the team wins; otherwise a unique plurality; a tie keeps
/// the incumbent, or picks the lowest tied id when there is none; if nobody
/// votes the incumbent stays.
pub fn tally_votes(
    votes: &BTreeMap<AgentId, Option<AgentId>>,
    team: &[AgentId],
    incumbent: Option<AgentId>,
) -> Tally {
    let mut counts: BTreeMap<AgentId, u32> = BTreeMap::new();
    for v in votes.values().flatten() {
        if team.contains(v) {
            *counts.entry(*v).or_default() += 1;
        }
    }
    let Some(&top) = counts.values().max() else {
        return Tally {
            leader: incumbent,
            rule: TallyRule::AllAbstain,
            counts,
        };
    };
    let leaders: Vec<AgentId> = counts
        .iter()
        .filter(|(_, c)| **c == top)
        .map(|(a, _)| *a)
        .collect();
    let (leader, rule) = if 2 * top as usize > team.len() {
        (Some(leaders[0]), TallyRule::Majority)
    } else if leaders.len() == 1 {
        (Some(leaders[0]), TallyRule::Plurality)
    } else if incumbent.is_some() {
        (incumbent, TallyRule::TieIncumbent)
    } else {
        (Some(leaders[0]), TallyRule::TieLowestId)
    };
    Tally {
        leader,
        rule,
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadershipChange {
    pub step: u32,
    pub leader: Option<AgentId>,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadershipState {
    pub current_leader: Option<AgentId>,
    pub history: Vec<LeadershipChange>,
}

impl LeadershipState {
    pub fn designated(leader: AgentId) -> Self {
        LeadershipState {
            current_leader: Some(leader),
            history: vec![LeadershipChange {
                step: 0,
                leader: Some(leader),
                mechanism: Mechanism::Designated,
            }],
        }
    }

    pub fn apply(&mut self, step: u32, tally: &Tally) {
        self.current_leader = tally.leader;
        self.history.push(LeadershipChange {
            step,
            leader: tally.leader,
            mechanism: tally.mechanism(),
        });
    }

    /// Leader in effect during `step`.
    pub fn leader_at(&self, step: u32) -> Option<AgentId> {
        self.history
            .iter()
            .rev()
            .find(|c| c.step <= step)
            .and_then(|c| c.leader)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: AgentId,
    pub vote: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub step: u32,
    pub previous_leader: Option<AgentId>,
    /// Final ballot per agent: its last valid vote over all negotiation rounds.
    pub ballots: Vec<Ballot>,
    pub tally: Tally,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn votes(pairs: &[(AgentId, Option<AgentId>)]) -> BTreeMap<AgentId, Option<AgentId>> {
        pairs.iter().copied().collect()
    }

    const TEAM: [AgentId; 3] = [1, 2, 3];

    #[test]
    fn majority() {
        let t = tally_votes(&votes(&[(1, Some(2)), (2, Some(2)), (3, Some(1))]), &TEAM, None);
        assert_eq!((t.leader, t.rule), (Some(2), TallyRule::Majority));
        assert_eq!(t.mechanism(), Mechanism::Elected);
    }

    #[test]
    fn three_way_tie_keeps_incumbent() {
        let t = tally_votes(&votes(&[(1, Some(2)), (2, Some(3)), (3, Some(1))]), &TEAM, Some(3));
        assert_eq!((t.leader, t.rule), (Some(3), TallyRule::TieIncumbent));
        let t = tally_votes(&votes(&[(1, Some(2)), (2, Some(3)), (3, Some(1))]), &TEAM, None);
        assert_eq!((t.leader, t.rule), (Some(1), TallyRule::TieLowestId));
    }

    #[test]
    fn plurality_without_majority() {
        let team = [1, 2, 3, 4, 5];
        let t = tally_votes(
            &votes(&[(1, Some(4)), (2, Some(4)), (3, Some(1)), (4, None), (5, Some(2))]),
            &team,
            Some(1),
        );
        assert_eq!((t.leader, t.rule), (Some(4), TallyRule::Plurality));
    }

    #[test]
    fn everyone_abstains() {
        let t = tally_votes(&votes(&[(1, None), (2, None), (3, Some(9))]), &TEAM, Some(2));
        assert_eq!((t.leader, t.rule), (Some(2), TallyRule::AllAbstain));
        assert_eq!(t.mechanism(), Mechanism::IncumbentByDefault);
    }

    #[test]
    fn history_lookup() {
        let mut s = LeadershipState::designated(1);
        s.apply(
            10,
            &tally_votes(&votes(&[(1, Some(2)), (2, Some(2))]), &TEAM, Some(1)),
        );
        assert_eq!(s.leader_at(3), Some(1));
        assert_eq!(s.leader_at(10), Some(2));
        assert_eq!(s.current_leader, Some(2));
    }
}
