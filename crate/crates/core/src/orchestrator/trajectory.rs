//! JSON-lines trajectory: a header, one line per event, a footer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::EpisodeConfig;
use super::election::{ElectionRecord, LeadershipState};
use super::metrics::EpisodeMetrics;
use crate::comms::CommRecord;
use crate::gateway::BackendSpec;
use crate::world::{Action, ActionOutcome, AgentId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: u32,
    pub config: EpisodeConfig,
    /// Specs of the backends the team used, by name.
    pub backends: BTreeMap<String, BackendSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step: u32,
    pub agent: AgentId,
    pub action: Action,
    pub label: String,
    pub outcome: ActionOutcome,
    #[serde(default)]
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub step: u32,
    pub satisfied: u32,
    pub required: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningRecord {
    pub step: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentId>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    MaxSteps,
    ReplayExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub end_reason: EndReason,
    pub metrics: EpisodeMetrics,
    pub leadership: LeadershipState,
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(Box<Header>),
    Comm(CommRecord),
    Action(ActionRecord),
    Election(ElectionRecord),
    Progress(ProgressRecord),
    Warning(WarningRecord),
    Footer(Box<Footer>),
}

impl Record {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trajectory has no header line")]
    MissingHeader,
    #[error("trajectory has no footer line")]
    MissingFooter,
    #[error("line {0}: header or footer out of place")]
    Misplaced(usize),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub header: Header,
    pub events: Vec<Record>,
    pub footer: Footer,
}

impl Trajectory {
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        std::iter::once(Record::Header(Box::new(self.header.clone())))
            .chain(self.events.iter().cloned())
            .chain(std::iter::once(Record::Footer(Box::new(self.footer.clone()))))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self, TrajectoryError> {
        let mut it = records.into_iter();
        let header = match it.next() {
            Some(Record::Header(h)) => *h,
            _ => return Err(TrajectoryError::MissingHeader),
        };
        let mut events = Vec::new();
        let mut footer = None;
        for (i, r) in it.enumerate() {
            match r {
                Record::Footer(f) if footer.is_none() => footer = Some(*f),
                Record::Header(_) | Record::Footer(_) => return Err(TrajectoryError::Misplaced(i + 2)),
                _ if footer.is_some() => return Err(TrajectoryError::Misplaced(i + 2)),
                e => events.push(e),
            }
        }
        Ok(Trajectory {
            header,
            events,
            footer: footer.ok_or(TrajectoryError::MissingFooter)?,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TrajectoryError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<Record>(l).map_err(|e| TrajectoryError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_records(records)
    }

    pub fn load(path: &Path) -> Result<Self, TrajectoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrajectoryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_jsonl(&text)
    }

    /// `{scenario}_{seed}_{timestamp}.jsonl`
    pub fn file_name(&self, timestamp: &str) -> String {
        format!(
            "{}_{}_{}.jsonl",
            self.header.config.scenario, self.header.config.seed, timestamp
        )
    }

    pub fn write_to(&self, dir: &Path, timestamp: &str) -> Result<PathBuf, TrajectoryError> {
        let path = dir.join(self.file_name(timestamp));
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, self.to_jsonl()))
            .map_err(|e| TrajectoryError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(path)
    }

    pub fn comm_records(&self) -> impl Iterator<Item = &CommRecord> {
        self.events.iter().filter_map(|e| match e {
            Record::Comm(c) => Some(c),
            _ => None,
        })
    }

    pub fn action_records(&self) -> impl Iterator<Item = &ActionRecord> {
        self.events.iter().filter_map(|e| match e {
            Record::Action(a) => Some(a),
            _ => None,
        })
    }

    pub fn elections(&self) -> impl Iterator<Item = &ElectionRecord> {
        self.events.iter().filter_map(|e| match e {
            Record::Election(r) => Some(r),
            _ => None,
        })
    }

    pub fn warnings(&self) -> impl Iterator<Item = &WarningRecord> {
        self.events.iter().filter_map(|e| match e {
            Record::Warning(w) => Some(w),
            _ => None,
        })
    }

    /// Every raw reply each agent gave, in call order; enough to replay the episode.
    pub fn replies_by_agent(&self) -> BTreeMap<AgentId, Vec<String>> {
        let mut out: BTreeMap<AgentId, Vec<String>> = BTreeMap::new();
        for e in &self.events {
            match e {
                Record::Comm(c) => out.entry(c.sender).or_default().extend(c.replies.iter().cloned()),
                Record::Action(a) => out.entry(a.agent).or_default().extend(a.replies.iter().cloned()),
                _ => {}
            }
        }
        out
    }
}
