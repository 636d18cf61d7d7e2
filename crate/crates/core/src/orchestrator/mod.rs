//! Episode engine: turn-taking, elections, trajectories and metrics.

pub mod batch;
pub mod config;
pub mod election;
pub mod episode;
pub mod human;
pub mod metrics;
pub mod trajectory;

pub use batch::{run_batch, BatchItem, BatchOutcome, BatchRow};
pub use config::{leader_from_prompt, ConfigError, ElectionConfig, EpisodeConfig, DEFAULT_MAX_STEPS, LEADER_CORRECTION};
pub use election::{tally_votes, Ballot, ElectionRecord, LeadershipChange, LeadershipState, Mechanism, Tally, TallyRule};
pub use episode::{replay_setup, run_episode, EpisodeContext, EpisodeError, EpisodeIo};
pub use human::{EpisodeObserver, HumanPort, HumanTurn, TurnPhase};
pub use metrics::{EpisodeMetrics, PairTokens};
pub use trajectory::{
    ActionRecord, EndReason, Footer, Header, ProgressRecord, Record, Trajectory, TrajectoryError, WarningRecord,
    FORMAT_VERSION,
};
