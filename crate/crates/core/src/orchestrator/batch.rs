//! Many independent episodes in parallel, results in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EpisodeConfig;
use super::episode::{run_episode, EpisodeContext, EpisodeIo};
use super::trajectory::Trajectory;

/// One row per episode. A failed episode keeps its slot with `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub condition: String,
    pub seed: u64,
    pub steps: u32,
    pub avg_tokens_per_step: f64,
    pub completed: bool,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct BatchItem {
    pub condition: String,
    pub config: EpisodeConfig,
}

pub struct BatchOutcome {
    pub row: BatchRow,
    pub trajectory: Option<Trajectory>,
}

pub fn run_batch(ctx: EpisodeContext<'_>, items: &[BatchItem]) -> Vec<BatchOutcome> {
    items
        .par_iter()
        .map(|item| match run_episode(ctx, &item.config, EpisodeIo::default()) {
            Ok(t) => BatchOutcome {
                row: BatchRow {
                    condition: item.condition.clone(),
                    seed: item.config.seed,
                    steps: t.footer.metrics.steps_to_completion,
                    avg_tokens_per_step: t.footer.metrics.avg_tokens_per_step,
                    completed: t.footer.metrics.completed,
                    flagged: t.footer.metrics.flagged,
                    error: None,
                },
                trajectory: Some(t),
            },
            Err(e) => {
                tracing::error!(condition = %item.condition, seed = item.config.seed, "episode failed: {e}");
                BatchOutcome {
                    row: BatchRow {
                        condition: item.condition.clone(),
                        seed: item.config.seed,
                        steps: item.config.max_steps,
                        avg_tokens_per_step: 0.0,
                        completed: false,
                        flagged: true,
                        error: Some(e.to_string()),
                    },
                    trajectory: None,
                }
            }
        })
        .collect()
}
