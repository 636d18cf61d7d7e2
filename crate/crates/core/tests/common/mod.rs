#![allow(dead_code)]

use std::path::PathBuf;

use orgsim_core::agents::TemplateSet;
use orgsim_core::config::ExperimentConfig;
use orgsim_core::gateway::{BackendRegistry, BackendSpec};
use orgsim_core::orchestrator::{run_episode, EpisodeConfig, EpisodeContext, EpisodeIo, Trajectory};
use orgsim_core::world::ScenarioCatalog;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

/// Built-in scripted backends under their policy names.
pub fn registry() -> BackendRegistry {
    ExperimentConfig::for_episode(EpisodeConfig::uniform("prepare_afternoon_tea", 0, 1, "greedy_searcher")).registry()
}

pub fn run(config: &EpisodeConfig, registry: &BackendRegistry) -> Trajectory {
    let catalog = ScenarioCatalog::builtin();
    let templates = TemplateSet::builtin();
    let ctx = EpisodeContext {
        catalog: &catalog,
        registry,
        templates: &templates,
    };
    run_episode(ctx, config, EpisodeIo::default()).expect("episode runs")
}

/// A team whose every agent replays its own transcript from `per_agent`.
pub fn replay_team(scenario: &str, n: u32, per_agent: &Value) -> (EpisodeConfig, BackendRegistry) {
    let mut reg = BackendRegistry::new(Default::default());
    reg.insert(
        "transcript",
        BackendSpec::scripted_with("replay", serde_json::json!({ "per_agent": per_agent })),
    );
    (EpisodeConfig::uniform(scenario, 0, n, "transcript"), reg)
}

pub const LEADER_PROMPT: &str = "Agent 1 is the leader to coordinate the task.";

pub mod world_checks;
