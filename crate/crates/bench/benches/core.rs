use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use orgsim_core::analysis::two_sample_t;
use orgsim_core::config::ExperimentConfig;
use orgsim_core::orchestrator::{run_episode, EpisodeConfig, EpisodeContext, EpisodeIo};

fn episodes(c: &mut Criterion) {
    let mut group = c.benchmark_group("episode");
    for (scenario, backend) in [("prepare_afternoon_tea", "leaderful"), ("prepare_afternoon_tea", "noisy")] {
        let mut config = EpisodeConfig::uniform(scenario, 7, 3, backend);
        config.organization_prompt = "Agent 1 is the leader to coordinate the task.".into();
        let exp = ExperimentConfig::for_episode(config.clone());
        let (catalog, templates, registry) = (exp.catalog().unwrap(), exp.templates().unwrap(), exp.registry());
        let ctx = EpisodeContext {
            catalog: &catalog,
            registry: &registry,
            templates: &templates,
        };
        group.bench_function(format!("{scenario}/{backend}"), |b| {
            b.iter(|| run_episode(ctx, black_box(&config), EpisodeIo { human: None, observer: None }).unwrap())
        });
    }
    group.finish();
}

fn legal_actions(c: &mut Criterion) {
    let catalog = ExperimentConfig::for_episode(EpisodeConfig::uniform("prepare_afternoon_tea", 0, 3, "noisy")).catalog().unwrap();
    let mut group = c.benchmark_group("legal_actions");
    for name in catalog.names() {
        let world = catalog.world(&name).unwrap();
        let agents: Vec<u32> = (1..=world.scenario().agent_count.max(1)).collect();
        let mut state = world.init(3, &agents);
        // Walk a little so the state is not the trivial initial one.
        for i in 0..40 {
            let agent = agents[i % agents.len()];
            let legal = world.legal_actions(&state, agent);
            let a = legal[i % legal.len()].action.clone();
            world.apply_action(&mut state, agent, &a);
        }
        group.bench_function(name.to_string(), |b| b.iter(|| world.legal_actions(black_box(&state), agents[0])));
    }
    group.finish();
}

fn t_test(c: &mut Criterion) {
    let a: Vec<f64> = (0..20).map(|i| 30.0 + (i * 7 % 11) as f64).collect();
    let b: Vec<f64> = (0..20).map(|i| 22.0 + (i * 5 % 13) as f64).collect();
    c.bench_function("two_sample_t/20x20", |bench| bench.iter(|| two_sample_t(black_box(&a), black_box(&b)).unwrap()));
}

criterion_group!(benches, episodes, legal_actions, t_test);
criterion_main!(benches);
