//! Workflow implementations behind the subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use orgsim_core::agents::TemplateSet;
use orgsim_core::analysis::{
    behavior_stats, comm_graph, compare_steps, detect_ineffective, evaluate_classifier, label_messages, messages,
    read_csv, summarize, write_csv, Corpus, CsvRow,
};
use orgsim_core::config::{BatchPlan, Condition, ExperimentConfig};
use orgsim_core::gateway::{Backend, BackendRegistry, BackendSpec};
use orgsim_core::orchestrator::{
    run_batch, run_episode, EpisodeContext, EpisodeIo, HumanPort, Trajectory,
};
use orgsim_core::reflect::{run_reflect_loop, Mode};
use orgsim_core::world::ScenarioCatalog;

use crate::error::CliError;

pub const LEADER_PROMPT: &str = "Agent 1 is the leader to coordinate the task.";

pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

/// Loaded config plus everything needed to run episodes.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub catalog: ScenarioCatalog,
    pub templates: TemplateSet,
    pub registry: BackendRegistry,
}

impl Workspace {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        Ok(Workspace {
            catalog: config.catalog()?,
            templates: config.templates()?,
            registry: config.registry(),
            config,
        })
    }

    pub fn context(&self) -> EpisodeContext<'_> {
        EpisodeContext {
            catalog: &self.catalog,
            registry: &self.registry,
            templates: &self.templates,
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// One episode, written to `out_dir`. Returns the trajectory file.
pub fn run_one(
    ws: &Workspace,
    out_dir: &Path,
    human: Option<&mut dyn HumanPort>,
) -> Result<(PathBuf, Trajectory), CliError> {
    let t = run_episode(ws.context(), &ws.config.episode, EpisodeIo { human, observer: None }).map_err(CliError::runtime)?;
    let path = t.write_to(out_dir, &timestamp()).map_err(CliError::runtime)?;
    Ok((path, t))
}

pub fn print_episode(out: &mut dyn Write, path: &Path, t: &Trajectory) {
    let m = &t.footer.metrics;
    let _ = writeln!(
        out,
        "{}: {} after {} steps ({:?}), {:.2} tokens per step, {} messages",
        t.header.config.scenario,
        if m.completed { "completed" } else { "not completed" },
        m.steps_to_completion,
        t.footer.end_reason,
        m.avg_tokens_per_step,
        m.message_count
    );
    let _ = writeln!(out, "trajectory: {}", path.display());
}

/// Conditions used when the config declares none: disorganized versus a designated leader.
pub fn default_conditions() -> Vec<Condition> {
    let c = |name: &str, prompt: &str| Condition {
        name: name.into(),
        organization_prompt: Some(prompt.into()),
        backend: None,
        election: None,
        leader_correction: None,
        scenario: None,
    };
    vec![c("disorganized", ""), c("leader", LEADER_PROMPT)]
}

pub struct BatchReport {
    pub csv: PathBuf,
    pub rows: Vec<CsvRow>,
    pub failures: usize,
}

pub fn batch(ws: &mut Workspace, out_dir: &Path, base_seed: Option<u64>, seed_count: Option<u64>, out: &mut dyn Write) -> Result<BatchReport, CliError> {
    let plan = ws.config.batch.get_or_insert_with(|| BatchPlan {
        seeds: vec![],
        seed_count: 20,
        conditions: vec![],
    });
    if plan.conditions.is_empty() {
        plan.conditions = default_conditions();
    }
    if let Some(n) = seed_count {
        plan.seed_count = n;
        plan.seeds.clear();
    }
    if let Some(s) = base_seed {
        if plan.seeds.is_empty() {
            plan.seeds = (s..s + plan.seed_count).collect();
        }
    }
    let items = ws.config.batch_items();
    let outcomes = run_batch(ws.context(), &items);
    let traj_dir = out_dir.join("trajectories");
    let stamp = timestamp();
    let mut failures = 0;
    for o in &outcomes {
        match &o.trajectory {
            Some(t) => {
                t.write_to(&traj_dir.join(&o.row.condition), &stamp).map_err(CliError::runtime)?;
            }
            None => {
                failures += 1;
                let _ = writeln!(out, "episode failed: {} seed {}: {}", o.row.condition, o.row.seed, o.row.error.as_deref().unwrap_or("?"));
            }
        }
    }
    let rows: Vec<CsvRow> = outcomes.iter().map(|o| CsvRow::from(&o.row)).collect();
    create_dir(out_dir)?;
    let csv = out_dir.join("batch.csv");
    let file = fs::File::create(&csv).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", csv.display())))?;
    write_csv(&rows, file).map_err(CliError::runtime)?;
    print_summary(&rows, None, out)?;
    let _ = writeln!(out, "rows: {} -> {}", rows.len(), csv.display());
    Ok(BatchReport { csv, rows, failures })
}

/// Per-condition table and one-tailed t-tests of each condition against the baseline.
pub fn print_summary(rows: &[CsvRow], baseline: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let summaries = summarize(rows);
    let _ = writeln!(out, "{:<20} {:>4} {:>10} {:>8} {:>10} {:>12}", "condition", "n", "steps", "sd", "tokens", "completed");
    for s in &summaries {
        let _ = writeln!(
            out,
            "{:<20} {:>4} {:>10.2} {:>8.2} {:>10.2} {:>11.0}%",
            s.condition,
            s.steps.n,
            s.steps.mean,
            s.steps.std,
            s.avg_tokens_per_step.mean,
            100.0 * s.completion_rate
        );
    }
    let Some(first) = summaries.first() else {
        return Ok(());
    };
    let base = baseline.unwrap_or(&first.condition);
    if !summaries.iter().any(|s| s.condition == base) {
        return Err(CliError::Config(format!("baseline condition `{base}` not found")));
    }
    for s in summaries.iter().filter(|s| s.condition != base) {
        match compare_steps(rows, base, &s.condition) {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "t-test {} < {} (steps): t = {:.3}, df = {}, one-tailed p = {:.4}{}",
                    s.condition,
                    base,
                    r.t,
                    r.df,
                    r.p_one_tailed,
                    if r.degenerate { " (zero variance)" } else { "" }
                );
            }
            Err(e) => {
                let _ = writeln!(out, "t-test {} vs {}: {e}", s.condition, base);
            }
        }
    }
    Ok(())
}

pub fn reflect(ws: &mut Workspace, out_dir: &Path, iterations: Option<u32>, no_critic: bool, lineage: Option<PathBuf>, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let mut plan = ws.config.reflect.clone().unwrap_or_default();
    if let Some(n) = iterations {
        plan.iterations = n;
    }
    if no_critic {
        plan.mode = Mode::NoCritic;
    }
    create_dir(out_dir)?;
    let lineage = lineage.unwrap_or_else(|| out_dir.join("lineage.jsonl"));
    let result = run_reflect_loop(ws.context(), &ws.config.episode, &plan.settings(), Some(&lineage));
    let stamp = timestamp();
    for (i, t) in result.trajectories.iter().enumerate() {
        t.write_to(&out_dir.join("reflect").join(format!("iteration_{i}")), &stamp).map_err(CliError::runtime)?;
    }
    for r in &result.records {
        let _ = writeln!(out, "[{}] {} steps, {:.2} tokens/step: {}", r.iteration, r.steps, r.comm_cost, r.organization_prompt);
        for a in &r.unknown_agents {
            let _ = writeln!(out, "    warning: candidate names unknown agent `{a}`");
        }
    }
    let _ = writeln!(out, "lineage: {} ({} records)", lineage.display(), result.records.len());
    match result.error {
        Some(e) => Err(CliError::Runtime(format!("reflect loop stopped: {e}"))),
        None => Ok(lineage),
    }
}

/// A backend that answers each classifier request with the gold labels, in corpus order.
fn echo_backend(corpus: &Corpus) -> Result<Box<dyn Backend>, CliError> {
    let replies: Vec<String> = corpus.samples.iter().map(|s| s.human_labels.reply_text()).collect();
    let mut reg = BackendRegistry::new(Default::default());
    reg.insert("echo", BackendSpec::scripted_with("replay", serde_json::json!({ "replies": replies })));
    reg.instantiate("echo", None, 0).map_err(CliError::runtime)
}

pub fn classify(ws: &Workspace, corpus: Option<&Path>, echo: bool, log: Option<&Path>, out: &mut dyn Write) -> Result<f64, CliError> {
    if let Some(log) = log {
        if echo {
            return Err(CliError::Config("--echo only applies to the labeled corpus".into()));
        }
        let t = Trajectory::load(log).map_err(CliError::runtime)?;
        let mut backend = ws.registry.instantiate(&ws.config.classifier_backend, None, 0).map_err(CliError::runtime)?;
        let labels = label_messages(&ws.templates, &t, backend.as_mut()).map_err(CliError::runtime)?;
        let msgs = messages(&t);
        let _ = writeln!(out, "step sender  I L R  message");
        for (m, l) in msgs.iter().zip(&labels) {
            let [i, ld, r] = l.as_array().map(u8::from);
            let _ = writeln!(out, "{:>4} Agent_{} {i} {ld} {r}  -> {}: {}", m.step, m.sender, m.recipients.describe(), m.content);
        }
        for row in behavior_stats(&msgs, &t.footer.leadership, &labels) {
            let _ = writeln!(
                out,
                "{:?}: {} messages, info sharing {:.1}%, leadership/assistance {:.1}%, request guidance {:.1}%",
                row.role, row.messages, row.info_sharing, row.leadership_assistance, row.request_guidance
            );
        }
        return Ok(f64::NAN);
    }
    let corpus = match corpus {
        Some(p) => Corpus::load(p).map_err(CliError::Runtime)?,
        None => Corpus::builtin(),
    };
    let mut backend = if echo {
        echo_backend(&corpus)?
    } else {
        ws.registry.instantiate(&ws.config.classifier_backend, None, 0).map_err(CliError::runtime)?
    };
    let e = evaluate_classifier(&ws.templates, &corpus, backend.as_mut()).map_err(CliError::runtime)?;
    let pct = 100.0 * e.accuracy.ratio();
    let _ = writeln!(out, "accuracy: {}/{} = {pct:.2}%", e.accuracy.matched, e.accuracy.total);
    for m in &e.mismatches {
        let _ = writeln!(out, "  mismatch: row {} label {}", m.row, m.label);
    }
    Ok(pct)
}

fn collect_logs(paths: &[PathBuf], into: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            let (dirs, files): (Vec<PathBuf>, Vec<PathBuf>) = entries.into_iter().partition(|e| e.is_dir());
            into.extend(files.into_iter().filter(|f| f.extension().is_some_and(|x| x == "jsonl")));
            collect_logs(&dirs, into)?;
        } else if p.exists() {
            into.push(p.clone());
        } else {
            return Err(CliError::Runtime(format!("no such file: {}", p.display())));
        }
    }
    Ok(())
}

pub fn report(csv: Option<&Path>, baseline: Option<&str>, logs: &[PathBuf], out_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    if csv.is_none() && logs.is_empty() {
        return Err(CliError::Config("report needs --csv and/or trajectory files".into()));
    }
    if let Some(csv) = csv {
        let file = fs::File::open(csv).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", csv.display())))?;
        let rows = read_csv(file).map_err(CliError::runtime)?;
        print_summary(&rows, baseline, out)?;
    }
    let mut files = Vec::new();
    collect_logs(logs, &mut files)?;
    if files.is_empty() {
        return Ok(());
    }
    let graphs = out_dir.join("graphs");
    create_dir(&graphs)?;
    let _ = writeln!(out, "{:<48} {:>5} {:>8} {:>5} {:>5} {:>5} {:>5}", "log", "steps", "tok/step", "dup", "rep", "conf", "ign");
    for (i, f) in files.iter().enumerate() {
        let t = Trajectory::load(f).map_err(|e| CliError::Runtime(format!("{}: {e}", f.display())))?;
        let roster = t.header.config.roster();
        let msgs = messages(&t);
        let g = comm_graph(&msgs, &roster, t.footer.leadership.current_leader);
        let stem = format!("{:03}_{}", i, f.file_stem().and_then(|s| s.to_str()).unwrap_or("log"));
        fs::write(graphs.join(format!("{stem}.dot")), g.to_dot()).map_err(CliError::runtime)?;
        fs::write(graphs.join(format!("{stem}.json")), serde_json::to_string_pretty(&g.to_json()).expect("json")).map_err(CliError::runtime)?;
        let c = detect_ineffective(&msgs, &roster);
        let m = &t.footer.metrics;
        let name = f.file_name().and_then(|s| s.to_str()).unwrap_or("?");
        let _ = writeln!(
            out,
            "{:<48} {:>5} {:>8.2} {:>5} {:>5} {:>5} {:>5}",
            name, m.steps_to_completion, m.avg_tokens_per_step, c.duplicated, c.repeated_command, c.conflicting_command, c.ignored_request
        );
    }
    let _ = writeln!(out, "graphs: {}", graphs.display());
    Ok(())
}
