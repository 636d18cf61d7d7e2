//! `orgsim` command line: episodes, batches, reflect loops, classification,
//! reports and the HTTP service.

pub mod commands;
pub mod error;
pub mod human;
pub mod server;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use orgsim_core::agents::AgentProfile;
use orgsim_core::config::ExperimentConfig;
use orgsim_core::orchestrator::EpisodeConfig;

use commands::{Workspace, LEADER_PROMPT};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "orgsim", version, about = "Organized LLM-agent teams in a symbolic household")]
pub struct Cli {
    /// Experiment file (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Episode seed (for `batch`, the first seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode.
    Run(RunArgs),
    /// Run every condition for every seed and write a CSV with a t-test summary.
    Batch {
        /// Seeds per condition.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Criticize-and-reflect loop over organization prompts.
    Reflect {
        #[arg(long)]
        iterations: Option<u32>,
        /// Skip the critic; the coordinator sees raw dialogue.
        #[arg(long)]
        no_critic: bool,
        /// Lineage file (default: OUT_DIR/lineage.jsonl).
        #[arg(long)]
        lineage: Option<PathBuf>,
    },
    /// Evaluate the behavior classifier on a labeled corpus, or label a trajectory.
    Classify {
        /// Labeled corpus JSON (default: the built-in one).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Answer with the gold labels instead of calling the classifier backend.
        #[arg(long)]
        echo: bool,
        /// Trajectory to label.
        log: Option<PathBuf>,
    },
    /// Statistics, t-tests and communication graphs from batch output and logs.
    Report {
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Condition the others are tested against (default: the first).
        #[arg(long)]
        baseline: Option<String>,
        /// Trajectory files or directories.
        logs: Vec<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    /// Backend for every model-controlled agent.
    #[arg(long)]
    pub backend: Option<String>,
    /// Team size; rebuilds the team with one shared backend.
    #[arg(long)]
    pub agents: Option<u32>,
    /// Organization prompt.
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Play this agent yourself over stdin.
    #[arg(long, value_name = "AGENT_ID")]
    pub human: Option<u32>,
}

fn default_config() -> ExperimentConfig {
    let mut e = EpisodeConfig::uniform("prepare_afternoon_tea", 0, 3, "leaderful");
    e.organization_prompt = LEADER_PROMPT.into();
    ExperimentConfig::for_episode(e)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => default_config(),
    };
    if let (Some(seed), false) = (cli.seed, matches!(cli.command, Command::Batch { .. })) {
        cfg.episode.seed = seed;
    }
    if let Command::Run(a) = &cli.command {
        let e = &mut cfg.episode;
        if let Some(s) = &a.scenario {
            e.scenario = s.clone();
        }
        if let Some(n) = a.agents {
            let backend = a.backend.clone().unwrap_or_else(|| e.team[0].backend_ref.clone());
            e.team = (1..=n).map(|i| AgentProfile::new(i, &backend)).collect();
        } else if let Some(b) = &a.backend {
            for p in e.team.iter_mut() {
                p.backend_ref = b.clone();
            }
        }
        if let Some(p) = &a.prompt {
            e.organization_prompt = p.clone();
        }
        if let Some(m) = a.max_steps {
            e.max_steps = m;
        }
        if let Some(h) = a.human {
            let slot = e
                .team
                .iter_mut()
                .find(|p| p.agent_id == h)
                .ok_or_else(|| CliError::Config(format!("--human: Agent_{h} is not on the team")))?;
            slot.is_human = true;
        }
    }
    Ok(cfg)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    let _ = tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).try_init();
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    cfg.validate(matches!(cli.command, Command::Reflect { .. }))?;
    let mut ws = Workspace::new(cfg)?;
    let out_dir = cli.out_dir.clone();
    match cli.command {
        Command::Run(a) => {
            let (path, t) = if a.human.is_some() {
                let stdin = std::io::BufReader::new(std::io::stdin());
                let mut port = human::LineHuman::new(stdin, std::io::stdout());
                commands::run_one(&ws, &out_dir, Some(&mut port))?
            } else {
                commands::run_one(&ws, &out_dir, None)?
            };
            commands::print_episode(out, &path, &t);
        }
        Command::Batch { seeds } => {
            let report = commands::batch(&mut ws, &out_dir, cli.seed, seeds, out)?;
            if report.failures > 0 {
                return Err(CliError::Runtime(format!("{} episodes failed", report.failures)));
            }
        }
        Command::Reflect {
            iterations,
            no_critic,
            lineage,
        } => {
            commands::reflect(&mut ws, &out_dir, iterations, no_critic, lineage, out)?;
        }
        Command::Classify { corpus, echo, log } => {
            commands::classify(&ws, corpus.as_deref(), echo, log.as_deref(), out)?;
        }
        Command::Report { csv, baseline, logs } => {
            commands::report(csv.as_deref(), baseline.as_deref(), &logs, &out_dir, out)?;
        }
        Command::Serve { host, port } => {
            let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
            rt.block_on(server::serve(ws, out_dir, &host, port)).map_err(CliError::runtime)?;
        }
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("orgsim: {e}");
            e.exit_code()
        }
    }
}
