//! Command-line front end: run campaigns, verify stored traces, aggregate
//! summaries into tables.
//!
//! Exit codes: 0 on success, 1 on bad input or I/O failure, 2 when a run or
//! replay breaks an invariant.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tabletop::harness::{
    self, emit_report, replay, run_campaign_mode, write_run, CampaignConfig, ExecutionMode, MetricsSummary,
    MonitorKind, ReportFormat,
};
use tabletop::perturb::Scenario;
use tabletop::planner::PlannerKind;
use tabletop::tasks::TaskKind;

const VIOLATION: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "tabletop", version, about = "Seeded tabletop rearrangement campaigns under scene perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one campaign and print its summary.
    Run(RunArgs),
    /// Re-run a stored campaign and compare it with its traces.
    Replay {
        /// Directory written by `run --out`.
        dir: PathBuf,
    },
    /// Aggregate stored summaries into one table.
    Report {
        /// Run directories, or parents searched recursively for summary.json.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn parse_named<T>(name: &str, from: fn(&str) -> Option<T>, all: &[&str]) -> Result<T, String> {
    from(name).ok_or_else(|| format!("expected one of: {}", all.join(", ")))
}

fn task_arg(s: &str) -> Result<TaskKind, String> {
    parse_named(s, TaskKind::from_name, &TaskKind::ALL.map(|t| t.name()))
}

fn scenario_arg(s: &str) -> Result<Scenario, String> {
    parse_named(s, Scenario::from_name, &Scenario::ALL.map(|t| t.name()))
}

fn planner_arg(s: &str) -> Result<PlannerKind, String> {
    parse_named(s, PlannerKind::from_name, &PlannerKind::ALL.map(|t| t.name()))
}

fn monitor_arg(s: &str) -> Result<MonitorKind, String> {
    parse_named(s, MonitorKind::from_name, &["oracle", "noisy"])
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML file with any campaign fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = task_arg)]
    task: Option<TaskKind>,
    #[arg(long, value_parser = scenario_arg)]
    scenario: Option<Scenario>,
    #[arg(long, value_parser = planner_arg)]
    planner: Option<PlannerKind>,
    /// oracle or noisy.
    #[arg(long, value_parser = monitor_arg)]
    monitor: Option<MonitorKind>,
    /// Chance the execution answer is flipped (noisy monitor).
    #[arg(long)]
    noise_eps1: Option<f64>,
    /// Chance each perturbation report is dropped (noisy monitor).
    #[arg(long)]
    noise_eps2: Option<f64>,
    /// Chance a spurious addition is reported (noisy monitor).
    #[arg(long)]
    noise_eps3: Option<f64>,
    #[arg(long)]
    failure_prob: Option<f64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write config, summary and JSONL traces here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run episodes one after another.
    #[arg(long)]
    serial: bool,
}

impl RunArgs {
    fn config(&self) -> Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => CampaignConfig::default(),
        };
        if let Some(v) = self.task {
            c.task = v;
        }
        if let Some(v) = self.scenario {
            c.scenario = v;
        }
        if let Some(v) = self.planner {
            c.planner = v;
        }
        if let Some(v) = self.monitor {
            c.monitor = v;
        }
        if let Some(v) = self.noise_eps1 {
            c.noise.flip_exec = v;
        }
        if let Some(v) = self.noise_eps2 {
            c.noise.miss_perturb = v;
        }
        if let Some(v) = self.noise_eps3 {
            c.noise.hallucinate = v;
        }
        if let Some(v) = self.failure_prob {
            c.failure_prob = v;
        }
        if let Some(v) = self.episodes {
            c.episodes = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(args: &RunArgs) -> Result<u8> {
    let config = args.config()?;
    if config.monitor == MonitorKind::Oracle && !config.noise.is_oracle() {
        eprintln!("warning: noise settings are ignored with the oracle monitor");
    }
    let mode = if args.serial { ExecutionMode::Serial } else { ExecutionMode::Auto };
    let result = run_campaign_mode(&config, mode)?;
    print!("{}", emit_report(std::slice::from_ref(&result.summary), ReportFormat::Table));
    if let Some(r) = result.summary.attempts_per_skill() {
        println!("attempts per completed skill: {r:.4}");
    }
    if let Some(dir) = &args.out {
        write_run(dir, &result)?;
        println!("wrote {}", dir.display());
    }
    let violations: Vec<_> = result.violations().collect();
    for (i, v) in &violations {
        eprintln!("episode {i}: {v}");
    }
    Ok(if violations.is_empty() { 0 } else { VIOLATION })
}

fn find_summaries(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let direct = path.join(harness::SUMMARY_FILE);
    if direct.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_summaries(&e, out)?;
    }
    Ok(())
}

fn report(dirs: &[PathBuf], format: Format) -> Result<u8> {
    let mut found = Vec::new();
    for d in dirs {
        find_summaries(d, &mut found)?;
    }
    if found.is_empty() {
        bail!("no {} found", harness::SUMMARY_FILE);
    }
    let summaries = found
        .iter()
        .map(|d| harness::read_summary(d).with_context(|| format!("reading summary in {}", d.display())))
        .collect::<Result<Vec<MetricsSummary>>>()?;
    let format = match format {
        Format::Table => ReportFormat::Table,
        Format::Csv => ReportFormat::Csv,
    };
    print!("{}", emit_report(&summaries, format));
    Ok(0)
}

fn replay_dir(dir: &Path) -> Result<u8> {
    let out = replay(dir)?;
    println!(
        "{} episodes, {} mismatched, summary {}, {} violations",
        out.episodes,
        out.mismatched.len(),
        if out.summary_matches { "matches" } else { "differs" },
        out.violations
    );
    for i in &out.mismatched {
        println!("episode {i} differs from its trace");
    }
    Ok(if out.ok() { 0 } else { VIOLATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Run(args) => run(args),
        Command::Replay { dir } => replay_dir(dir),
        Command::Report { dirs, format } => report(dirs, *format),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
