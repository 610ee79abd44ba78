mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpc_core::chain::{build_potential, fmt_float, BirthDeathChain};
use fpc_core::experiments::{
    escape_exponentiality_study, eta_heatmap, hitting_time_study, run_summaries, sweep_q_beta,
    ExperimentError, Metrics,
};
use fpc_core::fpc::{run_with, FpcError, RunOptions};
use fpc_core::adversary::StrategyRegistry;
use fpc_core::models::{byzantine_chain, critical_q, honest_chain, ModelError};
use fpc_core::randomness::SeedSchedule;
use serde::Serialize;
use thiserror::Error;

use config::{ConfigError, Grid, RunConfig};
use output::Study;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "FPCSIM_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Violation(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Usage(_) => 2,
            Self::Io { .. } => 3,
            Self::Violation(_) => 4,
        }
    }
}

impl From<FpcError> for CliError {
    fn from(e: FpcError) -> Self {
        match e {
            FpcError::StrategyViolation(_) => Self::Violation(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Fpc(inner) => inner.into(),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Usage(e.to_string())
    }
}

/// Majority-dynamics analysis and FPC simulation.
#[derive(Parser)]
#[command(name = "fpcsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel and potential table of a majority-dynamics walk.
    Potential(PotentialArgs),
    /// Critical adversary fraction q* of the 3-query walk.
    Qstar {
        /// Bisection tolerance on q.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Simulate the consensus protocol.
    Fpc {
        #[command(subcommand)]
        study: FpcStudy,
    },
    /// Hitting time of consensus for the honest walk started at n/2.
    Hitting(HittingArgs),
    /// Escape times from the central well of the Byzantine walk.
    Escape(EscapeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Honest,
    Byzantine,
}

#[derive(Args)]
struct PotentialArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    n: u64,
    /// Adversary fraction (byzantine model).
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Queries per update, odd (byzantine model).
    #[arg(long, default_value_t = 3)]
    k: u32,
    /// Output directory; the table goes to stdout when neither this nor
    /// FPCSIM_OUT_DIR is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides the config and FPCSIM_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum FpcStudy {
    /// Monte Carlo runs at one parameter point.
    Run(StudyArgs),
    /// Grid over adversary fraction q and threshold margin beta.
    Sweep {
        #[command(flatten)]
        study: StudyArgs,
        /// q grid `start:stop:step` (inclusive).
        #[arg(long = "q")]
        q_grid: Option<String>,
        /// beta grid `start:stop:step` (inclusive).
        #[arg(long = "beta")]
        beta_grid: Option<String>,
    },
    /// Per-round eta histogram of one run.
    Heatmap(StudyArgs),
}

#[derive(Args)]
struct HittingArgs {
    /// Comma-separated system sizes, each divisible by 4.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EscapeArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    q: f64,
    #[arg(long, default_value_t = 3)]
    k: u32,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// Starting state; defaults to the bottom of the central well.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn require_out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(env_out_dir)
        .ok_or(CliError::Config(ConfigError::Missing("out_dir")))
}

fn potential_table(chain: &BirthDeathChain) -> Result<String, CliError> {
    let v = build_potential(chain).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = String::from("m,p,q,v,V\n");
    for m in 0..=chain.size() {
        let potential = if m < v.len() { fmt_float(v.get(m)) } else { String::new() };
        let _ = writeln!(
            out,
            "{m},{},{},{},{potential}",
            fmt_float(chain.down(m)),
            fmt_float(chain.up(m)),
            fmt_float(chain.hold(m))
        );
    }
    Ok(out)
}

fn cmd_potential(args: PotentialArgs) -> Result<(), CliError> {
    let chain = match args.model {
        Model::Honest => honest_chain(args.n)?,
        Model::Byzantine => byzantine_chain(args.n, args.q, args.k)?,
    };
    let table = potential_table(&chain)?;
    let mut config = BTreeMap::new();
    config.insert("n".to_string(), args.n.to_string());
    let model = match args.model {
        Model::Honest => "honest",
        Model::Byzantine => {
            config.insert("q".to_string(), fmt_float(args.q));
            config.insert("k".to_string(), args.k.to_string());
            "byzantine"
        }
    };
    config.insert("model".to_string(), model.to_string());
    match args.out.or_else(env_out_dir) {
        Some(dir) => {
            let mut study = Study::new(&dir, "potential", None, config);
            study.add_csv("potential.csv", &table);
            report(study.finish(None)?);
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_qstar(tol: f64) -> Result<(), CliError> {
    if !(tol > 0.0 && tol < 0.1) {
        return Err(CliError::Usage(format!("tolerance must lie in (0, 0.1), got {tol}")));
    }
    let q = critical_q(tol)?;
    let digits = (-tol.log10()).ceil().max(0.0) as usize + 1;
    println!("{q:.digits$}");
    println!("tolerance {tol:e}");
    Ok(())
}

fn load_config(args: &StudyArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for pair in &args.overrides {
        config.set_pair(pair)?;
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    config.params.validate()?;
    StrategyRegistry::with_builtins()
        .build(&config.adversary)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn open_study(config: &RunConfig, command: &str) -> Result<(Study, u64), CliError> {
    let seed = config.seed()?;
    let dir = require_out_dir(config.out_dir.clone())?;
    Ok((Study::new(&dir, command, Some(seed), config.resolved()), seed))
}

#[derive(Serialize)]
struct RunMetrics<'a> {
    adversary: &'a str,
    metrics: &'a Metrics,
}

fn cmd_fpc_run(args: StudyArgs) -> Result<(), CliError> {
    let config = load_config(&args)?;
    let (mut study, seed) = open_study(&config, "fpc run")?;
    let runs = run_summaries(config.params, &config.adversary, config.runs, seed, config.workers)?;
    let schedule = SeedSchedule::new(seed);
    let mut table = String::from("run,seed,outcome,rounds,psi_round\n");
    for (i, r) in runs.iter().enumerate() {
        let psi = r.psi_round.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(table, "{i},{},{},{},{psi}", schedule.derive(i as u64), r.tag.name(), r.rounds);
    }
    study.add_csv("runs.csv", &table);
    let metrics = Metrics::from_runs(&runs);
    study.add_json(
        "metrics.json",
        &RunMetrics {
            adversary: &config.adversary.name,
            metrics: &metrics,
        },
    );
    // Full trace of run 0.
    let strategy = StrategyRegistry::with_builtins()
        .build(&config.adversary)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (trace, _) = run_with(config.params, strategy, schedule.derive(0), RunOptions::default())?;
    study.add_json("trace.json", &trace);
    report(study.finish(config.workers)?);
    Ok(())
}

fn cmd_fpc_sweep(args: StudyArgs, q_grid: Option<String>, beta_grid: Option<String>) -> Result<(), CliError> {
    let mut config = load_config(&args)?;
    let grid = |text: &str, key: &str| {
        Grid::parse(text).map_err(|reason| {
            CliError::Config(ConfigError::Value {
                key: key.to_string(),
                reason,
            })
        })
    };
    if let Some(text) = q_grid {
        config.q_grid = grid(&text, "q")?;
    }
    if let Some(text) = beta_grid {
        config.beta_grid = grid(&text, "beta")?;
    }
    let (mut study, seed) = open_study(&config, "fpc sweep")?;
    let sweep = sweep_q_beta(
        &config.q_grid.values(),
        &config.beta_grid.values(),
        config.params,
        &config.adversary,
        config.runs,
        seed,
        config.workers,
    )?;
    study.add_csv("sweep.csv", &sweep.to_csv());
    report(study.finish(config.workers)?);
    Ok(())
}

#[derive(Serialize)]
struct HeatmapSummary {
    buckets: usize,
    outcome: &'static str,
    rounds_used: usize,
    psi_round: Option<usize>,
    central_exit_round: Option<usize>,
}

fn cmd_fpc_heatmap(args: StudyArgs) -> Result<(), CliError> {
    let config = load_config(&args)?;
    let (mut study, seed) = open_study(&config, "fpc heatmap")?;
    let map = eta_heatmap(config.params, &config.adversary, config.buckets, seed)?;
    study.add_csv("heatmap.csv", &map.to_csv());
    study.add_json(
        "heatmap.json",
        &HeatmapSummary {
            buckets: map.buckets,
            outcome: map.outcome.name(),
            rounds_used: map.rounds_used,
            psi_round: map.psi_round,
            central_exit_round: map.central_exit_round(config.params.beta),
        },
    );
    report(study.finish(config.workers)?);
    Ok(())
}

fn cmd_hitting(args: HittingArgs) -> Result<(), CliError> {
    let dir = require_out_dir(args.out)?;
    let rows = hitting_time_study(&args.n, args.runs, args.seed, args.workers)?;
    let mut config = BTreeMap::new();
    let ns: Vec<String> = args.n.iter().map(u64::to_string).collect();
    config.insert("n".to_string(), ns.join(","));
    config.insert("runs".to_string(), args.runs.to_string());
    let mut study = Study::new(&dir, "hitting", Some(args.seed), config);
    let mut table = String::from("n,runs,exact,mean,std_error,bound,tail_1,tail_2,tail_3\n");
    for r in &rows {
        let [t1, t2, t3] = r.tail_exceedance.map(fmt_float);
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{t1},{t2},{t3}",
            r.n,
            r.runs,
            fmt_float(r.exact),
            fmt_float(r.mean),
            fmt_float(r.std_error),
            fmt_float(r.bound)
        );
    }
    study.add_csv("hitting.csv", &table);
    report(study.finish(args.workers)?);
    Ok(())
}

fn cmd_escape(args: EscapeArgs) -> Result<(), CliError> {
    let dir = require_out_dir(args.out)?;
    let diagnostics = fpc_core::experiments::with_workers(args.workers, || {
        escape_exponentiality_study(args.n, args.q, args.k, args.runs, args.seed, args.start)
    })?;
    let mut config = BTreeMap::new();
    config.insert("n".to_string(), args.n.to_string());
    config.insert("q".to_string(), fmt_float(args.q));
    config.insert("k".to_string(), args.k.to_string());
    config.insert("runs".to_string(), args.runs.to_string());
    if let Some(start) = args.start {
        config.insert("start".to_string(), start.to_string());
    }
    let mut study = Study::new(&dir, "escape", Some(args.seed), config);
    study.add_json("escape.json", &diagnostics);
    report(study.finish(args.workers)?);
    Ok(())
}

fn report(paths: Vec<PathBuf>) {
    for path in paths {
        eprintln!("wrote {}", path.display());
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Potential(args) => cmd_potential(args),
        Command::Qstar { tol } => cmd_qstar(tol),
        Command::Fpc { study } => match study {
            FpcStudy::Run(args) => cmd_fpc_run(args),
            FpcStudy::Sweep {
                study,
                q_grid,
                beta_grid,
            } => cmd_fpc_sweep(study, q_grid, beta_grid),
            FpcStudy::Heatmap(args) => cmd_fpc_heatmap(args),
        },
        Command::Hitting(args) => cmd_hitting(args),
        Command::Escape(args) => cmd_escape(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
