mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use ruledist::bench::{self, BenchConfig, BenchError, BenchRow, Method, RowFormat};
use ruledist::domain::{generate_instance, DomainError, GeneratorConfig, ProblemInstance};
use ruledist::env::RewardKind;
use ruledist::heuristics::random_insertion;
use ruledist::model::{ModelError, SelectMode};
use ruledist::oracle::{solve_bnb, Objective, OracleReport, SearchLimits};
use ruledist::seed::{derive_seed, rng_from};
use ruledist::trainer::{self, AdvantageMode, TrainConfig, TrainError};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(m) => Failure::Usage(m),
            BenchError::Train(t) => t.into(),
            BenchError::Model(m) => m.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Failure::Usage(m),
            TrainError::Domain(DomainError::Config(m)) => Failure::Usage(m),
            TrainError::Model(m) => m.into(),
            TrainError::Io(_) | TrainError::Csv(_) => Failure::Data(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => Failure::Usage(m),
            ModelError::Autodiff(_) => Failure::Internal(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<DomainError> for Failure {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::Config(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "ruledist", version, about = "Rule placement on edge nodes: instances, solvers, training and benchmarks")]
struct Cli {
    /// Base seed; every command derives its randomness from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instance files.
    Gen(GenArgs),
    /// Solve one instance with one method and print the solution JSON.
    Solve(SolveArgs),
    /// Exact branch-and-bound solve with optional limits.
    Oracle(OracleArgs),
    /// Train an actor-critic pair.
    Train(TrainArgs),
    /// Compare trained checkpoints against the baselines on a sweep.
    Eval(EvalArgs),
    /// Run a full benchmark sweep.
    Bench(BenchArgs),
    /// Gap or timing tables from benchmark rows.
    Report(ReportArgs),
    /// Per-KPI plot series from benchmark rows.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Args)]
struct GenArgs {
    /// Generator config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rules: Option<usize>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output directory; instances are printed as JSON lines when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// agent, DR-DC, DR-AC, AR-DC, AR-AC, random or oracle.
    #[arg(long)]
    method: Method,
    /// Actor checkpoint, required for the agent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Objective the agent was trained for, or the oracle optimizes.
    #[arg(long, default_value = "greedy")]
    objective: Objective,
    /// Sample actions instead of greedy decoding.
    #[arg(long)]
    stochastic: bool,
    #[arg(long, default_value_t = 60_000)]
    time_limit_ms: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "greedy")]
    objective: Objective,
    #[arg(long, default_value_t = 60_000)]
    time_limit_ms: u64,
    #[arg(long)]
    node_limit: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config JSON laid over the chosen scale's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value = "greedy")]
    objective: Objective,
    /// Directory for the final checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rules: Option<usize>,
    #[arg(long)]
    lr_actor: Option<f64>,
    #[arg(long)]
    lr_critic: Option<f64>,
    #[arg(long)]
    entropy_coeff: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    advantage: Option<AdvantageArg>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Leave wall_ms at zero so the log is reproducible byte for byte.
    #[arg(long)]
    no_wall_time: bool,
    /// Print a progress line every this many steps.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdvantageArg {
    Td0,
    MonteCarlo,
}

#[derive(Args)]
struct SweepArgs {
    /// Benchmark config JSON laid over the chosen scale's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<usize>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    oracle_time_limit_ms: Option<u64>,
    #[arg(long)]
    oracle_node_limit: Option<u64>,
    /// Leave solve_ms at zero so rows are reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    /// Rows file; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Actor checkpoints, one per training seed.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Gap,
    Timing,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    rows: PathBuf,
    #[arg(long, value_enum, default_value = "gap")]
    table: Table,
    #[arg(long, default_value = "oracle")]
    reference: String,
    /// Decides which KPI gaps are reported besides rejection rate.
    #[arg(long, default_value = "greedy")]
    objective: Objective,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    rows: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => gen(a, seed),
        Command::Solve(a) => solve(a, seed),
        Command::Oracle(a) => oracle(a),
        Command::Train(a) => train(a, seed),
        Command::Eval(a) => {
            let mut cfg = sweep_config(&a.sweep, seed)?;
            if a.sweep.methods.is_none() {
                cfg.methods = Method::ALL.into_iter().filter(|m| *m != Method::Oracle).collect();
            }
            if !cfg.methods.contains(&Method::Agent) {
                cfg.methods.insert(0, Method::Agent);
            }
            cfg.agent_seeds = a.checkpoints.len();
            sweep(&cfg, &a.checkpoints, &a.sweep.out)
        }
        Command::Bench(a) => {
            let mut cfg = sweep_config(&a.sweep, seed)?;
            if a.checkpoints.is_empty() && a.sweep.methods.is_none() {
                cfg.methods.retain(|m| *m != Method::Agent);
            }
            if !a.checkpoints.is_empty() {
                cfg.agent_seeds = a.checkpoints.len();
            }
            sweep(&cfg, &a.checkpoints, &a.sweep.out)
        }
        Command::Report(a) => report(a),
        Command::Plotdata(a) => {
            let rows = bench::read_rows(&a.rows)?;
            let files = bench::plot_data(&rows, &a.out)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn read_instance(path: &Path) -> Result<ProblemInstance, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    ProblemInstance::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn gen(a: GenArgs, seed: u64) -> Result<(), Failure> {
    let mut cfg = config::layered(GeneratorConfig::default(), a.config.as_deref())?;
    if let Some(n) = a.nodes {
        cfg.num_nodes = n;
    }
    if let Some(r) = a.rules {
        cfg.num_rules = r;
    }
    cfg.rule_pool_size = cfg.rule_pool_size.max(cfg.num_rules);
    if a.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for i in 0..a.count {
        let instance = generate_instance(&cfg, derive_seed(seed, &[i as u64]))?;
        match &a.out {
            Some(dir) => write_file(&dir.join(format!("instance_{i:04}.json")), &instance.to_json())?,
            None => writeln!(lock, "{}", instance.to_json()).map_err(|e| Failure::Internal(e.to_string()))?,
        }
    }
    Ok(())
}

fn print_json<S: Serialize>(value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn solve(a: SolveArgs, seed: u64) -> Result<(), Failure> {
    let instance = read_instance(&a.instance)?;
    let solution = match a.method {
        Method::Heuristic(v) => v.solve(&instance),
        Method::Random => random_insertion(&instance, seed),
        Method::Oracle => solve_bnb(&instance, a.objective, SearchLimits::with_time(a.time_limit_ms)).solution,
        Method::Agent => {
            let path = a.checkpoint.as_deref().ok_or_else(|| Failure::Usage("--method agent needs --checkpoint".into()))?;
            let actor = bench::load_agents(&[path.to_path_buf()], a.objective)?.remove(0);
            let mode = if a.stochastic { SelectMode::Stochastic } else { SelectMode::GreedyArgmax };
            trainer::agent_solve(&instance, &actor, RewardKind::from(a.objective), mode, &mut rng_from(seed))?
        }
    };
    print_json(&solution)
}

fn oracle(a: OracleArgs) -> Result<(), Failure> {
    let instance = read_instance(&a.instance)?;
    let mut limits = SearchLimits::with_time(a.time_limit_ms);
    if let Some(n) = a.node_limit {
        limits.max_nodes_explored = n;
    }
    let result = solve_bnb(&instance, a.objective, limits);
    print_json(&OracleReport::from(&result))
}

fn train(a: TrainArgs, seed: u64) -> Result<(), Failure> {
    let base = match a.scale {
        Scale::Desk => TrainConfig::desk(),
        Scale::Full => TrainConfig::default(),
    };
    let mut cfg = config::layered(base, a.config.as_deref())?;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { cfg.$field = v; })*};
    }
    apply!(steps => training_steps, batch_size => batch_size, nodes => train_num_nodes, rules => train_num_rules,
        lr_actor => lr_actor, lr_critic => lr_critic, entropy_coeff => entropy_coeff, gamma => gamma,
        checkpoint_every => checkpoint_every);
    if let Some(m) = a.advantage {
        cfg.advantage_mode = match m {
            AdvantageArg::Td0 => AdvantageMode::Td0,
            AdvantageArg::MonteCarlo => AdvantageMode::MonteCarlo,
        };
    }
    if a.no_wall_time {
        cfg.log_wall_time = false;
    }
    cfg.out_dir = Some(a.out.clone());
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Data(format!("cannot create {}: {e}", a.out.display())))?;

    let kind = RewardKind::from(a.objective);
    let (actor, critic) = trainer::init_networks::<f32>(&cfg, kind, seed)?;
    let every = a.log_every.max(1);
    let out = trainer::train_from(&cfg, kind, seed, actor, critic, |row| {
        if (row.step + 1) % every == 0 {
            info!(
                "step {} return {:.4} actor_loss {:.4} critic_loss {:.4} entropy {:.4}",
                row.step + 1,
                row.mean_return,
                row.actor_loss,
                row.critic_loss,
                row.mean_entropy
            );
        }
    })?;
    out.actor.save(&a.out.join("actor.ckpt"))?;
    out.critic.save(&a.out.join("critic.ckpt"))?;
    trainer::write_log_csv(&a.out.join("train_log.csv"), &out.log)?;
    let config_text = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::Internal(e.to_string()))?;
    write_file(&a.out.join("train_config.json"), &config_text)?;
    info!("wrote checkpoints and log to {}", a.out.display());
    Ok(())
}

fn sweep_config(a: &SweepArgs, seed: u64) -> Result<BenchConfig, Failure> {
    let base = match a.scale {
        Scale::Desk => BenchConfig::desk(),
        Scale::Full => BenchConfig::default(),
    };
    let mut cfg = config::layered(base, a.config.as_deref())?;
    cfg.seed = seed;
    if let Some(v) = &a.nodes {
        cfg.node_sizes = v.clone();
    }
    if let Some(v) = &a.rules {
        cfg.rule_sizes = v.clone();
    }
    if let Some(v) = &a.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = a.instances {
        cfg.instances_per_cell = v;
    }
    if let Some(v) = a.objective {
        cfg.objective = v;
    }
    if let Some(v) = a.oracle_time_limit_ms {
        cfg.oracle_time_limit_ms = v;
    }
    if a.oracle_node_limit.is_some() {
        cfg.oracle_node_limit = a.oracle_node_limit;
    }
    if a.no_timing {
        cfg.record_timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(cfg: &BenchConfig, checkpoints: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let rows = bench::run_benchmark(cfg, checkpoints)?;
    bench::emit(&rows, RowFormat::from_path(out), out)?;
    info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn write_csv<S: Serialize>(records: &[S], out: Option<&Path>) -> Result<(), Failure> {
    let data = |e: csv::Error| Failure::Data(e.to_string());
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Failure::Data(format!("cannot write {}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in records {
        w.serialize(r).map_err(data)?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let rows: Vec<BenchRow> = bench::read_rows(&a.rows)?;
    match a.table {
        Table::Gap => {
            let gaps = bench::gap_table(&rows, &a.reference, a.objective)?;
            write_csv(&gaps, a.out.as_deref())
        }
        Table::Timing => write_csv(&bench::timing_report(&rows), a.out.as_deref()),
    }
}
