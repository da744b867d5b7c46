use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use consensus_core::adam::AdamConfig;
use consensus_core::baselines::{best_constant_weight, finite_time_plan, static_optimal_weights, FiniteTimeVariant, STATIC_TOL};
use consensus_core::dynamics::{InitialDistribution, WeightSchedule};
use consensus_core::graph::{EdgeWeights, Graph, DISTINCT_EIG_TOL};
use consensus_core::harness::{
    evaluate, run_sweep, write_eval_csv, write_normalized_csv, write_profile_csv, write_sweep_csv, EvalReport, GraphSpec,
    Method, RandomModel, Strategy, SweepConfig,
};
use consensus_core::schedule_io::{parse_schedule, serialize_schedule};
use consensus_core::train::{Nonnegativity, TrainConfig};
use consensus_core::ConsensusError;

#[derive(Parser)]
#[command(name = "consensus", version, about = "Train and benchmark time-varying consensus weight schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a schedule by incremental unfolded training.
    Train(TrainArgs),
    /// Monte Carlo consensus error of a schedule or baseline.
    Eval(EvalArgs),
    /// Asymptotic convergence factor of a schedule or baseline.
    Factor(FactorArgs),
    /// Compute a baseline strategy.
    Baseline(BaselineArgs),
    /// Grid over random graph sizes and seeds.
    Sweep(SweepArgs),
    /// Size and spectrum summary of a graph.
    GraphInfo(GraphInfoArgs),
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "CONSENSUS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: String,
    #[arg(long = "T", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    /// Training samples per generation.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    init_weight: f64,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value = "projection")]
    nonneg: String,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Keep Adam moments across generations instead of resetting them.
    #[arg(long)]
    carry_adam: bool,
    #[command(flatten)]
    seed: SeedArg,
    /// Schedule file to write.
    #[arg(long)]
    out: PathBuf,
    /// CSV file for the evaluation row (stdout if omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Evaluation samples for the report row; 0 skips evaluation.
    #[arg(long, default_value_t = 10_000)]
    eval_samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Static,
    FiniteTime,
    BestConstant,
}

impl From<BaselineMethod> for Method {
    fn from(m: BaselineMethod) -> Self {
        match m {
            BaselineMethod::Static => Method::Static,
            BaselineMethod::FiniteTime => Method::FiniteTime,
            BaselineMethod::BestConstant => Method::BestConstant,
        }
    }
}

#[derive(Args)]
struct StrategyArgs {
    /// Graph spec: named:NAME, er:n=,p=[,seed=], ba:n=,m=[,seed=], ws:n=,k=,beta=[,seed=], or an edge-list path.
    #[arg(long)]
    graph: Option<String>,
    /// Schedule file to evaluate.
    #[arg(long, conflicts_with = "method")]
    schedule: Option<PathBuf>,
    /// Baseline to evaluate instead of a schedule file.
    #[arg(long, value_enum)]
    method: Option<BaselineMethod>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Distribution name or `all`; repeatable.
    #[arg(long, default_value = "uniform")]
    dist: Vec<String>,
    /// Evaluation time; defaults to the schedule length (K for finite-time).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write epsilon / E||e(0)|| rows here.
    #[arg(long)]
    normalized: Option<PathBuf>,
    /// Emit the per-time error curve for k = 0..=k instead of one row.
    #[arg(long)]
    trajectory: bool,
}

#[derive(Args)]
struct FactorArgs {
    #[command(flatten)]
    strategy: StrategyArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Static,
    Finite,
    Constant,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    graph: String,
    /// Variant for the finite-time plan.
    #[arg(long, default_value = "nulling")]
    variant: String,
    /// Schedule file for static or constant weights.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Er,
    Ba,
    Ws,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    sizes: Vec<usize>,
    /// Seeds 0..n-seeds, offset by --seed.
    #[arg(long, default_value_t = 10)]
    n_seeds: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_delimiter = ',', default_value = "proposed,static,finite_time")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long = "ring-degree", default_value_t = 4)]
    ring_degree: usize,
    #[arg(long, default_value_t = 0.15)]
    beta: f64,
    #[arg(long = "T", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    #[arg(long, default_value_t = 1000)]
    train_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    eval_samples: usize,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphInfoArgs {
    #[arg(long)]
    graph: String,
    #[command(flatten)]
    seed: SeedArg,
    /// Print the canonical edge list after the summary.
    #[arg(long)]
    edges: bool,
}

enum CliError {
    Core(ConsensusError),
    Io(io::Error),
    Usage(String),
}

impl From<ConsensusError> for CliError {
    fn from(e: ConsensusError) -> Self {
        Self::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Factor(a) => cmd_factor(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GraphInfo(a) => cmd_graph_info(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Core(e)) => {
            eprintln!("error: kind={} msg={e}", e.kind());
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: kind=Usage msg={msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: kind=Io msg={e}");
            ExitCode::from(1)
        }
    }
}

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn resolve_graph(spec: &str, seed: u64) -> CliResult<(String, Graph)> {
    let parsed: GraphSpec = spec.parse()?;
    if let GraphSpec::File(path) = &parsed {
        if !Path::new(path).exists() {
            return Err(CliError::Usage(format!("`{spec}` is neither a graph spec nor an existing file")));
        }
    }
    let g = parsed.resolve(seed)?;
    Ok((parsed.to_string(), g))
}

fn parse_dists(names: &[String]) -> CliResult<Vec<InitialDistribution>> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            out.extend(InitialDistribution::ALL);
        } else {
            out.push(name.parse()?);
        }
    }
    Ok(out)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let (id, g) = resolve_graph(&a.graph, a.seed.seed)?;
    let dist: InitialDistribution = a.dist.parse()?;
    let cfg = TrainConfig {
        horizon: a.horizon as usize,
        samples_per_generation: a.samples,
        batch_size: a.batch_size,
        adam: AdamConfig { learning_rate: a.lr, ..AdamConfig::default() },
        init_weight: a.init_weight,
        distribution: dist,
        nonnegativity: a.nonneg.parse::<Nonnegativity>()?,
        clip_norm: a.clip_norm,
        reset_optimizer: !a.carry_adam,
        seed: a.seed.seed,
    };
    let strategy = Strategy::trained(&g, &cfg)?;
    let Strategy::Schedule(schedule) = &strategy else { unreachable!("training yields a schedule") };
    std::fs::write(&a.out, serialize_schedule(&g, schedule)?)?;
    if a.eval_samples > 0 {
        let row = evaluate(&id, &g, Method::Proposed, &strategy, &dist, schedule.horizon(), a.eval_samples, a.seed.seed)?;
        write_eval_csv(sink(a.report.as_deref())?, &[row])?;
    }
    Ok(())
}

/// The graph and strategy named by `--graph`, `--schedule` and `--method`.
fn load_strategy(s: &StrategyArgs, seed: u64) -> CliResult<(String, Graph, Method, Strategy)> {
    match (&s.schedule, s.method) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let (file_graph, schedule) = parse_schedule(&text)?;
            let id = match &s.graph {
                Some(spec) => {
                    let (id, g) = resolve_graph(spec, seed)?;
                    if g != file_graph {
                        return Err(ConsensusError::GraphMismatch(format!(
                            "schedule file graph differs from `{spec}`"
                        ))
                        .into());
                    }
                    id
                }
                None => path.display().to_string(),
            };
            let method = if schedule.is_signed() { Method::Static } else { Method::Proposed };
            Ok((id, file_graph, method, Strategy::Schedule(schedule)))
        }
        (None, Some(m)) => {
            let spec = s.graph.as_deref().ok_or_else(|| CliError::Usage("--method needs --graph".into()))?;
            let (id, g) = resolve_graph(spec, seed)?;
            let strategy = Strategy::baseline(&g, m.into())?;
            Ok((id, g, m.into(), strategy))
        }
        (None, None) => Err(CliError::Usage("give --schedule or --method".into())),
    }
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let seed = a.seed.seed;
    let (id, g, method, strategy) = load_strategy(&a.strategy, seed)?;
    let dists = parse_dists(&a.dist)?;
    let k = a.k.unwrap_or_else(|| strategy.horizon());
    let n_samples = a.samples as usize;
    let mut out = sink(a.out.as_deref())?;
    if a.trajectory {
        for dist in &dists {
            let profile = strategy.profile(&g, dist, k, n_samples, seed)?;
            write_profile_csv(&mut out, &id, method.name(), dist.name(), &profile)?;
        }
        return Ok(());
    }
    let rows: Vec<EvalReport> =
        dists.iter().map(|d| evaluate(&id, &g, method, &strategy, d, k, n_samples, seed)).collect::<Result<_, _>>()?;
    write_eval_csv(&mut out, &rows)?;
    if let Some(path) = &a.normalized {
        write_normalized_csv(BufWriter::new(File::create(path)?), &rows)?;
    }
    Ok(())
}

fn cmd_factor(a: FactorArgs) -> CliResult<()> {
    let (_, g, _, strategy) = load_strategy(&a.strategy, 0)?;
    match strategy.convergence_factor(&g)? {
        Some(r) => println!("{r:?}"),
        None => return Err(CliError::Usage("finite-time plans have no asymptotic convergence factor".into())),
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> CliResult<()> {
    let (_, g) = resolve_graph(&a.graph, a.seed.seed)?;
    let mut stdout = io::stdout().lock();
    match a.kind {
        BaselineKind::Static => {
            let s = static_optimal_weights(&g, STATIC_TOL)?;
            writeln!(stdout, "achieved_factor {:?}", s.achieved_factor)?;
            writeln!(stdout, "iterations {}", s.iterations)?;
            writeln!(stdout, "converged {}", s.converged)?;
            if let Some(path) = &a.out {
                let schedule = WeightSchedule::constant(s.weights, 1)?;
                std::fs::write(path, serialize_schedule(&g, &schedule)?)?;
            }
        }
        BaselineKind::Constant => {
            let b = best_constant_weight(&g)?;
            writeln!(stdout, "weight {:?}", b.weight)?;
            writeln!(stdout, "factor {:?}", b.factor)?;
            if let Some(path) = &a.out {
                let schedule = WeightSchedule::constant(EdgeWeights::constant(g.edge_count(), b.weight), 1)?;
                std::fs::write(path, serialize_schedule(&g, &schedule)?)?;
            }
        }
        BaselineKind::Finite => {
            let variant: FiniteTimeVariant = a.variant.parse()?;
            let plan = finite_time_plan(&g, variant)?;
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
            writeln!(stdout, "variant {variant}")?;
            writeln!(stdout, "K {}", plan.steps())?;
            writeln!(stdout, "eigenvalues {}", join(&plan.eigenvalues))?;
            writeln!(stdout, "coefficients {}", join(&plan.coefficients))?;
            writeln!(stdout, "final_scale {:?}", plan.final_scale)?;
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let model = match a.model {
        ModelArg::Er => RandomModel::Er { p: a.p },
        ModelArg::Ba => RandomModel::Ba { m: a.m },
        ModelArg::Ws => RandomModel::Ws { k: a.ring_degree, beta: a.beta },
    };
    let methods = a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?;
    let dist: InitialDistribution = a.dist.parse()?;
    let cfg = SweepConfig {
        model,
        sizes: a.sizes,
        seeds: (0..a.n_seeds).map(|s| a.seed.seed + s).collect(),
        methods,
        train: TrainConfig {
            horizon: a.horizon as usize,
            samples_per_generation: a.train_samples,
            distribution: dist,
            ..TrainConfig::default()
        },
        eval_samples: a.eval_samples,
        dist,
    };
    let rows = run_sweep(&cfg)?;
    write_sweep_csv(sink(a.out.as_deref())?, &rows)?;
    Ok(())
}

fn cmd_graph_info(a: GraphInfoArgs) -> CliResult<()> {
    let (id, g) = resolve_graph(&a.graph, a.seed.seed)?;
    let spectrum = g.laplacian_spectrum()?;
    let degrees = g.degrees();
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "graph {id}")?;
    writeln!(stdout, "n {}", g.n())?;
    writeln!(stdout, "edges {}", g.edge_count())?;
    writeln!(stdout, "min_degree {}", degrees.iter().min().expect("n >= 2"))?;
    writeln!(stdout, "max_degree {}", degrees.iter().max().expect("n >= 2"))?;
    writeln!(stdout, "distinct_eigenvalues {}", g.distinct_eigenvalue_count(DISTINCT_EIG_TOL)?)?;
    writeln!(stdout, "lambda_2 {:?}", spectrum[1])?;
    writeln!(stdout, "lambda_max {:?}", spectrum[spectrum.len() - 1])?;
    if a.edges {
        write!(stdout, "{}", g.to_edge_list_text())?;
    }
    Ok(())
}
