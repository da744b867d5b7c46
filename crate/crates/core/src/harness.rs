//! Experiment plumbing shared by the CLI and the acceptance suite: graph
//! descriptors, method evaluation, CSV reports and parameter sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    best_constant_weight, finite_time_error, finite_time_plan, run_finite_time, static_optimal_weights, FiniteTimePlan,
    FiniteTimeVariant, STATIC_TOL,
};
use crate::dynamics::{
    asymptotic_convergence_factor, estimate_epsilon, estimate_profile, monte_carlo, monte_carlo_profile, ErrorProfile,
    EpsilonEstimate, InitialDistribution, WeightSchedule,
};
use crate::error::{ConsensusError, Result};
use crate::generators::{generate_ba, generate_er, generate_ws};
use crate::graph::{EdgeWeights, Graph, DISTINCT_EIG_TOL};
use crate::named::load_named;
use crate::rng::{derive_seed, substream, Domain};
use crate::train::{train_incremental, TrainConfig};

/// Random graph family with its parameters (everything except `n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomModel {
    Er { p: f64 },
    Ba { m: usize },
    Ws { k: usize, beta: f64 },
}

impl RandomModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Er { .. } => "er",
            Self::Ba { .. } => "ba",
            Self::Ws { .. } => "ws",
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Graph> {
        let mut rng = substream(seed, Domain::Graph, n as u64);
        match *self {
            Self::Er { p } => generate_er(n, p, &mut rng),
            Self::Ba { m } => generate_ba(n, m, &mut rng),
            Self::Ws { k, beta } => generate_ws(n, k, beta, &mut rng),
        }
    }
}

/// Where a graph comes from: `named:<name>`, a random model
/// (`er:n=,p=[,seed=]`, `ba:n=,m=[,seed=]`, `ws:n=,k=,beta=[,seed=]`), or
/// anything else, read as an edge-list file path.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Named(String),
    Random { model: RandomModel, n: usize, seed: Option<u64> },
    File(String),
}

fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ConsensusError::InvalidParams(format!("expected key=value, got `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn take<T: FromStr>(params: &[(String, String)], key: &str) -> Result<Option<T>> {
    match params.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => {
            v.parse().map(Some).map_err(|_| ConsensusError::InvalidParams(format!("bad value `{v}` for `{key}`")))
        }
    }
}

fn need<T: FromStr>(params: &[(String, String)], key: &str) -> Result<T> {
    take(params, key)?.ok_or_else(|| ConsensusError::InvalidParams(format!("missing `{key}`")))
}

impl FromStr for GraphSpec {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("named:") {
            return Ok(Self::Named(name.to_string()));
        }
        let Some((prefix, body)) = s.split_once(':') else {
            return Ok(Self::File(s.to_string()));
        };
        if !matches!(prefix, "er" | "ba" | "ws") {
            return Ok(Self::File(s.to_string()));
        }
        let params = parse_params(body)?;
        let allowed: &[&str] = match prefix {
            "er" => &["n", "p", "seed"],
            "ba" => &["n", "m", "seed"],
            _ => &["n", "k", "beta", "seed"],
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(ConsensusError::InvalidParams(format!("unknown parameter `{k}` for {prefix}")));
        }
        let model = match prefix {
            "er" => RandomModel::Er { p: need(&params, "p")? },
            "ba" => RandomModel::Ba { m: need(&params, "m")? },
            _ => RandomModel::Ws { k: need(&params, "k")?, beta: need(&params, "beta")? },
        };
        Ok(Self::Random { model, n: need(&params, "n")?, seed: take(&params, "seed")? })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Named(name) => write!(f, "named:{name}"),
            Self::File(path) => f.write_str(path),
            Self::Random { model, n, seed } => {
                match model {
                    RandomModel::Er { p } => write!(f, "er:n={n},p={p}")?,
                    RandomModel::Ba { m } => write!(f, "ba:n={n},m={m}")?,
                    RandomModel::Ws { k, beta } => write!(f, "ws:n={n},k={k},beta={beta}")?,
                }
                if let Some(seed) = seed {
                    write!(f, ",seed={seed}")?;
                }
                Ok(())
            }
        }
    }
}

impl GraphSpec {
    /// Builds the graph; random models without their own `seed=` use
    /// `default_seed`.
    pub fn resolve(&self, default_seed: u64) -> Result<Graph> {
        match self {
            Self::Named(name) => load_named(name),
            Self::Random { model, n, seed } => model.generate(*n, seed.unwrap_or(default_seed)),
            Self::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConsensusError::MalformedEdgeList(format!("cannot read `{path}`: {e}")))?;
                Graph::parse_edge_list(&text)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    Static,
    FiniteTime,
    BestConstant,
}

impl Method {
    pub const ALL: [Self; 4] = [Self::Proposed, Self::Static, Self::FiniteTime, Self::BestConstant];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Static => "static",
            Self::FiniteTime => "finite_time",
            Self::BestConstant => "best_constant",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConsensusError::InvalidParams(format!("unknown method `{s}`")))
    }
}

/// Something that can be run and scored on a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Schedule(WeightSchedule),
    FiniteTime(FiniteTimePlan),
}

impl Strategy {
    /// Builds a baseline strategy. `Proposed` needs training; see
    /// [`Strategy::trained`].
    pub fn baseline(g: &Graph, method: Method) -> Result<Self> {
        match method {
            Method::Static => {
                let s = static_optimal_weights(g, STATIC_TOL)?;
                Ok(Self::Schedule(WeightSchedule::constant(s.weights, 1)?))
            }
            Method::BestConstant => {
                let b = best_constant_weight(g)?;
                Ok(Self::Schedule(WeightSchedule::constant(EdgeWeights::constant(g.edge_count(), b.weight), 1)?))
            }
            Method::FiniteTime => Ok(Self::FiniteTime(finite_time_plan(g, FiniteTimeVariant::Nulling)?)),
            Method::Proposed => Err(ConsensusError::InvalidParams("proposed schedules come from training".into())),
        }
    }

    pub fn trained(g: &Graph, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self::Schedule(train_incremental(g, cfg)?))
    }

    /// Period `T` of a schedule, or `K` for a finite-time plan.
    pub fn horizon(&self) -> usize {
        match self {
            Self::Schedule(s) => s.horizon(),
            Self::FiniteTime(p) => p.steps(),
        }
    }

    /// `E||e(k)||`. Schedules repeat periodically past their horizon; a
    /// finite-time plan is stopped at `min(k, K)`.
    pub fn epsilon(&self, g: &Graph, dist: &InitialDistribution, k: usize, n_samples: usize, seed: u64) -> Result<EpsilonEstimate> {
        match self {
            Self::Schedule(s) => estimate_epsilon(g, s, dist, k, n_samples, true, seed),
            Self::FiniteTime(plan) if k >= plan.steps() => {
                monte_carlo(g.n(), dist, n_samples, seed, |x0| finite_time_error(g, x0, plan))
            }
            Self::FiniteTime(plan) => monte_carlo(g.n(), dist, n_samples, seed, |x0| {
                let run = run_finite_time(g, x0, plan)?;
                Ok(run.trajectory.error_norms.get(k).copied().unwrap_or(f64::INFINITY))
            }),
        }
    }

    /// Mean error at every time `0..=horizon`.
    pub fn profile(&self, g: &Graph, dist: &InitialDistribution, horizon: usize, n_samples: usize, seed: u64) -> Result<ErrorProfile> {
        match self {
            Self::Schedule(s) => estimate_profile(g, s, dist, horizon, n_samples, true, seed),
            Self::FiniteTime(plan) => monte_carlo_profile(g.n(), dist, n_samples, seed, |x0| {
                let mut errors = run_finite_time(g, x0, plan)?.trajectory.error_norms;
                errors.truncate(horizon + 1);
                Ok(errors)
            }),
        }
    }

    /// Asymptotic rate; finite-time plans have none.
    pub fn convergence_factor(&self, g: &Graph) -> Result<Option<f64>> {
        match self {
            Self::Schedule(s) => asymptotic_convergence_factor(g, s).map(Some),
            Self::FiniteTime(_) => Ok(None),
        }
    }
}

/// One evaluation result. `wall_clock_s` is informational and kept out of
/// the CSV so reruns produce identical rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub graph: String,
    pub method: String,
    pub dist: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub k: usize,
    pub n_samples: usize,
    pub epsilon: f64,
    pub stderr: f64,
    pub r_asym: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub epsilon0: f64,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

pub const EVAL_HEADER: &str = "graph,method,dist,T,k,n_samples,epsilon,stderr,r_asym,seed";
pub const NORMALIZED_HEADER: &str = "graph,method,dist,T,k,n_samples,epsilon,epsilon0,ratio,seed";

impl EvalReport {
    /// `epsilon / E||e(0)||` over the same samples.
    pub fn ratio(&self) -> f64 {
        self.epsilon / self.epsilon0
    }
}

#[derive(Serialize)]
struct NormalizedRow<'a> {
    graph: &'a str,
    method: &'a str,
    dist: &'a str,
    #[serde(rename = "T")]
    horizon: usize,
    k: usize,
    n_samples: usize,
    epsilon: f64,
    epsilon0: f64,
    ratio: f64,
    seed: u64,
}

fn csv_error(e: csv::Error) -> ConsensusError {
    ConsensusError::InvalidParams(format!("csv output: {e}"))
}

pub fn write_eval_csv<W: Write>(out: W, rows: &[EvalReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(EVAL_HEADER.split(',')).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))
}

pub fn write_normalized_csv<W: Write>(out: W, rows: &[EvalReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(NORMALIZED_HEADER.split(',')).map_err(csv_error)?;
    for r in rows {
        w.serialize(NormalizedRow {
            graph: &r.graph,
            method: &r.method,
            dist: &r.dist,
            horizon: r.horizon,
            k: r.k,
            n_samples: r.n_samples,
            epsilon: r.epsilon,
            epsilon0: r.epsilon0,
            ratio: r.ratio(),
            seed: r.seed,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))
}

/// Per-time error curve in tidy form.
pub fn write_profile_csv<W: Write>(out: W, graph: &str, method: &str, dist: &str, profile: &ErrorProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["graph", "method", "dist", "k", "epsilon", "stderr"]).map_err(csv_error)?;
    for (k, (m, se)) in profile.mean.iter().zip(&profile.stderr).enumerate() {
        w.serialize((graph, method, dist, k, m, se)).map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))
}

/// Scores `strategy` and packages the result.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    graph_id: &str,
    g: &Graph,
    method: Method,
    strategy: &Strategy,
    dist: &InitialDistribution,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    let started = Instant::now();
    let k = match strategy {
        Strategy::FiniteTime(plan) => k.min(plan.steps()),
        Strategy::Schedule(_) => k,
    };
    let est = strategy.epsilon(g, dist, k, n_samples, seed)?;
    let r_asym = strategy.convergence_factor(g)?;
    Ok(EvalReport {
        graph: graph_id.to_string(),
        method: method.name().to_string(),
        dist: dist.name().to_string(),
        horizon: strategy.horizon(),
        k,
        n_samples,
        epsilon: est.mean,
        stderr: est.stderr,
        r_asym,
        seed,
        epsilon0: est.initial_mean,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Sizes from which finite-time runs are skipped in sweeps.
pub const FINITE_TIME_MAX_N: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: RandomModel,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub eval_samples: usize,
    pub dist: InitialDistribution,
}

/// One `(model, n, seed, method)` cell. A failed cell carries its error
/// message and leaves the numeric fields empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub n: usize,
    pub seed: u64,
    pub method: String,
    #[serde(rename = "K")]
    pub distinct_eigenvalues: Option<usize>,
    pub epsilon: Option<f64>,
    pub stderr: Option<f64>,
    pub r_asym: Option<f64>,
    pub error: String,
}

pub const SWEEP_HEADER: &str = "model,n,seed,method,K,epsilon,stderr,r_asym,error";

fn sweep_cell(cfg: &SweepConfig, n: usize, seed: u64, method: Method) -> Result<(usize, EpsilonEstimate, Option<f64>)> {
    let g = cfg.model.generate(n, seed)?;
    let k = g.distinct_eigenvalue_count(DISTINCT_EIG_TOL)?;
    let strategy = match method {
        Method::Proposed => {
            let train = TrainConfig { seed: derive_seed(seed, Domain::Sweep, n as u64), ..cfg.train.clone() };
            Strategy::trained(&g, &train)?
        }
        other => Strategy::baseline(&g, other)?,
    };
    let eval_seed = derive_seed(seed, Domain::Evaluation, n as u64);
    let est = strategy.epsilon(&g, &cfg.dist, k, cfg.eval_samples, eval_seed)?;
    Ok((k, est, strategy.convergence_factor(&g)?))
}

/// Runs every cell in parallel; rows come back in `(n, seed, method)` order.
/// Finite-time cells are dropped for `n >= FINITE_TIME_MAX_N`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.sizes.is_empty() || cfg.seeds.is_empty() || cfg.methods.is_empty() {
        return Err(ConsensusError::InvalidParams("sweep needs at least one size, seed and method".into()));
    }
    let mut cells = Vec::new();
    for &n in &cfg.sizes {
        for &seed in &cfg.seeds {
            for &method in &cfg.methods {
                if method == Method::FiniteTime && n >= FINITE_TIME_MAX_N {
                    continue;
                }
                cells.push((n, seed, method));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(n, seed, method)| {
            let base = SweepRow {
                model: cfg.model.name().to_string(),
                n,
                seed,
                method: method.name().to_string(),
                distinct_eigenvalues: None,
                epsilon: None,
                stderr: None,
                r_asym: None,
                error: String::new(),
            };
            match sweep_cell(cfg, n, seed, method) {
                Ok((k, est, r)) => SweepRow {
                    distinct_eigenvalues: Some(k),
                    epsilon: Some(est.mean),
                    stderr: Some(est.stderr),
                    r_asym: r,
                    ..base
                },
                Err(e) => SweepRow { error: format!("{}: {e}", e.kind()), ..base },
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER.split(',')).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| csv_error(e.into()))
}
