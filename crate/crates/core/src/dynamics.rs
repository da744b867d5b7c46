//! Running the linear consensus protocol under a weight schedule.
//!
//! `x(k+1) = (I - L(k)) x(k)`, evaluated edge by edge without materialising
//! the Laplacian. Beyond the schedule length the snapshots repeat
//! periodically: global time `sT + tau` uses snapshot `tau`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ConsensusError, Result};
use crate::graph::{EdgeWeights, Graph};
use crate::linalg::{deflate, mat_product, norm2, spectral_radius_complement, DenseMatrix};
use crate::rng::{substream, Domain};

/// `T` rows of per-edge weights; row `k` is used at time `k`.
///
/// Trained schedules are nonnegative. Static baseline weights may be negative
/// and are stored with `signed = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    rows: Vec<Vec<f64>>,
    signed: bool,
}

impl WeightSchedule {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, false)
    }

    /// A schedule whose entries may be negative.
    pub fn signed(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, true)
    }

    pub fn constant(w: EdgeWeights, horizon: usize) -> Result<Self> {
        let signed = w.values().iter().any(|&x| x < 0.0);
        Self::build(vec![w.into_inner(); horizon], signed)
    }

    fn build(rows: Vec<Vec<f64>>, signed: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(ConsensusError::InvalidParams("schedule needs at least one row".into()));
        }
        let m = rows[0].len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(ConsensusError::DimensionMismatch { expected: m, found: row.len() });
            }
            for (e, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ConsensusError::NonFinite(format!("weight at row {r}, edge {e}")));
                }
                if !signed && value < 0.0 {
                    return Err(ConsensusError::NegativeWeight { row: r, edge: e, value });
                }
            }
        }
        Ok(Self { rows, signed })
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn edge_count(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Snapshot applied at global time `k` under periodic continuation.
    pub fn periodic_row(&self, k: usize) -> &[f64] {
        &self.rows[k % self.rows.len()]
    }

    pub(crate) fn check_graph(&self, g: &Graph) -> Result<()> {
        if self.edge_count() != g.edge_count() {
            return Err(ConsensusError::DimensionMismatch { expected: g.edge_count(), found: self.edge_count() });
        }
        Ok(())
    }
}

/// Node states `x(0..=H)` and their distances `||x(k) - c 1||` from the
/// initial average `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub error_norms: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(states: Vec<Vec<f64>>) -> Self {
        let x0 = &states[0];
        let c = mean(x0);
        let error_norms = states.iter().map(|x| error_norm(x, c)).collect();
        Self { states, error_norms }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_error(&self) -> f64 {
        *self.error_norms.last().expect("trajectory has x(0)")
    }
}

/// Initial-state distributions; each node draws i.i.d. from one of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exponential { mean: f64 },
    Binomial { trials: u32, p: f64 },
}

impl InitialDistribution {
    /// Uniform on `[-1, 1]`.
    pub const UNIFORM: Self = Self::Uniform { low: -1.0, high: 1.0 };
    pub const LOGNORMAL: Self = Self::LogNormal { mu: 0.0, sigma: 1.5 };
    pub const EXPONENTIAL: Self = Self::Exponential { mean: 1.0 };
    pub const BINOMIAL: Self = Self::Binomial { trials: 50, p: 0.5 };

    pub const ALL: [Self; 4] = [Self::LOGNORMAL, Self::EXPONENTIAL, Self::BINOMIAL, Self::UNIFORM];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform",
            Self::LogNormal { .. } => "lognormal",
            Self::Exponential { .. } => "exponential",
            Self::Binomial { .. } => "binomial",
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            Self::LogNormal { mu, sigma } => (mu + sigma * standard_normal(rng)).exp(),
            // 1 - u lies in (0, 1], so the log is finite
            Self::Exponential { mean } => -mean * (1.0 - rng.gen::<f64>()).ln(),
            Self::Binomial { trials, p } => (0..trials).filter(|_| rng.gen::<f64>() < p).count() as f64,
        }
    }
}

impl fmt::Display for InitialDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialDistribution {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::UNIFORM),
            "lognormal" => Ok(Self::LOGNORMAL),
            "exponential" => Ok(Self::EXPONENTIAL),
            "binomial" => Ok(Self::BINOMIAL),
            other => Err(ConsensusError::InvalidParams(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Box–Muller, discarding the second variate so each call consumes exactly
/// two uniforms.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn sample_initial<R: Rng + ?Sized>(dist: &InitialDistribution, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn error_norm(x: &[f64], c: f64) -> f64 {
    x.iter().map(|v| (v - c) * (v - c)).sum::<f64>().sqrt()
}

/// `||x - mean(x0) 1||`.
pub fn consensus_error(x: &[f64], x0: &[f64]) -> Result<f64> {
    if x.len() != x0.len() {
        return Err(ConsensusError::DimensionMismatch { expected: x0.len(), found: x.len() });
    }
    Ok(error_norm(x, mean(x0)))
}

/// One protocol step `x_i + sum_j w_ij (x_j - x_i)`.
pub fn step(g: &Graph, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.len() != g.edge_count() {
        return Err(ConsensusError::DimensionMismatch { expected: g.edge_count(), found: w.len() });
    }
    if x.len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: x.len() });
    }
    let mut out = x.to_vec();
    apply_step(g, w, x, &mut out);
    Ok(out)
}

/// `out = (I - L(w)) x`; `out` must start as a copy of `x`.
pub(crate) fn apply_step(g: &Graph, w: &[f64], x: &[f64], out: &mut [f64]) {
    for (&(i, j), &wij) in g.edges().iter().zip(w) {
        let flow = wij * (x[j] - x[i]);
        out[i] += flow;
        out[j] -= flow;
    }
}

/// Runs `horizon` steps from `x0`. Without `periodic` the horizon may not
/// exceed the schedule length.
pub fn simulate(g: &Graph, schedule: &WeightSchedule, x0: &[f64], horizon: usize, periodic: bool) -> Result<Trajectory> {
    schedule.check_graph(g)?;
    if x0.len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: x0.len() });
    }
    if !periodic && horizon > schedule.horizon() {
        return Err(ConsensusError::HorizonExceedsSchedule { horizon, len: schedule.horizon() });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.to_vec());
    for k in 0..horizon {
        let x = states.last().expect("non-empty");
        let mut next = x.clone();
        apply_step(g, schedule.periodic_row(k), x, &mut next);
        states.push(next);
    }
    Ok(Trajectory::from_states(states))
}

/// Error after `horizon` steps, without keeping the intermediate states.
fn final_error(g: &Graph, schedule: &WeightSchedule, x0: &[f64], horizon: usize) -> f64 {
    let c = mean(x0);
    let mut x = x0.to_vec();
    let mut next = x.clone();
    for k in 0..horizon {
        next.copy_from_slice(&x);
        apply_step(g, schedule.periodic_row(k), &x, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    error_norm(&x, c)
}

/// Monte Carlo estimate of `E||e(k)||` with its standard error, alongside the
/// same statistics for `||e(0)||` over the same draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub initial_mean: f64,
    pub initial_stderr: f64,
    pub n_samples: usize,
}

impl EpsilonEstimate {
    /// `E||e(k)|| / E||e(0)||`.
    pub fn normalized(&self) -> f64 {
        self.mean / self.initial_mean
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Averages `error(x0)` over `n_samples` initial states. Sample `s` draws from
/// its own stream `(seed, s)`, and results are reduced in sample order, so
/// the output is bit-identical however rayon splits the work.
pub fn monte_carlo<F>(n: usize, dist: &InitialDistribution, n_samples: usize, seed: u64, error: F) -> Result<EpsilonEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if n_samples == 0 {
        return Err(ConsensusError::InvalidParams("n_samples must be at least 1".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, Domain::Evaluation, s);
            let x0 = sample_initial(dist, n, &mut rng);
            let e0 = error_norm(&x0, mean(&x0));
            error(&x0).map(|ek| (ek, e0))
        })
        .collect::<Result<_>>()?;
    let (finals, initials): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (mean, stderr) = mean_and_stderr(&finals);
    let (initial_mean, initial_stderr) = mean_and_stderr(&initials);
    Ok(EpsilonEstimate { mean, stderr, initial_mean, initial_stderr, n_samples })
}

/// Estimates `eps_k = E||e(k)||` for the schedule.
pub fn estimate_epsilon(
    g: &Graph,
    schedule: &WeightSchedule,
    dist: &InitialDistribution,
    k: usize,
    n_samples: usize,
    periodic: bool,
    seed: u64,
) -> Result<EpsilonEstimate> {
    schedule.check_graph(g)?;
    if !periodic && k > schedule.horizon() {
        return Err(ConsensusError::HorizonExceedsSchedule { horizon: k, len: schedule.horizon() });
    }
    monte_carlo(g.n(), dist, n_samples, seed, |x0| Ok(final_error(g, schedule, x0, k)))
}

/// Per-time mean error curve `E||e(k)||`, `k = 0..=len-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Like [`monte_carlo`], but `errors(x0)` returns a whole error trajectory.
/// Trajectories shorter than the longest one (e.g. truncated after a
/// non-finite state) contribute only to the times they cover.
pub fn monte_carlo_profile<F>(n: usize, dist: &InitialDistribution, n_samples: usize, seed: u64, errors: F) -> Result<ErrorProfile>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if n_samples == 0 {
        return Err(ConsensusError::InvalidParams("n_samples must be at least 1".into()));
    }
    let runs: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, Domain::Evaluation, s);
            errors(&sample_initial(dist, n, &mut rng))
        })
        .collect::<Result<_>>()?;
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for k in 0..len {
        let column: Vec<f64> = runs.iter().filter_map(|r| r.get(k).copied()).collect();
        let (m, se) = mean_and_stderr(&column);
        mean.push(m);
        stderr.push(se);
    }
    Ok(ErrorProfile { mean, stderr })
}

/// Mean error at every time `0..=horizon` under the schedule.
pub fn estimate_profile(
    g: &Graph,
    schedule: &WeightSchedule,
    dist: &InitialDistribution,
    horizon: usize,
    n_samples: usize,
    periodic: bool,
    seed: u64,
) -> Result<ErrorProfile> {
    schedule.check_graph(g)?;
    if !periodic && horizon > schedule.horizon() {
        return Err(ConsensusError::HorizonExceedsSchedule { horizon, len: schedule.horizon() });
    }
    monte_carlo_profile(g.n(), dist, n_samples, seed, |x0| {
        Ok(simulate(g, schedule, x0, horizon, true)?.error_norms)
    })
}

/// Period product `(I - L(T-1)) ... (I - L(1)) (I - L(0))`.
pub fn period_product(g: &Graph, schedule: &WeightSchedule) -> Result<DenseMatrix> {
    schedule.check_graph(g)?;
    let newest_first = schedule
        .rows()
        .iter()
        .rev()
        .map(|row| g.transition_matrix(&EdgeWeights::new(row.clone())))
        .collect::<Result<Vec<_>>>()?;
    mat_product(&newest_first, g.n())
}

pub const RADIUS_TOL: f64 = 1e-8;
const SIMPLICITY_TOL: f64 = 1e-8;
const FIXED_VECTOR_ITERS: usize = 10_000;

/// Per-step asymptotic rate `rho^(1/T)` of the periodically continued
/// schedule, where `rho` is the largest eigenvalue modulus of the period
/// product once its eigenvalue 1 (eigenvector `1`) is removed.
///
/// Fails with [`ConsensusError::EigenvalueOneNotSimple`] when the deflated
/// operator still fixes a vector, since the rate formula needs 1 to be simple.
pub fn asymptotic_convergence_factor(g: &Graph, schedule: &WeightSchedule) -> Result<f64> {
    let m = period_product(g, schedule)?;
    let rho = spectral_radius_complement(&m, RADIUS_TOL)?;
    if rho >= 1.0 - SIMPLICITY_TOL && has_fixed_vector(&deflate(&m)) {
        return Err(ConsensusError::EigenvalueOneNotSimple);
    }
    Ok(rho.powf(1.0 / schedule.horizon() as f64))
}

/// Power iteration with `(A + I) / 2`, which keeps eigenvalue 1 and shrinks
/// every other eigenvalue of modulus at most 1; reports whether it settles on
/// `v` with `||A v - v|| < tol`.
fn has_fixed_vector(a: &DenseMatrix) -> bool {
    let n = a.rows();
    // fixed, deterministic start with zero mean
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract() - 0.5).collect();
    let c = mean(&v);
    v.iter_mut().for_each(|x| *x -= c);
    let start = norm2(&v);
    if start == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= start);
    for _ in 0..FIXED_VECTOR_ITERS {
        let av = a.matvec(&v).expect("square");
        let residual = norm2(&av.iter().zip(&v).map(|(p, q)| p - q).collect::<Vec<_>>());
        if residual < SIMPLICITY_TOL {
            return true;
        }
        let mut next: Vec<f64> = av.iter().zip(&v).map(|(p, q)| 0.5 * (p + q)).collect();
        let norm = norm2(&next);
        if norm < 1e-300 {
            return false;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
    }
    false
}

/// Per-step decay rate: the least-squares slope of `log||e(kT)||` against
/// `kT` for periods `k = first..=last` under periodic continuation.
///
/// The error is propagated directly (`e(t+1) = (I - L(t)) e(t)`), re-centred
/// every step and renormalised with the scale tracked in log space, so the
/// slope stays measurable long after `x(t)` itself would round to `c 1`.
pub fn empirical_decay_rate(g: &Graph, schedule: &WeightSchedule, x0: &[f64], first: usize, last: usize) -> Result<f64> {
    schedule.check_graph(g)?;
    if x0.len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: x0.len() });
    }
    if last <= first {
        return Err(ConsensusError::InvalidParams(format!("empty fit range {first}..={last}")));
    }
    let period = schedule.horizon();
    let c = mean(x0);
    let mut e: Vec<f64> = x0.iter().map(|v| v - c).collect();
    let mut log_scale = 0.0;
    let mut points = Vec::with_capacity(last - first + 1);
    for t in 0..=last * period {
        let norm = norm2(&e);
        if norm == 0.0 {
            return Err(ConsensusError::InvalidParams("consensus reached exactly; rate undefined".into()));
        }
        log_scale += norm.ln();
        if t % period == 0 && t >= first * period {
            points.push((t as f64, log_scale));
        }
        e.iter_mut().for_each(|v| *v /= norm);
        let mut next = e.clone();
        apply_step(g, schedule.periodic_row(t), &e, &mut next);
        let drift = mean(&next);
        next.iter_mut().for_each(|v| *v -= drift);
        e = next;
    }
    Ok(regression_slope(&points))
}

fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
