//! Comparison strategies: the best constant weight, static optimal weights,
//! and finite-time consensus by successive eigenvalue nulling.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{mean, Trajectory};
use crate::error::{ConsensusError, Result};
use crate::graph::{cluster_sorted, EdgeWeights, Graph, DISTINCT_EIG_TOL};
use crate::linalg::{sym_eig, sym_eig_warm, DenseMatrix, SymEig};

/// Uniform weight `2 / (lambda_2 + lambda_N)` of the unit Laplacian and its
/// convergence factor `(lambda_N - lambda_2) / (lambda_N + lambda_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestConstant {
    pub weight: f64,
    pub factor: f64,
}

pub fn best_constant_weight(g: &Graph) -> Result<BestConstant> {
    let spectrum = g.laplacian_spectrum()?;
    let l2 = spectrum[1];
    let ln = *spectrum.last().expect("n >= 2");
    // clamp rounding below zero on complete graphs
    let factor = ((ln - l2) / (ln + l2)).max(0.0);
    Ok(BestConstant { weight: 2.0 / (l2 + ln), factor })
}

/// Time-invariant weights minimising `||I - L(w) - 11^T/n||_2`. Entries may be
/// negative.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticWeights {
    pub weights: EdgeWeights,
    pub achieved_factor: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the stall criterion.
    pub converged: bool,
}

pub const STATIC_TOL: f64 = 1e-7;
const STALL_WINDOW: usize = 200;
const MAX_ITERATIONS: usize = 50_000;
const POLYAK_GAMMA: f64 = 0.1;
const EXACT_FACTOR: f64 = 1e-12;

/// `I - L(w) - 11^T/n`: symmetric, with eigenvector `1` at eigenvalue 0 and
/// the remaining spectrum equal to that of `I - L(w)` off `1`.
fn deflated_iteration(g: &Graph, w: &[f64]) -> DenseMatrix {
    let mut a = g.transition_matrix(&EdgeWeights::new(w.to_vec())).expect("lengths match");
    let inv_n = 1.0 / g.n() as f64;
    for i in 0..g.n() {
        for j in 0..g.n() {
            a[(i, j)] -= inv_n;
        }
    }
    a
}

/// Spectral norm and a subgradient with respect to the edge weights, taken
/// from the extreme eigenpair `(u, lambda)` with `|lambda| = f`:
/// `df/dw_e = -sign(lambda) (u_i - u_j)^2`.
fn norm_and_subgradient(g: &Graph, eig: &SymEig) -> (f64, Vec<f64>) {
    let lo = eig.values[0];
    let hi = *eig.values.last().expect("non-empty");
    let (k, sign) = if hi.abs() >= lo.abs() { (eig.values.len() - 1, 1.0) } else { (0, -1.0) };
    let u = eig.vector(k);
    let grad = g.edges().iter().map(|&(i, j)| -sign * (u[i] - u[j]) * (u[i] - u[j])).collect();
    (eig.values[k].abs(), grad)
}

/// Subgradient descent from the best constant weight with Polyak steps
/// `alpha = (f - f_best + gamma_k) / ||g||^2`, `gamma_k = 0.1 f_0 / sqrt(k+1)`.
///
/// Stops once `f_best` improves by less than `tol` over 200 iterations, after
/// 50000 iterations, or when `f` is numerically zero. Returns the best
/// iterate.
pub fn static_optimal_weights(g: &Graph, tol: f64) -> Result<StaticWeights> {
    if !(tol > 0.0) {
        return Err(ConsensusError::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    let start = best_constant_weight(g)?;
    let mut w = vec![start.weight; g.edge_count()];
    let mut eig = sym_eig(&deflated_iteration(g, &w))?;
    let (f0, _) = norm_and_subgradient(g, &eig);
    let mut best_w = w.clone();
    let mut best_f = f0;
    let mut history = vec![f0];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        let (f, grad) = norm_and_subgradient(g, &eig);
        if f < best_f {
            best_f = f;
            best_w.clone_from(&w);
        }
        if best_f < EXACT_FACTOR {
            converged = true;
            break;
        }
        if iterations >= STALL_WINDOW && history[iterations - STALL_WINDOW] - best_f < tol {
            converged = true;
            break;
        }
        let grad_sq: f64 = grad.iter().map(|d| d * d).sum();
        if grad_sq == 0.0 {
            converged = true;
            break;
        }
        let gamma = POLYAK_GAMMA * f0 / ((iterations + 1) as f64).sqrt();
        let alpha = (f - best_f + gamma) / grad_sq;
        w.iter_mut().zip(&grad).for_each(|(wi, d)| *wi -= alpha * d);
        eig = sym_eig_warm(&deflated_iteration(g, &w), &eig.vectors)?;
        iterations += 1;
        history.push(best_f);
    }
    if !converged {
        // the final step's iterate has not been scored yet
        let (f, _) = norm_and_subgradient(g, &eig);
        if f < best_f {
            best_f = f;
            best_w.clone_from(&w);
        }
    }
    if best_f >= start.factor {
        // no iterate beat the initializer; report its closed-form factor
        best_w = vec![start.weight; g.edge_count()];
        best_f = start.factor;
    }
    Ok(StaticWeights { weights: EdgeWeights::new(best_w), achieved_factor: best_f, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FiniteTimeVariant {
    /// Step `k < K-1` applies `L - lambda_{k+1} I`; the last step rescales by
    /// `1 / prod_{j<K} (lambda_K - lambda_j)`.
    #[default]
    Nulling,
    /// `x_i(k+1) = a(k) x_i(k) - sum_{j in N_i} x_j(k)` with `a(k) = lambda_{k+1}`
    /// and `a(K-1) = 1 / prod_{j<K} (lambda_j - lambda_K) + lambda_K`.
    /// Kept verbatim for comparison; it does not average in general.
    Literal,
}

impl fmt::Display for FiniteTimeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nulling => "nulling",
            Self::Literal => "literal",
        })
    }
}

impl FromStr for FiniteTimeVariant {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nulling" => Ok(Self::Nulling),
            "literal" => Ok(Self::Literal),
            other => Err(ConsensusError::InvalidParams(format!("unknown finite-time variant `{other}`"))),
        }
    }
}

/// `K`-step finite-time schedule built from the distinct unit-Laplacian
/// eigenvalues `lambda_1 > ... > lambda_K ~ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTimePlan {
    pub variant: FiniteTimeVariant,
    /// Distinct eigenvalues, descending; the last one is the computed zero.
    pub eigenvalues: Vec<f64>,
    /// Per-step diagonal coefficients `a(0..K-1)`.
    pub coefficients: Vec<f64>,
    pub final_scale: f64,
}

impl FiniteTimePlan {
    pub fn steps(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The linear map `x(0) -> x(K)`.
    pub fn composite(&self, g: &Graph) -> DenseMatrix {
        let n = g.n();
        let mut out = DenseMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let run = run_finite_time(g, &e, self).expect("plan matches graph");
            let last = run.trajectory.states.last().expect("non-empty");
            for r in 0..n {
                out[(r, c)] = last[r];
            }
        }
        out
    }
}

pub fn finite_time_plan(g: &Graph, variant: FiniteTimeVariant) -> Result<FiniteTimePlan> {
    let spectrum = g.laplacian_spectrum()?;
    let gap = DISTINCT_EIG_TOL * spectrum.last().expect("n >= 2").abs().max(1.0);
    let zeros = spectrum.iter().take_while(|v| v.abs() <= gap).count();
    if zeros != 1 {
        return Err(ConsensusError::ZeroEigNotSimple(zeros));
    }
    let mut eigenvalues = cluster_sorted(&spectrum, DISTINCT_EIG_TOL);
    eigenvalues.reverse();
    let k = eigenvalues.len();
    let zero = eigenvalues[k - 1];
    let leading = &eigenvalues[..k - 1];
    let (last_coefficient, final_scale) = match variant {
        FiniteTimeVariant::Nulling => {
            let prod: f64 = leading.iter().map(|&l| zero - l).product();
            (zero, 1.0 / prod)
        }
        FiniteTimeVariant::Literal => {
            let prod: f64 = leading.iter().map(|&l| l - zero).product();
            (1.0 / prod + zero, 1.0)
        }
    };
    let mut coefficients = leading.to_vec();
    coefficients.push(last_coefficient);
    Ok(FiniteTimePlan { variant, eigenvalues, coefficients, final_scale })
}

/// A finite-time run; stops early at the first non-finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTimeRun {
    pub trajectory: Trajectory,
    pub diverged: bool,
}

/// `y = (a I - A) x` where `A` is the unweighted adjacency matrix.
fn shifted_adjacency_step(g: &Graph, a: f64, x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| a * v).collect();
    for &(i, j) in g.edges() {
        y[i] -= x[j];
        y[j] -= x[i];
    }
    y
}

/// `y = (L - s I) x` for the unit Laplacian.
fn shifted_laplacian_step(g: &Graph, s: f64, x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| -s * v).collect();
    for &(i, j) in g.edges() {
        let d = x[i] - x[j];
        y[i] += d;
        y[j] -= d;
    }
    y
}

pub fn run_finite_time(g: &Graph, x0: &[f64], plan: &FiniteTimePlan) -> Result<FiniteTimeRun> {
    if x0.len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: x0.len() });
    }
    let k = plan.steps();
    let mut states = vec![x0.to_vec()];
    let mut diverged = false;
    for step in 0..k {
        let x = states.last().expect("non-empty");
        let next = match plan.variant {
            FiniteTimeVariant::Nulling if step + 1 < k => shifted_laplacian_step(g, plan.coefficients[step], x),
            FiniteTimeVariant::Nulling => x.iter().map(|v| v * plan.final_scale).collect(),
            FiniteTimeVariant::Literal => shifted_adjacency_step(g, plan.coefficients[step], x),
        };
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        states.push(next);
    }
    Ok(FiniteTimeRun { trajectory: Trajectory::from_states(states), diverged })
}

/// `||x(K) - mean(x0) 1||`, or infinity for a diverged run.
pub fn finite_time_error(g: &Graph, x0: &[f64], plan: &FiniteTimePlan) -> Result<f64> {
    let run = run_finite_time(g, x0, plan)?;
    if run.diverged {
        return Ok(f64::INFINITY);
    }
    let c = mean(x0);
    Ok(run.trajectory.states.last().expect("non-empty").iter().map(|v| (v - c) * (v - c)).sum::<f64>().sqrt())
}
