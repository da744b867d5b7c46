//! Incremental online training of a weight schedule.
//!
//! Generation `gen` (1-based) appends layer `gen - 1`, resets the optimizer
//! unless `reset_optimizer` is off, and runs `samples_per_generation /
//! batch_size` Adam updates over all layers trained so far. Generation `gen` draws its samples from sub-stream
//! `(seed, gen)`, so a longer horizon leaves earlier generations unchanged.

use std::fmt;
use std::str::FromStr;

use crate::adam::{adam_update, AdamConfig, AdamState};
use crate::dynamics::{sample_initial, InitialDistribution, WeightSchedule};
use crate::error::{ConsensusError, Result};
use crate::graph::Graph;
use crate::rng::{substream, Domain};
use crate::unfold::{backward_gradients, forward_unfolded};

/// How trained weights are kept nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonnegativity {
    /// Clamp at zero after every optimizer step.
    #[default]
    Projection,
    /// Optimise `theta` with `w = ln(1 + e^theta)`.
    Softplus,
}

impl fmt::Display for Nonnegativity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Projection => "projection",
            Self::Softplus => "softplus",
        })
    }
}

impl FromStr for Nonnegativity {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Self::Projection),
            "softplus" => Ok(Self::Softplus),
            other => Err(ConsensusError::InvalidParams(format!("unknown nonnegativity scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub horizon: usize,
    pub samples_per_generation: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub init_weight: f64,
    pub distribution: InitialDistribution,
    pub nonnegativity: Nonnegativity,
    /// Rescales each update's gradient to at most this Euclidean norm.
    pub clip_norm: Option<f64>,
    /// Fresh Adam moments at every generation. When off, moments and the step
    /// counter carry over and the new layer starts with zero moments.
    pub reset_optimizer: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            samples_per_generation: 1000,
            batch_size: 1,
            adam: AdamConfig::default(),
            init_weight: 0.1,
            distribution: InitialDistribution::UNIFORM,
            nonnegativity: Nonnegativity::Projection,
            clip_norm: None,
            reset_optimizer: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(ConsensusError::InvalidParams(what.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.samples_per_generation == 0 || self.batch_size == 0 {
            return bad("samples per generation and batch size must be at least 1");
        }
        if !self.samples_per_generation.is_multiple_of(self.batch_size) {
            return bad("batch size must divide samples per generation");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.eps > 0.0) {
            return bad("learning rate and eps must be positive");
        }
        if !((0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.init_weight > 0.0 && self.init_weight.is_finite()) {
            return bad("initial weight must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip norm must be positive");
            }
        }
        Ok(())
    }
}

fn softplus(theta: f64) -> f64 {
    // ln(1 + e^t) without overflow for large t
    theta.max(0.0) + (-theta.abs()).exp().ln_1p()
}

fn softplus_inverse(w: f64) -> f64 {
    w + (-(-w).exp_m1()).ln()
}

fn sigmoid(theta: f64) -> f64 {
    1.0 / (1.0 + (-theta).exp())
}

/// Trains a `cfg.horizon`-layer schedule on `g`.
pub fn train_incremental(g: &Graph, cfg: &TrainConfig) -> Result<WeightSchedule> {
    train_incremental_with(g, cfg, |_, _| {})
}

/// As [`train_incremental`], calling `on_generation(gen, weights)` after each
/// generation with the layers trained so far.
pub fn train_incremental_with<F>(g: &Graph, cfg: &TrainConfig, mut on_generation: F) -> Result<WeightSchedule>
where
    F: FnMut(usize, &[Vec<f64>]),
{
    cfg.validate()?;
    let m = g.edge_count();
    let softplus_mode = cfg.nonnegativity == Nonnegativity::Softplus;
    let to_weights = |params: &[Vec<f64>]| -> Vec<Vec<f64>> {
        if softplus_mode {
            params.iter().map(|r| r.iter().map(|&t| softplus(t)).collect()).collect()
        } else {
            params.to_vec()
        }
    };
    let init_param = if softplus_mode { softplus_inverse(cfg.init_weight) } else { cfg.init_weight };
    let mut params: Vec<Vec<f64>> = Vec::with_capacity(cfg.horizon);
    let updates = cfg.samples_per_generation / cfg.batch_size;
    let mut state = AdamState::zeros_like(&params);

    for gen in 1..=cfg.horizon {
        params.push(vec![init_param; m]);
        if cfg.reset_optimizer {
            state = AdamState::zeros_like(&params);
        } else {
            state.first.push(vec![0.0; m]);
            state.second.push(vec![0.0; m]);
        }
        let mut rng = substream(cfg.seed, Domain::Training, gen as u64);
        for _ in 0..updates {
            let weights = to_weights(&params);
            let mut grads = vec![vec![0.0; m]; gen];
            for _ in 0..cfg.batch_size {
                let x0 = sample_initial(&cfg.distribution, g.n(), &mut rng);
                let states = forward_unfolded(g, &weights, &x0)?;
                let sample = backward_gradients(g, &weights, &states)?;
                for (acc, row) in grads.iter_mut().zip(&sample) {
                    acc.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                }
            }
            let scale = 1.0 / cfg.batch_size as f64;
            for (r, row) in grads.iter_mut().enumerate() {
                for (e, d) in row.iter_mut().enumerate() {
                    *d *= scale;
                    if softplus_mode {
                        *d *= sigmoid(params[r][e]);
                    }
                }
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = grads.iter().flatten().map(|d| d * d).sum::<f64>().sqrt();
                if norm > limit {
                    grads.iter_mut().flatten().for_each(|d| *d *= limit / norm);
                }
            }
            adam_update(&mut state, &mut params, &grads, &cfg.adam, !softplus_mode)?;
        }
        on_generation(gen, &to_weights(&params));
    }
    WeightSchedule::new(to_weights(&params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Graph {
        Graph::from_edge_list(2, &[(0, 1)]).unwrap()
    }

    fn k3() -> Graph {
        Graph::from_edge_list(3, &[(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn one_layer(seed: u64) -> TrainConfig {
        TrainConfig { horizon: 1, seed, ..TrainConfig::default() }
    }

    #[test]
    fn p2_recovers_exact_averaging() {
        let s = train_incremental(&p2(), &one_layer(1)).unwrap();
        assert!((s.row(0)[0] - 0.5).abs() < 0.02, "{:?}", s.row(0));
    }

    #[test]
    fn k3_recovers_third() {
        let s = train_incremental(&k3(), &one_layer(2)).unwrap();
        assert!(s.row(0).iter().all(|w| (w - 1.0 / 3.0).abs() < 0.02), "{:?}", s.row(0));
    }

    #[test]
    fn softplus_variant_also_recovers_p2() {
        let cfg = TrainConfig { nonnegativity: Nonnegativity::Softplus, ..one_layer(1) };
        let s = train_incremental(&p2(), &cfg).unwrap();
        assert!((s.row(0)[0] - 0.5).abs() < 0.02, "{:?}", s.row(0));
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let g = crate::named::load_named("krackhardt_kite").unwrap();
        let cfg = TrainConfig { horizon: 3, samples_per_generation: 200, seed: 17, ..TrainConfig::default() };
        let mut seen_negative = false;
        let a = train_incremental_with(&g, &cfg, |_, w| seen_negative |= w.iter().flatten().any(|&v| v < 0.0)).unwrap();
        let b = train_incremental(&g, &cfg).unwrap();
        assert!(!seen_negative);
        let bits = |s: &WeightSchedule| s.rows().iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.horizon(), 3);
    }

    #[test]
    fn longer_horizon_keeps_first_generation_data() {
        let g = k3();
        let mut first_short = Vec::new();
        let mut first_long = Vec::new();
        let short = TrainConfig { horizon: 1, samples_per_generation: 50, ..TrainConfig::default() };
        let long = TrainConfig { horizon: 2, ..short.clone() };
        train_incremental_with(&g, &short, |gen, w| if gen == 1 { first_short = w.to_vec() }).unwrap();
        train_incremental_with(&g, &long, |gen, w| if gen == 1 { first_long = w.to_vec() }).unwrap();
        assert_eq!(first_short, first_long);
    }

    #[test]
    fn carried_optimizer_state_still_trains() {
        let cfg = TrainConfig { horizon: 2, reset_optimizer: false, ..one_layer(3) };
        let s = train_incremental(&k3(), &cfg).unwrap();
        assert_eq!(s.horizon(), 2);
        assert_ne!(s, train_incremental(&k3(), &TrainConfig { reset_optimizer: true, ..cfg }).unwrap());
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { horizon: 0, ..TrainConfig::default() },
            TrainConfig { samples_per_generation: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 3, ..TrainConfig::default() },
            TrainConfig { init_weight: -0.1, ..TrainConfig::default() },
            TrainConfig { clip_norm: Some(0.0), ..TrainConfig::default() },
        ] {
            assert!(matches!(train_incremental(&p2(), &cfg), Err(ConsensusError::InvalidParams(_))), "{cfg:?}");
        }
    }

    #[test]
    fn softplus_round_trip() {
        for w in [1e-6, 0.1, 1.0, 30.0] {
            assert!((softplus(softplus_inverse(w)) - w).abs() < 1e-12 * w.max(1.0));
        }
    }
}
