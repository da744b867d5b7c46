//! The protocol unrolled into a linear feedforward network, one layer per
//! time step, with exact reverse-mode gradients of the squared final error.

use crate::dynamics::{apply_step, mean};
use crate::error::{ConsensusError, Result};
use crate::graph::Graph;

/// `x(0..=g)` from a forward pass through `g` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    layers: Vec<Vec<f64>>,
}

impl LayerStates {
    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }

    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least the input layer")
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }
}

fn check_rows(g: &Graph, rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(ConsensusError::InvalidParams("unfolded network needs at least one layer".into()));
    }
    for row in rows {
        if row.len() != g.edge_count() {
            return Err(ConsensusError::DimensionMismatch { expected: g.edge_count(), found: row.len() });
        }
    }
    Ok(())
}

pub fn forward_unfolded(g: &Graph, rows: &[Vec<f64>], x0: &[f64]) -> Result<LayerStates> {
    check_rows(g, rows)?;
    if x0.len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: x0.len() });
    }
    let mut layers = Vec::with_capacity(rows.len() + 1);
    layers.push(x0.to_vec());
    for row in rows {
        let x = layers.last().expect("non-empty");
        let mut next = x.clone();
        apply_step(g, row, x, &mut next);
        layers.push(next);
    }
    Ok(LayerStates { layers })
}

/// `||x(g) - mean(x0) 1||^2`.
pub fn loss(states: &LayerStates, x0: &[f64]) -> f64 {
    let c = mean(x0);
    states.output().iter().map(|v| (v - c) * (v - c)).sum()
}

/// Gradient of [`loss`] with respect to every weight of every layer.
///
/// The adjoint starts at `2 e(g)` and is pulled back through each layer by
/// the same symmetric map `I - L(k)`. For edge `{i, j}` of layer `k` the
/// partial is `-(d_i(k+1) - d_j(k+1)) (x_i(k) - x_j(k))`.
pub fn backward_gradients(g: &Graph, rows: &[Vec<f64>], states: &LayerStates) -> Result<Vec<Vec<f64>>> {
    check_rows(g, rows)?;
    if states.depth() != rows.len() {
        return Err(ConsensusError::DimensionMismatch { expected: rows.len(), found: states.depth() });
    }
    if states.input().len() != g.n() {
        return Err(ConsensusError::DimensionMismatch { expected: g.n(), found: states.input().len() });
    }
    let c = mean(states.input());
    let mut adjoint: Vec<f64> = states.output().iter().map(|v| 2.0 * (v - c)).collect();
    let mut grads = vec![Vec::new(); rows.len()];
    for k in (0..rows.len()).rev() {
        let x = &states.layers[k];
        grads[k] = g
            .edges()
            .iter()
            .map(|&(i, j)| -(adjoint[i] - adjoint[j]) * (x[i] - x[j]))
            .collect();
        let mut pulled = adjoint.clone();
        apply_step(g, &rows[k], &adjoint, &mut pulled);
        adjoint = pulled;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Graph {
        Graph::from_edge_list(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn forward_p2() {
        let s = forward_unfolded(&p2(), &[vec![0.3]], &[0.0, 2.0]).unwrap();
        assert_eq!(s.layers()[0], vec![0.0, 2.0]);
        assert!((s.layers()[1][0] - 0.6).abs() < 1e-15 && (s.layers()[1][1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn forward_zero_weights_is_constant() {
        let g = crate::named::load_named("chvatal").unwrap();
        let x0: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let s = forward_unfolded(&g, &vec![vec![0.0; g.edge_count()]; 4], &x0).unwrap();
        assert!(s.layers().iter().all(|l| *l == x0));
    }

    #[test]
    fn forward_fixed_point() {
        let s = forward_unfolded(&p2(), &vec![vec![0.5]; 5], &[0.0, 2.0]).unwrap();
        assert!(s.layers()[1..].iter().all(|l| *l == vec![1.0, 1.0]));
    }

    #[test]
    fn loss_cases() {
        let s = forward_unfolded(&p2(), &[vec![0.3]], &[0.0, 2.0]).unwrap();
        assert!((loss(&s, &[0.0, 2.0]) - 0.32).abs() < 1e-14);
        let exact = forward_unfolded(&p2(), &[vec![0.5]], &[0.0, 2.0]).unwrap();
        assert_eq!(loss(&exact, &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn loss_shift_invariant() {
        let rows = [vec![0.3]];
        let a = forward_unfolded(&p2(), &rows, &[0.0, 2.0]).unwrap();
        let b = forward_unfolded(&p2(), &rows, &[5.0, 7.0]).unwrap();
        assert!((loss(&a, &[0.0, 2.0]) - loss(&b, &[5.0, 7.0])).abs() < 1e-12);
    }

    #[test]
    fn gradient_p2() {
        let rows = [vec![0.3]];
        let s = forward_unfolded(&p2(), &rows, &[0.0, 2.0]).unwrap();
        let grad = backward_gradients(&p2(), &rows, &s).unwrap();
        assert!((grad[0][0] + 3.2).abs() < 1e-14, "{}", grad[0][0]);
    }

    #[test]
    fn gradient_vanishes_at_consensus_input() {
        let g = crate::named::load_named("krackhardt_kite").unwrap();
        let rows = vec![vec![0.2; g.edge_count()]; 3];
        let s = forward_unfolded(&g, &rows, &[1.5; 10]).unwrap();
        let grad = backward_gradients(&g, &rows, &s).unwrap();
        assert!(grad.iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_exact_averaging() {
        let k4 = Graph::from_edge_list(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let rows = [vec![0.25; 6]];
        for x0 in [[1.0, -2.0, 0.5, 3.0], [0.0, 0.0, 1.0, 0.0]] {
            let s = forward_unfolded(&k4, &rows, &x0).unwrap();
            let grad = backward_gradients(&k4, &rows, &s).unwrap();
            assert!(grad[0].iter().all(|d| d.abs() < 1e-14), "{grad:?}");
        }
    }

    #[test]
    fn shape_errors() {
        assert!(forward_unfolded(&p2(), &[], &[0.0, 1.0]).is_err());
        assert!(forward_unfolded(&p2(), &[vec![0.1, 0.2]], &[0.0, 1.0]).is_err());
        let s = forward_unfolded(&p2(), &[vec![0.1]], &[0.0, 1.0]).unwrap();
        assert!(matches!(
            backward_gradients(&p2(), &[vec![0.1], vec![0.1]], &s),
            Err(ConsensusError::DimensionMismatch { .. })
        ));
    }
}
