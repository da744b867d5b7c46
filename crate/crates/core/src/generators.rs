//! Random connected topologies: Erdős–Rényi, Barabási–Albert and
//! Watts–Strogatz.
//!
//! ER and WS samples are redrawn whole until connected (at most
//! [`MAX_ATTEMPTS`] tries). BA is connected by construction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{ConsensusError, Result};
use crate::graph::{is_connected_count, Graph};

pub const MAX_ATTEMPTS: usize = 10_000;

/// `G(n, p)`: each of the `n(n-1)/2` pairs is an edge independently with
/// probability `p`.
pub fn generate_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(ConsensusError::TooFewNodes(n));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(ConsensusError::InvalidParams(format!("edge probability {p} not in (0, 1]")));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        if is_connected_count(n, &edges) == n {
            return Graph::from_edge_list(n, &edges);
        }
    }
    Err(ConsensusError::GenerationFailed(MAX_ATTEMPTS))
}

/// Preferential attachment with `m` edges per new node.
///
/// Nodes `0..m` start isolated and all of them are the targets of node `m`.
/// Every later node picks `m` distinct targets uniformly from the list of
/// edge endpoints seen so far (so proportionally to degree). The result has
/// exactly `m * (n - m)` edges.
pub fn generate_ba<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    if m < 1 || m >= n {
        return Err(ConsensusError::InvalidParams(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    for source in m..n {
        for &t in &targets {
            edges.push((t, source));
        }
        endpoints.extend_from_slice(&targets);
        endpoints.extend(std::iter::repeat_n(source, m));
        let mut chosen = BTreeSet::new();
        while chosen.len() < m {
            chosen.insert(*endpoints.choose(rng).expect("non-empty"));
        }
        targets = chosen.into_iter().collect();
    }
    Graph::from_edge_list(n, &edges)
}

/// Ring lattice where each node links to its `k` nearest neighbours, then every
/// lattice edge `(u, u + j)` is rewired with probability `beta` to `(u, w)` for
/// a uniformly chosen `w` that is neither `u` nor already adjacent to `u`.
pub fn generate_ws<R: Rng + ?Sized>(n: usize, k: usize, beta: f64, rng: &mut R) -> Result<Graph> {
    if k == 0 || !k.is_multiple_of(2) || k >= n {
        return Err(ConsensusError::InvalidParams(format!("need even 0 < k < n, got k={k}, n={n}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(ConsensusError::InvalidParams(format!("rewiring probability {beta} not in [0, 1]")));
    }
    for _ in 0..MAX_ATTEMPTS {
        let edges = ws_sample(n, k, beta, rng);
        if is_connected_count(n, &edges) == n {
            return Graph::from_edge_list(n, &edges);
        }
    }
    Err(ConsensusError::GenerationFailed(MAX_ATTEMPTS))
}

fn ws_sample<R: Rng + ?Sized>(n: usize, k: usize, beta: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.gen::<f64>() >= beta || !adj[u].contains(&v) {
                continue;
            }
            if adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..n);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * k / 2);
    for (u, nbrs) in adj.iter().enumerate() {
        for &v in nbrs {
            if u < v {
                edges.push((u, v));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn er_p_one_is_complete() {
        let g = generate_er(10, 1.0, &mut rng(0)).unwrap();
        assert_eq!(g.edge_count(), 45);
    }

    #[test]
    fn er_mean_edge_count() {
        let total: usize = (0..100).map(|s| generate_er(100, 0.1, &mut rng(s)).unwrap().edge_count()).sum();
        let mean = total as f64 / 100.0;
        assert!((mean - 495.0).abs() < 0.05 * 495.0, "mean edges {mean}");
    }

    #[test]
    fn er_sparse_large_network_connects() {
        let g = generate_er(100, 0.025, &mut rng(7)).unwrap();
        assert_eq!(g.n(), 100);
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(matches!(generate_er(10, 0.0, &mut rng(0)), Err(ConsensusError::InvalidParams(_))));
        assert!(matches!(generate_er(10, 1.5, &mut rng(0)), Err(ConsensusError::InvalidParams(_))));
    }

    #[test]
    fn er_gives_up_when_hopeless() {
        assert_eq!(generate_er(50, 1e-6, &mut rng(0)), Err(ConsensusError::GenerationFailed(MAX_ATTEMPTS)));
    }

    #[test]
    fn ba_smallest_case_is_star_onto_seed_nodes() {
        let g = generate_ba(4, 3, &mut rng(1)).unwrap();
        assert_eq!(g.edges(), &[(0, 3), (1, 3), (2, 3)]);
    }

    #[test]
    fn ba_edge_count() {
        for seed in 0..5 {
            assert_eq!(generate_ba(30, 3, &mut rng(seed)).unwrap().edge_count(), 81);
        }
        assert!(matches!(generate_ba(3, 3, &mut rng(0)), Err(ConsensusError::InvalidParams(_))));
    }

    #[test]
    fn ws_without_rewiring_is_lattice() {
        let g = generate_ws(10, 4, 0.0, &mut rng(0)).unwrap();
        assert_eq!(g.edge_count(), 20);
        assert!(g.degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn ws_rewired_keeps_edge_count() {
        let g = generate_ws(20, 4, 0.15, &mut rng(3)).unwrap();
        assert_eq!(g.edge_count(), 40);
    }

    #[test]
    fn ws_rejects_bad_degree() {
        assert!(matches!(generate_ws(5, 6, 0.1, &mut rng(0)), Err(ConsensusError::InvalidParams(_))));
        assert!(matches!(generate_ws(10, 3, 0.1, &mut rng(0)), Err(ConsensusError::InvalidParams(_))));
    }

    #[test]
    fn same_seed_same_graph() {
        assert_eq!(generate_er(30, 0.2, &mut rng(9)), generate_er(30, 0.2, &mut rng(9)));
        assert_eq!(generate_ba(30, 3, &mut rng(9)), generate_ba(30, 3, &mut rng(9)));
        assert_eq!(generate_ws(30, 4, 0.15, &mut rng(9)), generate_ws(30, 4, 0.15, &mut rng(9)));
    }
}
