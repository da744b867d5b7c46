//! Undirected connected topologies and weighted Laplacians.
//!
//! A [`Graph`] keeps its edges as sorted `(i, j)` pairs with `i < j`. That
//! canonical order is the layout of every per-edge weight vector in the crate.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{ConsensusError, Result};
use crate::linalg::{sym_eig, DenseMatrix};

/// Default relative tolerance for merging numerically equal eigenvalues.
pub const DISTINCT_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Canonicalises `raw_edges` (orders each pair, sorts, removes duplicates)
    /// and checks the graph is connected.
    pub fn from_edge_list(n: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(ConsensusError::TooFewNodes(n));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in raw_edges {
            if a >= n {
                return Err(ConsensusError::NodeOutOfRange { node: a, n });
            }
            if b >= n {
                return Err(ConsensusError::NodeOutOfRange { node: b, n });
            }
            if a == b {
                return Err(ConsensusError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let graph = Self { n, edges: set.into_iter().collect() };
        let reached = graph.reachable_from_zero();
        if reached != n {
            return Err(ConsensusError::Disconnected { reached, n });
        }
        Ok(graph)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    fn reachable_from_zero(&self) -> usize {
        is_connected_count(self.n, &self.edges)
    }

    /// Parses the edge-list text format: a header line `N M` followed by
    /// exactly `M` lines `i j` with `0 <= i < j < N`.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let bad = |msg: String| ConsensusError::MalformedEdgeList(msg);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let header: Vec<&str> = header.split_whitespace().collect();
        if header.len() != 2 {
            return Err(bad(format!("header must be `N M`, got {header:?}")));
        }
        let n: usize = header[0].parse().map_err(|_| bad(format!("bad node count `{}`", header[0])))?;
        let m: usize = header[1].parse().map_err(|_| bad(format!("bad edge count `{}`", header[1])))?;
        let mut edges = Vec::with_capacity(m);
        let mut seen = BTreeSet::new();
        for (lineno, line) in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(bad(format!("line {}: expected `i j`", lineno + 1)));
            }
            let parse = |t: &str| t.parse::<usize>().map_err(|_| bad(format!("line {}: bad node `{t}`", lineno + 1)));
            let (i, j) = (parse(tokens[0])?, parse(tokens[1])?);
            if i >= j {
                return Err(bad(format!("line {}: need i < j, got {i} {j}", lineno + 1)));
            }
            if !seen.insert((i, j)) {
                return Err(bad(format!("line {}: duplicate edge {i} {j}", lineno + 1)));
            }
            edges.push((i, j));
        }
        if edges.len() != m {
            return Err(bad(format!("header declares {m} edges, found {}", edges.len())));
        }
        Self::from_edge_list(n, &edges)
    }

    pub fn to_edge_list_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Laplacian `D - W` for the given per-edge weights.
    pub fn laplacian(&self, w: &EdgeWeights) -> Result<DenseMatrix> {
        self.check_weights(w)?;
        let mut l = DenseMatrix::zeros(self.n, self.n);
        for (&(i, j), &wij) in self.edges.iter().zip(w.values()) {
            l[(i, j)] -= wij;
            l[(j, i)] -= wij;
            l[(i, i)] += wij;
            l[(j, j)] += wij;
        }
        Ok(l)
    }

    pub fn unit_laplacian(&self) -> DenseMatrix {
        self.laplacian(&EdgeWeights::constant(self.edge_count(), 1.0)).expect("lengths match")
    }

    /// Iteration matrix `I - L(w)`.
    pub fn transition_matrix(&self, w: &EdgeWeights) -> Result<DenseMatrix> {
        let mut m = self.laplacian(w)?;
        m.scale(-1.0);
        for i in 0..self.n {
            m[(i, i)] += 1.0;
        }
        Ok(m)
    }

    /// Ascending eigenvalues of the unit-weight Laplacian.
    pub fn laplacian_spectrum(&self) -> Result<Vec<f64>> {
        Ok(sym_eig(&self.unit_laplacian())?.values)
    }

    /// Distinct eigenvalues of the unit-weight Laplacian, ascending. Sorted
    /// values closer than `tol * max(1, lambda_max)` to their predecessor
    /// join its cluster; each cluster is represented by its mean.
    pub fn distinct_laplacian_eigenvalues(&self, tol: f64) -> Result<Vec<f64>> {
        let spectrum = self.laplacian_spectrum()?;
        Ok(cluster_sorted(&spectrum, tol))
    }

    pub fn distinct_eigenvalue_count(&self, tol: f64) -> Result<usize> {
        Ok(self.distinct_laplacian_eigenvalues(tol)?.len())
    }

    pub(crate) fn check_weights(&self, w: &EdgeWeights) -> Result<()> {
        if w.len() != self.edges.len() {
            return Err(ConsensusError::DimensionMismatch { expected: self.edges.len(), found: w.len() });
        }
        Ok(())
    }
}

pub(crate) fn cluster_sorted(sorted: &[f64], tol: f64) -> Vec<f64> {
    let Some(&max) = sorted.last() else {
        return Vec::new();
    };
    let gap = tol * max.abs().max(1.0);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for &v in sorted {
        match clusters.last_mut() {
            Some(c) if v - *c.last().expect("non-empty") <= gap => c.push(v),
            _ => clusters.push(vec![v]),
        }
    }
    clusters.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Number of nodes reached by BFS from node 0.
pub(crate) fn is_connected_count(n: usize, edges: &[(usize, usize)]) -> usize {
    if n == 0 {
        return 0;
    }
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// One real coupling gain per edge, in the owning graph's canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(Vec<f64>);

impl EdgeWeights {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(m: usize, w: f64) -> Self {
        Self(vec![w; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for EdgeWeights {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn k3() -> Graph {
        Graph::from_edge_list(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn canonicalises_reversed_pair() {
        let g = Graph::from_edge_list(2, &[(1, 0)]).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn triangle_sorted() {
        let g = k3();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn duplicates_removed() {
        let g = Graph::from_edge_list(3, &[(0, 1), (1, 0), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Graph::from_edge_list(3, &[(0, 1)]),
            Err(ConsensusError::Disconnected { reached: 2, n: 3 })
        );
        assert_eq!(Graph::from_edge_list(3, &[(1, 1)]), Err(ConsensusError::SelfLoop(1)));
        assert_eq!(
            Graph::from_edge_list(3, &[(0, 3)]),
            Err(ConsensusError::NodeOutOfRange { node: 3, n: 3 })
        );
        assert_eq!(Graph::from_edge_list(1, &[]), Err(ConsensusError::TooFewNodes(1)));
    }

    #[test]
    fn laplacian_p2() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        let l = g.laplacian(&EdgeWeights::new(vec![0.3])).unwrap();
        assert_eq!(l.as_slice(), &[0.3, -0.3, -0.3, 0.3]);
    }

    #[test]
    fn laplacian_p3_unit() {
        let l = path3().unit_laplacian();
        assert_eq!(l.as_slice(), &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn k3_third_weights_average_in_one_step() {
        let m = k3().transition_matrix(&EdgeWeights::constant(3, 1.0 / 3.0)).unwrap();
        for x in m.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_length_mismatch() {
        assert!(matches!(
            path3().laplacian(&EdgeWeights::new(vec![1.0])),
            Err(ConsensusError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn distinct_counts() {
        assert_eq!(k3().distinct_eigenvalue_count(DISTINCT_EIG_TOL).unwrap(), 2);
        let c4 = Graph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        assert_eq!(c4.distinct_eigenvalue_count(DISTINCT_EIG_TOL).unwrap(), 3);
        assert_eq!(path3().distinct_eigenvalue_count(DISTINCT_EIG_TOL).unwrap(), 3);
    }

    #[test]
    fn edge_list_text_round_trip() {
        let g = k3();
        let text = g.to_edge_list_text();
        assert_eq!(text, "3 3\n0 1\n0 2\n1 2\n");
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
    }

    #[test]
    fn edge_list_parser_rejects_deviations() {
        for bad in ["", "3\n0 1\n", "3 2\n0 1\n", "3 2\n1 0\n1 2\n", "3 2\n0 1\n0 1\n", "3 2\n0 1\n1 x\n", "3 1\n0 1 2\n"]
        {
            assert!(
                matches!(Graph::parse_edge_list(bad), Err(ConsensusError::MalformedEdgeList(_))),
                "accepted {bad:?}"
            );
        }
        assert!(matches!(Graph::parse_edge_list("3 1\n0 1\n"), Err(ConsensusError::Disconnected { .. })));
    }
}
