//! Undirected weighted networks and cluster labelings.
//!
//! A [`WeightedNetwork`] stores every edge once with `i < j`. An edge with
//! weight `0.0` is a present edge; absence is encoded only by the pair being
//! missing from the edge list.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("duplicate edge ({i}, {j}, {w})")]
    DuplicateEdge { i: usize, j: usize, w: f64 },
    #[error("self-loop ({i}, {j}, {w})")]
    SelfLoop { i: usize, j: usize, w: f64 },
    #[error("index out of range in ({i}, {j}, {w}) for n = {n}")]
    IndexOutOfRange { i: usize, j: usize, w: f64, n: usize },
    #[error("node {node} out of range for n = {n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("non-finite weight in ({i}, {j}, {w})")]
    NonFiniteWeight { i: usize, j: usize, w: f64 },
    #[error("label {label} at node {node} is not below K = {k}")]
    LabelOutOfRange { node: usize, label: usize, k: usize },
}

/// One stored edge, always with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// An immutable undirected network with one real weight per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    n: usize,
    edges: Vec<Edge>,
    // neighbor lists hold (neighbor, edge index)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl WeightedNetwork {
    /// Builds a network from `(i, j, w)` triples.
    ///
    /// Pairs are stored canonically (`i < j`) and sorted; reversed pairs are
    /// accepted, while self-loops and repeated pairs are rejected.
    pub fn new<I>(n: usize, triples: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n < 2 {
            return Err(NetworkError::TooFewNodes(n));
        }
        let mut edges = Vec::new();
        for (i, j, w) in triples {
            if i >= n || j >= n {
                return Err(NetworkError::IndexOutOfRange { i, j, w, n });
            }
            if i == j {
                return Err(NetworkError::SelfLoop { i, j, w });
            }
            if !w.is_finite() {
                return Err(NetworkError::NonFiniteWeight { i, j, w });
            }
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            edges.push(Edge { i, j, w });
        }
        edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        if let Some(dup) = edges.windows(2).find(|p| p[0].i == p[1].i && p[0].j == p[1].j) {
            let e = dup[1];
            return Err(NetworkError::DuplicateEdge { i: e.i, j: e.j, w: e.w });
        }

        let mut adjacency = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            adjacency[e.i].push((e.j, idx));
            adjacency[e.j].push((e.i, idx));
        }
        Ok(Self { n, edges, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of unordered node pairs, `n(n-1)/2`.
    pub fn dyad_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.iter().map(|e| e.w)
    }

    /// Neighbors of `i` together with the index of the connecting edge.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> Result<usize, NetworkError> {
        self.adjacency.get(i).map(Vec::len).ok_or(NetworkError::NodeOutOfRange { node: i, n: self.n })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Weight of the edge between `i` and `j`, if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.adjacency.get(a)?.iter().find(|&&(nb, _)| nb == b).map(|&(_, idx)| self.edges[idx].w)
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|e| (e.i, e.j, e.w))
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }
}

impl fmt::Display for WeightedNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightedNetwork(n = {}, edges = {})", self.n, self.edges.len())
    }
}

/// A hard assignment of every node to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    assignments: Vec<usize>,
    k: usize,
}

impl Labels {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self, NetworkError> {
        if let Some((node, &label)) = assignments.iter().enumerate().find(|(_, &z)| z >= k) {
            return Err(NetworkError::LabelOutOfRange { node, label, k });
        }
        Ok(Self { assignments, k })
    }

    /// Builds labels with `k` set to one more than the largest label.
    pub fn from_assignments(assignments: Vec<usize>) -> Self {
        let k = assignments.iter().max().map_or(1, |m| m + 1);
        Self { assignments, k }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, node: usize) -> usize {
        self.assignments[node]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &z in &self.assignments {
            sizes[z] += 1;
        }
        sizes
    }

    /// One-hot view: row `i` has a single 1 in column `z_i`.
    pub fn one_hot(&self) -> Vec<Vec<f64>> {
        self.assignments
            .iter()
            .map(|&z| {
                let mut row = vec![0.0; self.k];
                row[z] = 1.0;
                row
            })
            .collect()
    }
}
