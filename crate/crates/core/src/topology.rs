//! Network topology: undirected, connected agent graphs.

use crate::error::{Error, Result};

/// Built-in topology families plus free-form adjacency.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologyKind {
    /// Path graph 0-1-2-...-(N-1).
    Line,
    /// Six-node ring with the three main diagonals; every node has degree 3.
    Regular3Hexagon,
    Custom(Vec<Vec<bool>>),
}

/// Undirected connected graph over `n` agent nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    /// Degree `N_k` of node `k`.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|k| self.degree(k)).collect()
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }
}

/// Builds a named topology and validates it is undirected, self-loop free
/// and connected.
pub fn build_topology(kind: &TopologyKind, n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 nodes, got {n}")));
    }
    let adjacency = match kind {
        TopologyKind::Line => {
            let mut adj = vec![vec![false; n]; n];
            for i in 0..n - 1 {
                adj[i][i + 1] = true;
                adj[i + 1][i] = true;
            }
            adj
        }
        TopologyKind::Regular3Hexagon => {
            if n != 6 {
                return Err(Error::Config(format!(
                    "3-regular hexagon requires 6 nodes, got {n}"
                )));
            }
            let mut adj = vec![vec![false; n]; n];
            for i in 0..n {
                let ring = (i + 1) % n;
                let across = (i + n / 2) % n;
                adj[i][ring] = true;
                adj[ring][i] = true;
                adj[i][across] = true;
                adj[across][i] = true;
            }
            adj
        }
        TopologyKind::Custom(adj) => {
            if adj.len() != n || adj.iter().any(|row| row.len() != n) {
                return Err(Error::Config(format!("adjacency must be {n}x{n}")));
            }
            adj.clone()
        }
    };

    for i in 0..n {
        if adjacency[i][i] {
            return Err(Error::Config(format!("self-loop at node {i}")));
        }
        for j in 0..n {
            if adjacency[i][j] != adjacency[j][i] {
                return Err(Error::Config(format!(
                    "adjacency not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| adjacency[i][j]).collect())
        .collect();

    // BFS connectivity check.
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &neighbors[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::Config("graph is not connected".into()));
    }

    Ok(Topology {
        n,
        adjacency,
        neighbors,
    })
}
