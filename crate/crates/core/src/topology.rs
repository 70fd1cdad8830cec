//! Directed communication graph over the leader (node 0) and followers
//! (nodes `1..=N`), with unit edge weights.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An edge `from -> to`: node `to` receives information from node `from`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone)]
pub struct Topology {
    n_followers: usize,
    edges: Vec<Edge>,
    in_degrees: Vec<usize>,
    /// `adjacency[(i, j)] = 1` iff `i` receives from `j`.
    adjacency: DMatrix<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub acyclic: bool,
    pub rooted: bool,
    pub leader_isolated: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.acyclic && self.rooted && self.leader_isolated
    }
}

/// Builds the graph and all derived matrices.
pub fn build_topology(n_followers: usize, edges: &[Edge]) -> Result<Topology> {
    if n_followers == 0 {
        return Err(Error::Topology("at least one follower is required".into()));
    }
    let nodes = n_followers + 1;
    let mut seen = BTreeSet::new();
    let mut adjacency = DMatrix::<i64>::zeros(nodes, nodes);
    for &(from, to) in edges {
        if from >= nodes || to >= nodes {
            return Err(Error::Topology(format!(
                "edge {from}->{to}: node index out of range 0..={n_followers}"
            )));
        }
        if from == to {
            return Err(Error::Topology(format!("self-edge on node {from}")));
        }
        if !seen.insert((from, to)) {
            return Err(Error::Topology(format!("duplicate edge {from}->{to}")));
        }
        adjacency[(to, from)] = 1;
    }
    let in_degrees = (0..nodes).map(|i| adjacency.row(i).sum() as usize).collect();
    Ok(Topology { n_followers, edges: edges.to_vec(), in_degrees, adjacency })
}

impl Topology {
    pub fn n_followers(&self) -> usize {
        self.n_followers
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// In-degree `d_i` of every node, leader first.
    pub fn in_degrees(&self) -> &[usize] {
        &self.in_degrees
    }

    /// In-degree of follower `i` (1-based).
    pub fn in_degree(&self, i: usize) -> usize {
        self.in_degrees[i]
    }

    pub fn adjacency(&self) -> &DMatrix<i64> {
        &self.adjacency
    }

    /// Nodes that follower/leader `i` receives from.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..=self.n_followers).filter(|&j| self.adjacency[(i, j)] != 0).collect()
    }

    pub fn laplacian(&self) -> DMatrix<i64> {
        let mut l = -self.adjacency.clone();
        for (i, d) in self.in_degrees.iter().enumerate() {
            l[(i, i)] += *d as i64;
        }
        l
    }

    /// `diag(rho_10, ..., rho_N0)`.
    pub fn leader_adjacency(&self) -> DMatrix<i64> {
        let n = self.n_followers;
        DMatrix::from_fn(n, n, |i, j| if i == j { self.adjacency[(i + 1, 0)] } else { 0 })
    }

    /// Laplacian of the follower-only subgraph.
    pub fn follower_laplacian(&self) -> DMatrix<i64> {
        let n = self.n_followers;
        let sub = self.adjacency.view((1, 1), (n, n)).into_owned();
        let mut l = -sub.clone();
        for i in 0..n {
            l[(i, i)] += sub.row(i).sum();
        }
        l
    }

    /// `H = A_0 + L_s`.
    pub fn h_matrix(&self) -> DMatrix<i64> {
        self.leader_adjacency() + self.follower_laplacian()
    }

    pub fn h_matrix_as<T: Real>(&self) -> DMatrix<T> {
        self.h_matrix().map(|v| T::lit(v as f64))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_topology(self)
    }
}

/// Checks the graph is loop-free, rooted at the leader and that the leader
/// receives nothing.
pub fn validate_topology(t: &Topology) -> ValidationReport {
    let nodes = t.n_followers + 1;
    let leader_isolated = t.in_degrees[0] == 0;

    // Kahn over the whole graph
    let mut indeg = t.in_degrees.clone();
    let mut queue: VecDeque<usize> = (0..nodes).filter(|&i| indeg[i] == 0).collect();
    let mut visited = 0;
    while let Some(j) = queue.pop_front() {
        visited += 1;
        for i in 0..nodes {
            if t.adjacency[(i, j)] != 0 {
                indeg[i] -= 1;
                if indeg[i] == 0 {
                    queue.push_back(i);
                }
            }
        }
    }
    let acyclic = visited == nodes;

    let mut reached = vec![false; nodes];
    reached[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(j) = queue.pop_front() {
        for i in 0..nodes {
            if t.adjacency[(i, j)] != 0 && !reached[i] {
                reached[i] = true;
                queue.push_back(i);
            }
        }
    }
    let rooted = reached.iter().all(|&r| r);

    ValidationReport { acyclic, rooted, leader_isolated }
}

/// Orders followers (1-based ids) so that every follower-to-follower edge
/// points forward. Ties are broken by lowest original index.
pub fn topological_order(t: &Topology) -> Result<Vec<usize>> {
    let n = t.n_followers;
    let mut indeg: Vec<usize> =
        (1..=n).map(|i| (1..=n).filter(|&j| t.adjacency[(i, j)] != 0).count()).collect();
    let mut heap: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&i| indeg[i - 1] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(j)) = heap.pop() {
        order.push(j);
        for i in 1..=n {
            if t.adjacency[(i, j)] != 0 {
                indeg[i - 1] -= 1;
                if indeg[i - 1] == 0 {
                    heap.push(Reverse(i));
                }
            }
        }
    }
    if order.len() != n {
        return Err(Error::Topology("directed cycle among followers".into()));
    }
    Ok(order)
}

/// Permutes `H` by a follower order (1-based ids).
pub fn permute_h(h: &DMatrix<i64>, order: &[usize]) -> DMatrix<i64> {
    let n = order.len();
    DMatrix::from_fn(n, n, |r, c| h[(order[r] - 1, order[c] - 1)])
}

pub fn is_lower_triangular(m: &DMatrix<i64>) -> bool {
    (0..m.nrows()).all(|i| (i + 1..m.ncols()).all(|j| m[(i, j)] == 0))
}
