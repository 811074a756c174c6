//! Directed acyclic graphs over `d` variables, local edge moves and random
//! graph generators.
//!
//! Adjacency is stored dense and row-major: entry `(i, j)` is set iff the
//! edge `i -> j` exists.

mod generate;
mod io;
mod moves;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{random_er, random_sf};
pub use io::{load_graph, load_graph_csv, load_graph_json, save_graph, save_graph_csv, save_graph_json};
pub use moves::{apply_move, feasible_moves, EdgeMove, MoveKind};

/// A directed acyclic graph. Immutable once built; every constructor
/// validates acyclicity.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "EdgeList", into = "EdgeList")]
pub struct Dag {
    d: usize,
    adj: Vec<bool>,
}

/// JSON edge-list form: `{"d": 3, "edges": [[0, 1], [1, 2]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeList {
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<EdgeList> for Dag {
    type Error = Error;

    fn try_from(list: EdgeList) -> Result<Self> {
        Dag::from_edges(list.d, list.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Dag> for EdgeList {
    fn from(dag: Dag) -> Self {
        EdgeList {
            d: dag.d,
            edges: dag.edges().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<_> = self.edges().collect();
        f.debug_struct("Dag")
            .field("d", &self.d)
            .field("edges", &edges)
            .finish()
    }
}

impl Dag {
    /// The graph on `d` nodes with no edges.
    pub fn empty(d: usize) -> Self {
        Dag {
            d,
            adj: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![false; d * d];
        for (i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::Structural(format!(
                    "edge {i}->{j} out of range for {d} nodes"
                )));
            }
            if i == j {
                return Err(Error::Structural(format!("self-loop on node {i}")));
            }
            adj[i * d + j] = true;
        }
        Self::from_flat(d, adj)
    }

    /// Builds a graph from a square 0/1 matrix given as rows.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let d = check_square(rows)?;
        let adj = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().map(|&v| v != 0))
            .collect();
        Self::from_flat(d, adj)
    }

    fn from_flat(d: usize, adj: Vec<bool>) -> Result<Self> {
        let dag = Dag { d, adj };
        if !dag.acyclic() {
            return Err(Error::Structural("adjacency contains a directed cycle".into()));
        }
        Ok(dag)
    }

    /// Number of nodes.
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.d;
        self.adj
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(k, _)| (k / d, k % d))
    }

    /// Parents of `j`, ascending.
    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_edge(i, j)).collect()
    }

    /// Children of `i`, ascending.
    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        (0..self.d).filter(|&i| self.has_edge(i, j)).count()
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.d).map(|j| self.in_degree(j)).max().unwrap_or(0)
    }

    /// Adjacency as 0/1 rows.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.adj
            .chunks(self.d.max(1))
            .take(self.d)
            .map(|r| r.iter().map(|&e| e as u8).collect())
            .collect()
    }

    /// Adjacency as a row-major `f64` matrix, the form metrics consume.
    pub fn to_scores(&self) -> Vec<Vec<f64>> {
        self.to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(f64::from).collect())
            .collect()
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d {
            return Err(Error::Structural("permutation length differs from d".into()));
        }
        Dag::from_edges(self.d, self.edges().map(|(i, j)| (perm[i], perm[j])))
    }

    pub(crate) fn with_edge(&self, i: usize, j: usize, present: bool) -> Dag {
        let mut adj = self.adj.clone();
        adj[i * self.d + j] = present;
        Dag { d: self.d, adj }
    }

    fn acyclic(&self) -> bool {
        kahn_order(self.d, |i, j| self.adj[i * self.d + j]).is_some()
    }

    /// Topological order, ties broken by ascending node index.
    pub fn topological_order(&self) -> Vec<usize> {
        kahn_order(self.d, |i, j| self.has_edge(i, j)).expect("Dag is acyclic by construction")
    }

    /// `reach[u * d + v]` is true iff a directed path of length >= 1 leads
    /// from `u` to `v`.
    pub(crate) fn reachability(&self) -> Vec<bool> {
        let d = self.d;
        let mut reach = vec![false; d * d];
        // Reverse topological order: each node's reach set is the union of
        // its children's sets plus the children themselves.
        for &u in self.topological_order().iter().rev() {
            for c in 0..d {
                if self.has_edge(u, c) {
                    reach[u * d + c] = true;
                    for v in 0..d {
                        if reach[c * d + v] {
                            reach[u * d + v] = true;
                        }
                    }
                }
            }
        }
        reach
    }
}

fn check_square<R: AsRef<[u8]>>(rows: &[R]) -> Result<usize> {
    let d = rows.len();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::Structural(format!(
                "row {i} has {} entries, expected {d}",
                r.len()
            )));
        }
        if r[i] != 0 {
            return Err(Error::Structural(format!("nonzero diagonal entry at ({i}, {i})")));
        }
    }
    Ok(d)
}

fn kahn_order(d: usize, edge: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if edge(i, j) {
                indeg[j] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..d).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for v in 0..d {
            if edge(u, v) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
    }
    (order.len() == d).then_some(order)
}

/// Checks a square 0/1 matrix with zero diagonal for directed cycles.
pub fn is_acyclic<R: AsRef<[u8]>>(rows: &[R]) -> Result<bool> {
    let d = check_square(rows)?;
    Ok(kahn_order(d, |i, j| rows[i].as_ref()[j] != 0).is_some())
}

/// Topological order with ascending-index tie-breaking.
pub fn topological_order(dag: &Dag) -> Vec<usize> {
    dag.topological_order()
}
