use serde::{Deserialize, Serialize};

use super::Dag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Add,
    Delete,
    Reverse,
}

/// A single-edge modification. Field order gives the canonical ordering:
/// kind, then source, then target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeMove {
    pub kind: MoveKind,
    pub source: usize,
    pub target: usize,
}

impl EdgeMove {
    pub fn add(source: usize, target: usize) -> Self {
        EdgeMove { kind: MoveKind::Add, source, target }
    }

    pub fn delete(source: usize, target: usize) -> Self {
        EdgeMove { kind: MoveKind::Delete, source, target }
    }

    pub fn reverse(source: usize, target: usize) -> Self {
        EdgeMove { kind: MoveKind::Reverse, source, target }
    }

    /// Nodes whose parent sets change when the move is applied.
    pub fn changed_nodes(&self) -> Vec<usize> {
        match self.kind {
            MoveKind::Add | MoveKind::Delete => vec![self.target],
            MoveKind::Reverse => vec![self.source, self.target],
        }
    }
}

/// True iff `u` reaches `v` through some path other than the direct edge.
fn has_indirect_path(dag: &Dag, reach: &[bool], u: usize, v: usize) -> bool {
    let d = dag.d();
    (0..d).any(|c| c != v && dag.has_edge(u, c) && reach[c * d + v])
}

/// Every single-edge move that keeps the graph acyclic, in canonical order.
pub fn feasible_moves(dag: &Dag) -> Vec<EdgeMove> {
    let d = dag.d();
    let reach = dag.reachability();
    let mut adds = Vec::new();
    let mut deletes = Vec::new();
    let mut reverses = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if dag.has_edge(i, j) {
                deletes.push(EdgeMove::delete(i, j));
                if !has_indirect_path(dag, &reach, i, j) {
                    reverses.push(EdgeMove::reverse(i, j));
                }
            } else if !dag.has_edge(j, i) && !reach[j * d + i] {
                adds.push(EdgeMove::add(i, j));
            }
        }
    }
    adds.extend(deletes);
    adds.extend(reverses);
    adds
}

/// Applies `mv` to a copy of `dag`.
pub fn apply_move(dag: &Dag, mv: EdgeMove) -> Result<Dag> {
    let (i, j) = (mv.source, mv.target);
    let d = dag.d();
    let infeasible = |reason| Error::MoveInfeasible {
        kind: mv.kind,
        source_node: i,
        target: j,
        reason,
    };
    if i >= d || j >= d {
        return Err(infeasible("node index out of range"));
    }
    if i == j {
        return Err(infeasible("self-loop"));
    }
    match mv.kind {
        MoveKind::Add => {
            if dag.has_edge(i, j) {
                return Err(infeasible("edge already present"));
            }
            if dag.has_edge(j, i) || dag.reachability()[j * d + i] {
                return Err(infeasible("adding the edge creates a cycle"));
            }
            Ok(dag.with_edge(i, j, true))
        }
        MoveKind::Delete => {
            if !dag.has_edge(i, j) {
                return Err(infeasible("edge absent"));
            }
            Ok(dag.with_edge(i, j, false))
        }
        MoveKind::Reverse => {
            if !dag.has_edge(i, j) {
                return Err(infeasible("edge absent"));
            }
            if has_indirect_path(dag, &dag.reachability(), i, j) {
                return Err(infeasible("reversing the edge creates a cycle"));
            }
            Ok(dag.with_edge(i, j, false).with_edge(j, i, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::graph::is_acyclic;

    #[test]
    fn two_node_moves() {
        let empty = Dag::empty(2);
        assert_eq!(
            feasible_moves(&empty),
            vec![EdgeMove::add(0, 1), EdgeMove::add(1, 0)]
        );
        let one = Dag::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(
            feasible_moves(&one),
            vec![EdgeMove::delete(0, 1), EdgeMove::reverse(0, 1)]
        );
    }

    #[test]
    fn chain_moves() {
        let chain = Dag::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let rev = apply_move(&chain, EdgeMove::reverse(1, 2)).unwrap();
        assert_eq!(rev, Dag::from_edges(3, [(0, 1), (2, 1)]).unwrap());
        let err = apply_move(&chain, EdgeMove::add(2, 0)).unwrap_err();
        assert!(matches!(err, Error::MoveInfeasible { reason, .. } if reason.contains("cycle")));
        assert!(apply_move(&chain, EdgeMove::delete(0, 2)).is_err());
        assert!(apply_move(&chain, EdgeMove::add(0, 1)).is_err());
    }

    #[test]
    fn edge_count_changes_by_kind() {
        let chain = Dag::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let n = chain.edge_count();
        assert_eq!(apply_move(&chain, EdgeMove::add(0, 2)).unwrap().edge_count(), n + 1);
        assert_eq!(apply_move(&chain, EdgeMove::delete(0, 1)).unwrap().edge_count(), n - 1);
        assert_eq!(apply_move(&chain, EdgeMove::reverse(0, 1)).unwrap().edge_count(), n);
    }

    #[test]
    fn input_graph_is_unchanged() {
        let chain = Dag::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let copy = chain.clone();
        let _ = apply_move(&chain, EdgeMove::reverse(0, 1)).unwrap();
        assert_eq!(chain, copy);
    }

    /// Every one-edge edit of `dag` that yields a DAG, found by brute force.
    fn brute_force_neighbors(dag: &Dag) -> BTreeSet<Vec<Vec<u8>>> {
        let d = dag.d();
        let rows = dag.to_rows();
        let mut out = BTreeSet::new();
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let mut m = rows.clone();
                if rows[i][j] == 1 {
                    m[i][j] = 0;
                    out.insert(m.clone());
                    m[j][i] = 1;
                    if is_acyclic(&m).unwrap() {
                        out.insert(m);
                    }
                } else if rows[j][i] == 0 {
                    m[i][j] = 1;
                    if is_acyclic(&m).unwrap() {
                        out.insert(m);
                    }
                }
            }
        }
        out
    }

    fn dag_strategy(max_d: usize) -> impl Strategy<Value = Dag> {
        (2..=max_d).prop_flat_map(|d| {
            (Just(d), proptest::collection::vec(any::<bool>(), d * d), Just(()))
                .prop_map(|(d, bits, _)| {
                    // Keep only forward edges of the identity order, then
                    // shuffle labels deterministically from the bits.
                    let edges = (0..d)
                        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
                        .filter(|&(i, j)| bits[i * d + j]);
                    let g = Dag::from_edges(d, edges).unwrap();
                    let mut perm: Vec<usize> = (0..d).collect();
                    perm.rotate_left(bits.iter().filter(|&&b| b).count() % d);
                    g.permute(&perm).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn feasible_moves_complete_and_sound(dag in dag_strategy(4)) {
            let moves = feasible_moves(&dag);
            let mut sorted = moves.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &moves);
            let reached: BTreeSet<_> = moves
                .iter()
                .map(|&m| apply_move(&dag, m).unwrap().to_rows())
                .collect();
            prop_assert_eq!(reached.len(), moves.len());
            prop_assert_eq!(reached, brute_force_neighbors(&dag));
        }

        #[test]
        fn applied_moves_stay_acyclic(dag in dag_strategy(7)) {
            for m in feasible_moves(&dag) {
                let next = apply_move(&dag, m).unwrap();
                prop_assert!(is_acyclic(&next.to_rows()).unwrap());
            }
        }
    }
}
