use rand::seq::SliceRandom;
use rand::Rng;

use super::Dag;

/// Erdős–Rényi DAG: draw a random node order, then keep each forward pair
/// independently with probability `expected_edges / C(d, 2)` (capped at 1).
pub fn random_er<R: Rng + ?Sized>(d: usize, expected_edges: f64, rng: &mut R) -> Dag {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let pairs = d * d.saturating_sub(1) / 2;
    let p = if pairs == 0 {
        0.0
    } else {
        (expected_edges.max(0.0) / pairs as f64).min(1.0)
    };
    let mut edges = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            if rng.random::<f64>() < p {
                edges.push((order[a], order[b]));
            }
        }
    }
    Dag::from_edges(d, edges).expect("forward edges of a permutation are acyclic")
}

/// Scale-free DAG by preferential attachment: node `t` links to
/// `min(attach_m, t)` distinct earlier nodes, each picked with probability
/// proportional to its current degree + 1. Edges point old -> new.
pub fn random_sf<R: Rng + ?Sized>(d: usize, attach_m: usize, rng: &mut R) -> Dag {
    let mut degree = vec![0usize; d];
    let mut edges = Vec::new();
    for t in 1..d {
        let k = attach_m.min(t);
        let mut weights: Vec<f64> = degree[..t].iter().map(|&g| g as f64 + 1.0).collect();
        let mut chosen = Vec::with_capacity(k);
        for _ in 0..k {
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = t - 1;
            for (v, &w) in weights.iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = v;
                    break;
                }
                u -= w;
            }
            // Guard against rounding sending `u` past the last positive weight.
            if weights[pick] == 0.0 {
                pick = weights.iter().rposition(|&w| w > 0.0).expect("k <= t");
            }
            weights[pick] = 0.0;
            chosen.push(pick);
        }
        for v in chosen {
            edges.push((v, t));
            degree[v] += 1;
            degree[t] += 1;
        }
    }
    Dag::from_edges(d, edges).expect("old -> new edges are acyclic")
}
