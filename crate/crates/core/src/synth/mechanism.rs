use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::MechanismClass;
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Parameters of one node's mechanism. Per-parent parameters follow the
/// order of [`NodeMechanism::parents`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeParams {
    Linear {
        weights: Vec<f64>,
    },
    /// `sqrt(2/m) * sum_k out[k] * cos(omega[k] . x + phase[k])`.
    Rff {
        omega: Vec<Vec<f64>>,
        phase: Vec<f64>,
        out: Vec<f64>,
    },
    /// `coef[p][k]` multiplies `T_{k+1}(clamp(x_p, -1, 1))`.
    Chebyshev {
        coef: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMechanism {
    pub parents: Vec<usize>,
    pub params: NodeParams,
}

/// Mechanisms for every node of an SCM, all of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub class: MechanismClass,
    pub nodes: Vec<NodeMechanism>,
}

/// Ranges used when drawing mechanism parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MechanismRanges {
    pub linear_weight: (f64, f64),
    pub rff_features: usize,
    pub rff_length_scale: f64,
    pub chebyshev_degree: usize,
    pub chebyshev_coef: (f64, f64),
}

fn signed_uniform<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    let mag = range.0 + (range.1 - range.0) * rng.random::<f64>();
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

impl MechanismSpec {
    pub(crate) fn sample<R: Rng + ?Sized>(
        class: MechanismClass,
        dag: &Dag,
        ranges: &MechanismRanges,
        rng: &mut R,
    ) -> Self {
        let nodes = (0..dag.d())
            .map(|j| {
                let parents = dag.parents(j);
                let k = parents.len();
                let params = match class {
                    MechanismClass::Linear => NodeParams::Linear {
                        weights: (0..k).map(|_| signed_uniform(ranges.linear_weight, rng)).collect(),
                    },
                    MechanismClass::Rff => {
                        let m = ranges.rff_features;
                        let inv_ls = 1.0 / ranges.rff_length_scale;
                        let omega = (0..m)
                            .map(|_| {
                                (0..k)
                                    .map(|_| rng.sample::<f64, _>(StandardNormal) * inv_ls)
                                    .collect()
                            })
                            .collect();
                        let phase = (0..m)
                            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                            .collect();
                        let out = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                        NodeParams::Rff { omega, phase, out }
                    }
                    MechanismClass::Chebyshev => NodeParams::Chebyshev {
                        coef: (0..k)
                            .map(|_| {
                                (0..ranges.chebyshev_degree)
                                    .map(|_| signed_uniform(ranges.chebyshev_coef, rng))
                                    .collect()
                            })
                            .collect(),
                    },
                };
                NodeMechanism { parents, params }
            })
            .collect();
        MechanismSpec { class, nodes }
    }

    /// Checks parameter shapes against the parent sets of `dag`.
    pub fn validate(&self, dag: &Dag) -> Result<()> {
        if self.nodes.len() != dag.d() {
            return Err(Error::Structural(format!(
                "{} node mechanisms for a {}-node graph",
                self.nodes.len(),
                dag.d()
            )));
        }
        for (j, node) in self.nodes.iter().enumerate() {
            let mut sorted = node.parents.clone();
            sorted.sort_unstable();
            if sorted != dag.parents(j) {
                return Err(Error::Structural(format!("node {j}: mechanism parents disagree with the graph")));
            }
            node.check_shape(j)?;
        }
        Ok(())
    }

    /// Relabels nodes: node `v` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> MechanismSpec {
        let mut nodes = self.nodes.clone();
        for (v, node) in self.nodes.iter().enumerate() {
            nodes[perm[v]] = NodeMechanism {
                parents: node.parents.iter().map(|&p| perm[p]).collect(),
                params: node.params.clone(),
            };
        }
        MechanismSpec { class: self.class, nodes }
    }
}

impl NodeMechanism {
    fn check_shape(&self, node: usize) -> Result<()> {
        let k = self.parents.len();
        let ok = match &self.params {
            NodeParams::Linear { weights } => weights.len() == k,
            NodeParams::Rff { omega, phase, out } => {
                omega.len() == out.len() && phase.len() == out.len() && omega.iter().all(|r| r.len() == k)
            }
            NodeParams::Chebyshev { coef } => coef.len() == k,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Structural(format!("node {node}: parameter shapes do not match {k} parents")))
        }
    }

    /// Noise-free output given parent values in `parents` order.
    pub fn eval(&self, parent_values: &[f64]) -> f64 {
        if self.parents.is_empty() {
            return 0.0;
        }
        match &self.params {
            NodeParams::Linear { weights } => weights.iter().zip(parent_values).map(|(w, x)| w * x).sum(),
            NodeParams::Rff { omega, phase, out } => {
                let m = out.len() as f64;
                let s: f64 = omega
                    .iter()
                    .zip(phase)
                    .zip(out)
                    .map(|((row, b), w)| {
                        let z: f64 = row.iter().zip(parent_values).map(|(o, x)| o * x).sum();
                        w * (z + b).cos()
                    })
                    .sum();
                s * (2.0 / m).sqrt()
            }
            NodeParams::Chebyshev { coef } => coef
                .iter()
                .zip(parent_values)
                .map(|(cs, &x)| chebyshev_series(cs, x.clamp(-1.0, 1.0)))
                .sum(),
        }
    }
}

/// `sum_k coef[k] * T_{k+1}(x)` via the three-term recurrence.
fn chebyshev_series(coef: &[f64], x: f64) -> f64 {
    let (mut t_prev, mut t_cur) = (1.0, x);
    let mut acc = 0.0;
    for &c in coef {
        acc += c * t_cur;
        let next = 2.0 * x * t_cur - t_prev;
        t_prev = t_cur;
        t_cur = next;
    }
    acc
}

/// Evaluates node `node`'s mechanism on its parent values.
pub fn eval_mechanism(spec: &MechanismSpec, node: usize, parent_values: &[f64]) -> Result<f64> {
    let mech = spec
        .nodes
        .get(node)
        .ok_or_else(|| Error::Structural(format!("node {node} out of range")))?;
    if parent_values.len() != mech.parents.len() {
        return Err(Error::Structural(format!(
            "node {node} has {} parents, got {} values",
            mech.parents.len(),
            parent_values.len()
        )));
    }
    mech.check_shape(node)?;
    Ok(mech.eval(parent_values))
}
