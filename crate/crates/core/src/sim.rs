//! Structure-induced mechanisms: per-node additive ridge regressions of each
//! variable on its graph parents, residual noise models, and ancestral
//! resampling from the fitted model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// The raw parent value.
    Linear,
    /// Standardized value plus sine/cosine pairs at frequencies 0.5, 1.0, ...
    Fourier,
    /// Standardized value plus hinge functions at evenly spaced knots.
    Spline,
}

/// Settings for the per-node additive regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub basis: Basis,
    /// Expanded features per parent (ignored by the linear basis).
    pub basis_size: usize,
    pub ridge: f64,
    /// Iteration budget of an iterative additive-model solver. The
    /// closed-form solver used here does not consume it.
    pub max_iter: usize,
    /// Maximum in-degree a graph may have to be fitted.
    pub max_in_degree: Option<usize>,
    /// Lower bound on the residual standard deviation.
    pub sigma_floor: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            basis: Basis::Fourier,
            basis_size: 8,
            ridge: 1e-3,
            max_iter: 100,
            max_in_degree: Some(6),
            sigma_floor: 1e-3,
        }
    }
}

impl RegressorConfig {
    pub fn linear() -> Self {
        RegressorConfig { basis: Basis::Linear, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis_size == 0 || self.basis_size > 64 {
            return Err(Error::Config("basis_size must be between 1 and 64".into()));
        }
        if !(self.ridge >= 0.0) || !(self.sigma_floor > 0.0) {
            return Err(Error::Config("ridge must be >= 0 and sigma_floor > 0".into()));
        }
        Ok(())
    }

    fn features_per_parent(&self) -> usize {
        match self.basis {
            Basis::Linear => 1,
            _ => self.basis_size,
        }
    }
}

/// The expansion applied to one parent column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub basis: Basis,
    pub size: usize,
    pub center: f64,
    pub scale: f64,
}

impl FeatureMap {
    fn new(basis: Basis, size: usize, column: &[f64]) -> Self {
        if basis == Basis::Linear {
            return FeatureMap { basis, size: 1, center: 0.0, scale: 1.0 };
        }
        let n = column.len() as f64;
        let center = column.iter().sum::<f64>() / n;
        let sd = (column.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        FeatureMap { basis, size, center, scale }
    }

    /// Writes the `size` features of `x` into `out`.
    #[inline]
    fn expand(&self, x: f64, out: &mut [f64]) {
        let z = (x - self.center) / self.scale;
        out[0] = z;
        match self.basis {
            Basis::Linear => {}
            Basis::Fourier => {
                for k in 1..self.size {
                    let freq = 0.5 * ((k + 1) / 2) as f64;
                    out[k] = if k % 2 == 1 { (freq * z).sin() } else { (freq * z).cos() };
                }
            }
            Basis::Spline => {
                let knots = self.size - 1;
                for k in 1..self.size {
                    let knot = if knots == 1 {
                        0.0
                    } else {
                        -1.5 + 3.0 * (k - 1) as f64 / (knots - 1) as f64
                    };
                    out[k] = (z - knot).max(0.0);
                }
            }
        }
    }
}

/// A fitted mechanism and residual noise for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedNode {
    pub parents: Vec<usize>,
    pub maps: Vec<FeatureMap>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub residual_sigma: f64,
    /// Centered in-sample residuals; may be empty after a compact
    /// serialization.
    #[serde(default)]
    pub residual_samples: Vec<f64>,
}

impl FittedNode {
    /// Mechanism output for parent values given in `parents` order.
    pub fn predict(&self, parent_values: &[f64]) -> f64 {
        let mut acc = self.intercept;
        let mut buf = [0.0; 64];
        let mut offset = 0;
        for (map, &x) in self.maps.iter().zip(parent_values) {
            let feats = &mut buf[..map.size];
            map.expand(x, feats);
            acc += feats.iter().zip(&self.weights[offset..offset + map.size]).map(|(f, w)| f * w).sum::<f64>();
            offset += map.size;
        }
        acc
    }
}

/// Fitted mechanisms for every node of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScm {
    pub dag: Dag,
    pub nodes: Vec<FittedNode>,
}

impl FittedScm {
    /// JSON form; residual arrays are dropped unless `with_residuals`.
    pub fn to_json(&self, with_residuals: bool) -> Result<String> {
        if with_residuals {
            return Ok(serde_json::to_string(self)?);
        }
        let mut compact = self.clone();
        for node in &mut compact.nodes {
            node.residual_samples.clear();
        }
        Ok(serde_json::to_string(&compact)?)
    }
}

/// Per-node fit result with the in-sample predictions the scores need.
pub(crate) struct NodeFit {
    pub node: FittedNode,
    pub predictions: Vec<f64>,
    /// Mean squared (uncentered) residual.
    pub mse: f64,
}

pub(crate) fn check_degree(node: usize, in_degree: usize, config: &RegressorConfig) -> Result<()> {
    match config.max_in_degree {
        Some(cap) if in_degree > cap => Err(Error::DegreeCap { node, in_degree, cap }),
        _ => Ok(()),
    }
}

/// Regresses column `node` of `data` on `parents`.
pub(crate) fn fit_node(data: &Dataset, node: usize, parents: &[usize], config: &RegressorConfig) -> Result<NodeFit> {
    check_degree(node, parents.len(), config)?;
    let y = data.column(node);
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let (weights, intercept, maps, predictions) = if parents.is_empty() {
        (Vec::new(), y_mean, Vec::new(), vec![y_mean; n])
    } else {
        let per = config.features_per_parent();
        let p = per * parents.len();
        let maps: Vec<FeatureMap> = parents
            .iter()
            .map(|&q| FeatureMap::new(config.basis, per, data.column(q)))
            .collect();
        let mut phi = DMatrix::<f64>::zeros(n, p);
        let mut buf = vec![0.0; per];
        for (k, (map, &q)) in maps.iter().zip(parents).enumerate() {
            for (r, &x) in data.column(q).iter().enumerate() {
                map.expand(x, &mut buf);
                for (f, &v) in buf.iter().enumerate() {
                    phi[(r, k * per + f)] = v;
                }
            }
        }
        let means: Vec<f64> = (0..p).map(|c| phi.column(c).mean()).collect();
        for (c, m) in means.iter().enumerate() {
            phi.column_mut(c).add_scalar_mut(-m);
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = phi.tr_mul(&phi);
        for c in 0..p {
            gram[(c, c)] += config.ridge;
        }
        let rhs = phi.tr_mul(&yc);
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Numerical(format!("singular design for node {node} on parents {parents:?}"))
        })?;
        let w = chol.solve(&rhs);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite coefficients for node {node}")));
        }
        let fitted = &phi * &w;
        let predictions: Vec<f64> = fitted.iter().map(|v| v + y_mean).collect();
        let intercept = y_mean - means.iter().zip(w.iter()).map(|(m, w)| m * w).sum::<f64>();
        (w.iter().copied().collect(), intercept, maps, predictions)
    };

    let raw: Vec<f64> = y.iter().zip(&predictions).map(|(v, f)| v - f).collect();
    let res_mean = raw.iter().sum::<f64>() / n as f64;
    let mse = raw.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let centered: Vec<f64> = raw.iter().map(|r| r - res_mean).collect();
    let sd = (centered.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(NodeFit {
        node: FittedNode {
            parents: parents.to_vec(),
            maps,
            weights,
            intercept,
            residual_sigma: sd.max(config.sigma_floor),
            residual_samples: centered,
        },
        predictions,
        mse,
    })
}

/// Fits every node of `dag` on `data`.
pub fn fit_sim(dag: &Dag, data: &Dataset, config: &RegressorConfig) -> Result<FittedScm> {
    config.validate()?;
    if data.d() != dag.d() {
        return Err(Error::Structural(format!(
            "dataset has {} columns, graph has {} nodes",
            data.d(),
            dag.d()
        )));
    }
    for j in 0..dag.d() {
        check_degree(j, dag.in_degree(j), config)?;
    }
    let nodes = (0..dag.d())
        .into_par_iter()
        .map(|j| fit_node(data, j, &dag.parents(j), config).map(|f| f.node))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedScm { dag: dag.clone(), nodes })
}

/// Gaussian log-density of `x` around the node's prediction.
pub fn residual_log_likelihood(fitted: &FittedNode, x: f64, parent_values: &[f64]) -> f64 {
    gaussian_log_density(x - fitted.predict(parent_values), fitted.residual_sigma)
}

#[inline]
pub(crate) fn gaussian_log_density(residual: f64, sigma: f64) -> f64 {
    let var = sigma * sigma;
    -0.5 * (std::f64::consts::TAU * var).ln() - residual * residual / (2.0 * var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Gaussian noise with the fitted residual standard deviation.
    Parametric,
    /// Bootstrap draws from the stored residuals.
    Empirical,
}

/// Ancestral sampling of `n` rows from fitted mechanisms.
pub fn sample_from_fitted<R: Rng + ?Sized>(
    fitted: &FittedScm,
    n: usize,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Structural("sample count must be at least 1".into()));
    }
    if mode == NoiseMode::Empirical {
        if let Some(j) = fitted.nodes.iter().position(|f| f.residual_samples.is_empty()) {
            return Err(Error::Input(format!("node {j} has no stored residuals for bootstrap sampling")));
        }
    }
    let d = fitted.dag.d();
    let order = fitted.dag.topological_order();
    let mut values = DMatrix::zeros(n, d);
    let mut parent_buf = Vec::new();
    for r in 0..n {
        for &j in &order {
            let node = &fitted.nodes[j];
            parent_buf.clear();
            parent_buf.extend(node.parents.iter().map(|&p| values[(r, p)]));
            let noise = match mode {
                NoiseMode::Parametric => rng.sample::<f64, _>(StandardNormal) * node.residual_sigma,
                NoiseMode::Empirical => node.residual_samples[rng.random_range(0..node.residual_samples.len())],
            };
            values[(r, j)] = node.predict(&parent_buf) + noise;
        }
    }
    Dataset::new(values).map_err(|e| Error::Numerical(format!("resampling produced {e}")))
}
