//! The joint graph score: an alignment-of-distribution term measuring how
//! well graph-induced mechanisms explain the data, minus a weighted edge
//! count.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::sim::{fit_node, RegressorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdVariant {
    /// Mean Gaussian log-likelihood of each variable given its parents.
    Likelihood,
    /// Coefficient of determination of each node's fit.
    R2,
    /// One minus the range-normalized 1-Wasserstein distance between
    /// observed values and fitted predictions.
    Nwd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdScaleMode {
    /// Per-node terms averaged over the `d` variables.
    Averaged,
    /// Per-node terms summed over the variables.
    PerVariableSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub ad_variant: AdVariant,
    /// Weight of the edge count. `None` picks `2 / (n d)` in averaged mode
    /// and `1` in per-variable-sum mode.
    pub sparsity_weight: Option<f64>,
    pub ad_scale_mode: AdScaleMode,
    pub regressor: RegressorConfig,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            ad_variant: AdVariant::Likelihood,
            sparsity_weight: None,
            ad_scale_mode: AdScaleMode::Averaged,
            regressor: RegressorConfig::default(),
        }
    }
}

impl ScoreConfig {
    /// Effective edge-count weight for a dataset of shape `n x d`.
    pub fn lambda(&self, n: usize, d: usize) -> f64 {
        match (self.sparsity_weight, self.ad_scale_mode) {
            (Some(l), _) => l,
            (None, AdScaleMode::Averaged) => 2.0 / (n as f64 * d as f64),
            (None, AdScaleMode::PerVariableSum) => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.sparsity_weight {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("sparsity weight {l} must be finite and >= 0")));
            }
        }
        self.regressor.validate()
    }
}

/// A graph's score split into its parts: `total = ad - lambda * sparsity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub ad: f64,
    pub sparsity: usize,
    pub total: f64,
}

/// The serialized form of a score inside traces and reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub ad: f64,
    pub sparsity: usize,
    pub total: f64,
    pub variant: AdVariant,
    pub lambda: f64,
}

/// Mean absolute difference between the order statistics of two equally
/// sized samples.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Structural(format!(
            "wasserstein1_sorted needs equal non-zero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

fn node_nwd(observed: &[f64], predicted: &[f64]) -> f64 {
    let lo = observed.iter().chain(predicted).copied().fold(f64::INFINITY, f64::min);
    let hi = observed.iter().chain(predicted).copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return 1.0;
    }
    let w1 = wasserstein1_sorted(observed, predicted).expect("equal lengths");
    (1.0 - w1 / range).clamp(0.0, 1.0)
}

/// Scores graphs on one dataset, caching each scored graph's per-node
/// terms. A graph missing from the cache but reached by a move from a scored
/// graph refits only the nodes whose parent sets changed. A graph's AD is
/// always re-aggregated from its `d` node terms in index order, so cached
/// and fresh evaluations agree to the bit. The cache allows concurrent
/// readers.
pub struct Scorer<'a> {
    data: &'a Dataset,
    config: ScoreConfig,
    lambda: f64,
    cache: RwLock<HashMap<Dag, Vec<f64>>>,
}

impl<'a> Scorer<'a> {
    pub fn new(data: &'a Dataset, config: ScoreConfig) -> Result<Self> {
        config.validate()?;
        let lambda = config.lambda(data.n(), data.d());
        Ok(Scorer {
            data,
            config,
            lambda,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn record(&self, value: ScoreValue) -> ScoreRecord {
        ScoreRecord {
            ad: value.ad,
            sparsity: value.sparsity,
            total: value.total,
            variant: self.config.ad_variant,
            lambda: self.lambda,
        }
    }

    /// Number of distinct graphs scored so far.
    pub fn cached_graphs(&self) -> usize {
        self.cache.read().expect("score cache poisoned").len()
    }

    /// The AD contribution of `node` with the given (ascending) parents,
    /// computed without the cache.
    pub fn node_term(&self, node: usize, parents: &[usize]) -> Result<f64> {
        self.compute_node_term(node, parents)
    }

    fn cached(&self, dag: &Dag) -> Option<Vec<f64>> {
        self.cache.read().expect("score cache poisoned").get(dag).cloned()
    }

    fn insert(&self, dag: &Dag, terms: &[f64]) {
        self.cache.write().expect("score cache poisoned").insert(dag.clone(), terms.to_vec());
    }

    /// Per-node terms of `cand`, which differs from a graph with terms
    /// `base_terms` only in the parent sets of `changed`.
    pub fn updated_terms(&self, base_terms: &[f64], cand: &Dag, changed: &[usize]) -> Result<Vec<f64>> {
        self.check_shape(cand)?;
        if let Some(t) = self.cached(cand) {
            return Ok(t);
        }
        let mut terms = base_terms.to_vec();
        for &j in changed {
            terms[j] = self.compute_node_term(j, &cand.parents(j))?;
        }
        self.insert(cand, &terms);
        Ok(terms)
    }

    fn compute_node_term(&self, node: usize, parents: &[usize]) -> Result<f64> {
        let fit = fit_node(self.data, node, parents, &self.config.regressor)?;
        let observed = self.data.column(node);
        Ok(match self.config.ad_variant {
            AdVariant::Likelihood => {
                let s = fit.node.residual_sigma;
                -0.5 * (std::f64::consts::TAU * s * s).ln() - fit.mse / (2.0 * s * s)
            }
            AdVariant::R2 => {
                if parents.is_empty() {
                    0.0
                } else {
                    let n = observed.len() as f64;
                    let mean = observed.iter().sum::<f64>() / n;
                    let ss_tot: f64 = observed.iter().map(|v| (v - mean).powi(2)).sum();
                    if ss_tot <= 0.0 {
                        log::warn!("node {node} has zero variance; its R^2 is taken as 0");
                        0.0
                    } else {
                        1.0 - fit.mse * n / ss_tot
                    }
                }
            }
            AdVariant::Nwd => node_nwd(observed, &fit.predictions),
        })
    }

    /// Per-node terms of `dag`, in node order.
    pub fn node_terms(&self, dag: &Dag) -> Result<Vec<f64>> {
        self.check_shape(dag)?;
        if let Some(t) = self.cached(dag) {
            return Ok(t);
        }
        let terms = (0..dag.d()).map(|j| self.compute_node_term(j, &dag.parents(j))).collect::<Result<Vec<_>>>()?;
        self.insert(dag, &terms);
        Ok(terms)
    }

    /// Combines per-node terms and the edge count into a score.
    pub fn combine(&self, terms: &[f64], sparsity: usize) -> ScoreValue {
        let sum: f64 = terms.iter().sum();
        let ad = match self.config.ad_scale_mode {
            AdScaleMode::Averaged => sum / terms.len() as f64,
            AdScaleMode::PerVariableSum => sum,
        };
        ScoreValue {
            ad,
            sparsity,
            total: ad - self.lambda * sparsity as f64,
        }
    }

    pub fn score(&self, dag: &Dag) -> Result<ScoreValue> {
        let terms = self.node_terms(dag)?;
        Ok(self.combine(&terms, dag.edge_count()))
    }

    fn check_shape(&self, dag: &Dag) -> Result<()> {
        if dag.d() != self.data.d() {
            return Err(Error::Structural(format!(
                "graph has {} nodes, dataset has {} columns",
                dag.d(),
                self.data.d()
            )));
        }
        Ok(())
    }
}

fn ad_with(dag: &Dag, data: &Dataset, config: &ScoreConfig, variant: AdVariant) -> Result<f64> {
    let config = ScoreConfig { ad_variant: variant, ..config.clone() };
    Ok(Scorer::new(data, config)?.score(dag)?.ad)
}

/// Likelihood-based AD.
pub fn ad_likelihood(dag: &Dag, data: &Dataset, config: &ScoreConfig) -> Result<f64> {
    ad_with(dag, data, config, AdVariant::Likelihood)
}

/// R²-based AD; parentless nodes contribute 0.
pub fn ad_r2(dag: &Dag, data: &Dataset, config: &ScoreConfig) -> Result<f64> {
    ad_with(dag, data, config, AdVariant::R2)
}

/// Normalized-Wasserstein AD; each node term lies in `[0, 1]`.
pub fn ad_nwd(dag: &Dag, data: &Dataset, config: &ScoreConfig) -> Result<f64> {
    ad_with(dag, data, config, AdVariant::Nwd)
}

/// Scores `dag` on `data` under `config`.
pub fn score(dag: &Dag, data: &Dataset, config: &ScoreConfig) -> Result<ScoreValue> {
    Scorer::new(data, config.clone())?.score(dag)
}
