use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mechanism::MechanismRanges;
use super::{GraphModel, MechanismClass, MechanismSpec, NoiseFamily, NoiseSpec, ScmSpec};
use crate::dataset::{save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::{random_er, random_sf, save_graph_csv, Dag};

/// Parameter distributions for synthetic SCMs. Every field ends up in an
/// instance's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Linear weights are drawn uniformly from `±[lo, hi]`.
    pub linear_weight_range: (f64, f64),
    pub rff_features: usize,
    pub rff_length_scale: f64,
    pub chebyshev_degree: usize,
    pub chebyshev_coef_range: (f64, f64),
    /// Per-node noise standard deviations are uniform in this range.
    pub noise_scale_range: (f64, f64),
    /// Expected ER edge count; `None` means `d`.
    pub er_expected_edges: Option<f64>,
    pub sf_attach: usize,
    /// Standardize every column after sampling.
    pub standardize: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            linear_weight_range: (0.5, 2.0),
            rff_features: 100,
            rff_length_scale: 1.0,
            chebyshev_degree: 3,
            chebyshev_coef_range: (0.5, 1.0),
            noise_scale_range: (0.4, 0.8),
            er_expected_edges: None,
            sf_attach: 1,
            standardize: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: (f64, f64)| r.0 >= 0.0 && r.1 >= r.0 && r.1.is_finite();
        if !range_ok(self.linear_weight_range) || !range_ok(self.chebyshev_coef_range) {
            return Err(Error::Config("parameter ranges must satisfy 0 <= lo <= hi".into()));
        }
        if !(self.noise_scale_range.0 > 0.0 && range_ok(self.noise_scale_range)) {
            return Err(Error::Config("noise scales must be positive".into()));
        }
        if self.rff_features == 0 || self.rff_length_scale <= 0.0 || self.chebyshev_degree == 0 {
            return Err(Error::Config("RFF/Chebyshev sizes must be positive".into()));
        }
        if self.sf_attach == 0 {
            return Err(Error::Config("sf_attach must be at least 1".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> MechanismRanges {
        MechanismRanges {
            linear_weight: self.linear_weight_range,
            rff_features: self.rff_features,
            rff_length_scale: self.rff_length_scale,
            chebyshev_degree: self.chebyshev_degree,
            chebyshev_coef: self.chebyshev_coef_range,
        }
    }
}

/// A graph with per-node mechanisms and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmInstance {
    pub dag: Dag,
    pub mechanisms: MechanismSpec,
    pub noise: NoiseSpec,
}

impl ScmInstance {
    pub fn new(dag: Dag, mechanisms: MechanismSpec, noise: NoiseSpec) -> Result<Self> {
        mechanisms.validate(&dag)?;
        if noise.scales.len() != dag.d() {
            return Err(Error::Structural(format!(
                "{} noise scales for a {}-node graph",
                noise.scales.len(),
                dag.d()
            )));
        }
        Ok(ScmInstance { dag, mechanisms, noise })
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    /// Relabels nodes: node `v` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let mut scales = vec![0.0; self.d()];
        for (v, &p) in perm.iter().enumerate() {
            scales[p] = self.noise.scales[v];
        }
        ScmInstance::new(
            self.dag.permute(perm)?,
            self.mechanisms.permute(perm),
            NoiseSpec::new(self.noise.family, scales)?,
        )
    }
}

/// Draws a graph, mechanism parameters and noise scales for `spec`.
pub fn sample_scm<R: Rng + ?Sized>(
    spec: ScmSpec,
    d: usize,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<ScmInstance> {
    if d < 2 {
        return Err(Error::Config(format!("SCMs need at least 2 nodes, got {d}")));
    }
    config.validate()?;
    let dag = match spec.graph {
        GraphModel::Er => random_er(d, config.er_expected_edges.unwrap_or(d as f64), rng),
        GraphModel::Sf => random_sf(d, config.sf_attach.min(d - 1), rng),
    };
    let mechanisms = MechanismSpec::sample(spec.mechanism, &dag, &config.ranges(), rng);
    let (lo, hi) = config.noise_scale_range;
    let scales = (0..d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    ScmInstance::new(dag, mechanisms, NoiseSpec::new(spec.noise, scales)?)
}

/// Ancestral sampling with pre-drawn additive noise (`noise` is `n x d`).
pub fn forward_sample_with_noise(scm: &ScmInstance, noise: &DMatrix<f64>) -> Result<Dataset> {
    let d = scm.d();
    if noise.ncols() != d {
        return Err(Error::Structural(format!("noise has {} columns, SCM has {d}", noise.ncols())));
    }
    let n = noise.nrows();
    let order = scm.dag.topological_order();
    let mut values = DMatrix::zeros(n, d);
    let mut parent_buf = Vec::new();
    for r in 0..n {
        for &j in &order {
            let mech = &scm.mechanisms.nodes[j];
            parent_buf.clear();
            parent_buf.extend(mech.parents.iter().map(|&p| values[(r, p)]));
            values[(r, j)] = mech.eval(&parent_buf) + noise[(r, j)];
        }
    }
    Dataset::new(values).map_err(|e| Error::Numerical(format!("forward sampling produced {e}")))
}

/// Draws `n` rows from the SCM. Noise is drawn node by node (node index
/// order), `n` values per node.
pub fn forward_sample<R: Rng + ?Sized>(scm: &ScmInstance, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Structural("sample count must be at least 1".into()));
    }
    let d = scm.d();
    let mut noise = DMatrix::zeros(n, d);
    for j in 0..d {
        for r in 0..n {
            noise[(r, j)] = scm.noise.draw(j, rng);
        }
    }
    forward_sample_with_noise(scm, &noise)
}

/// Contents of an instance bundle's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub spec: String,
    pub mechanism: MechanismClass,
    pub noise: NoiseFamily,
    pub graph: GraphModel,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub generator: GeneratorConfig,
}

/// Writes `data.csv`, `graph.csv` and `meta.json` into `dir`.
pub fn save_instance(dir: &Path, data: &Dataset, dag: &Dag, meta: &InstanceMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_dataset(data, &dir.join("data.csv"))?;
    save_graph_csv(dag, &dir.join("graph.csv"))?;
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&meta_path, e))
}
