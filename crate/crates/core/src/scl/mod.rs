//! The supervised stage: instance-aligned training data generated from
//! candidate graphs, the edge predictor trained on it, and the score-based
//! nearest-neighbour predictor.

mod features;
mod predictor;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::{save_graph_csv, Dag};
use crate::rng::rng_from_seed;
use crate::scoring::{ScoreConfig, Scorer};
use crate::sim::{fit_sim, sample_from_fitted, FittedScm, NoiseMode, RegressorConfig};

pub use features::{featurize_pair, PairFeaturizer, ASYMMETRY_I_TO_J, ASYMMETRY_J_TO_I, FEATURE_LEN, FEATURE_NAMES};
pub use predictor::{train, train_on_examples, training_examples, EdgePredictor, LayerShape, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub data: Dataset,
    pub dag: Dag,
    /// Index of the source graph in the list the set was generated from.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub instances: Vec<TrainingInstance>,
    pub noise_mode: Option<NoiseMode>,
    /// Source graphs dropped because they exceed the in-degree cap.
    pub skipped: Vec<usize>,
}

impl TrainingSet {
    /// Builds a set from explicit pairs, all sharing `d`.
    pub fn from_pairs(pairs: Vec<(Dataset, Dag)>) -> Result<Self> {
        let Some(d) = pairs.first().map(|(x, _)| x.d()) else {
            return Err(Error::Input("a training set needs at least one instance".into()));
        };
        let mut instances = Vec::with_capacity(pairs.len());
        for (k, (data, dag)) in pairs.into_iter().enumerate() {
            if data.d() != d || dag.d() != d {
                return Err(Error::Structural(format!("training instance {k} does not have d = {d}")));
            }
            instances.push(TrainingInstance { data, dag, source_index: k });
        }
        Ok(TrainingSet { instances, noise_mode: None, skipped: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn d(&self) -> usize {
        self.instances[0].dag.d()
    }

    /// Writes `data_0000.csv` and `graph_0000.csv` pairs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(2 * self.len());
        for (k, inst) in self.instances.iter().enumerate() {
            let data_path = dir.join(format!("data_{k:04}.csv"));
            let graph_path = dir.join(format!("graph_{k:04}.csv"));
            save_dataset(&inst.data, &data_path)?;
            save_graph_csv(&inst.dag, &graph_path)?;
            written.push(data_path);
            written.push(graph_path);
        }
        Ok(written)
    }
}

/// For each graph, fits its mechanisms on `data` and forward-samples a
/// dataset of the same shape. Graphs over the in-degree cap are skipped.
pub fn generate_training_set<R: Rng + ?Sized>(
    graphs: &[Dag],
    data: &Dataset,
    regressor: &RegressorConfig,
    noise_mode: NoiseMode,
    rng: &mut R,
) -> Result<TrainingSet> {
    if graphs.is_empty() {
        return Err(Error::Input("no graphs to build a training set from".into()));
    }
    if let Some(k) = graphs.iter().position(|g| g.d() != data.d()) {
        return Err(Error::Structural(format!("graph {k} has {} nodes, data has {}", graphs[k].d(), data.d())));
    }
    let seeds: Vec<u64> = graphs.iter().map(|_| rng.random()).collect();
    let mut unique: Vec<&Dag> = Vec::new();
    let mut slot: HashMap<&Dag, usize> = HashMap::new();
    for g in graphs {
        slot.entry(g).or_insert_with(|| {
            unique.push(g);
            unique.len() - 1
        });
    }
    let fits: Vec<Result<FittedScm>> = unique.par_iter().map(|g| fit_sim(g, data, regressor)).collect();
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for (k, g) in graphs.iter().enumerate() {
        match &fits[slot[g]] {
            Ok(fit) => jobs.push((k, fit, seeds[k])),
            Err(Error::DegreeCap { node, in_degree, cap }) => {
                log::warn!("skipping graph {k}: node {node} has in-degree {in_degree} above the cap {cap}");
                skipped.push(k);
            }
            Err(e) => return Err(Error::Numerical(format!("fitting graph {k}: {e}"))),
        }
    }
    if jobs.is_empty() {
        return Err(Error::Input("every graph exceeds the in-degree cap".into()));
    }
    let instances = jobs
        .into_par_iter()
        .map(|(k, fit, seed)| {
            let sampled = sample_from_fitted(fit, data.n(), noise_mode, &mut rng_from_seed(seed))?;
            Ok(TrainingInstance { data: sampled, dag: graphs[k].clone(), source_index: k })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { instances, noise_mode: Some(noise_mode), skipped })
}

/// The training graph scoring highest on `data`, the lowest index among ties.
pub fn knn_score_predict(set: &TrainingSet, data: &Dataset, score_config: &ScoreConfig) -> Result<Dag> {
    let scorer = Scorer::new(data, score_config.clone())?;
    knn_score_select(set, &scorer).map(|(k, _)| set.instances[k].dag.clone())
}

/// Index and total score of the best training graph under `scorer`.
pub fn knn_score_select(set: &TrainingSet, scorer: &Scorer<'_>) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let totals: Vec<f64> = set
        .instances
        .par_iter()
        .map(|inst| scorer.score(&inst.dag).map(|v| v.total))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, &t) in totals.iter().enumerate() {
        if t > totals[best] {
            best = k;
        }
    }
    Ok((best, totals[best]))
}
