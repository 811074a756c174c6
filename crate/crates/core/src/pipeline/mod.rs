//! End-to-end runs: seed, refine, synthesize a training set, train, predict,
//! and evaluate, persisting every artifact into a run directory.

mod bench;
mod files;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::{load_graph, save_graph_csv, Dag};
use crate::metrics::{evaluate, MetricReport};
use crate::refine::{best_scoring, init_seed_with, refine_with, RefineConfig};
use crate::rng::{child_seed, rng_from_seed};
use crate::scl::{generate_training_set, knn_score_select, train, TrainConfig, TrainingSet};
use crate::scoring::{ScoreRecord, Scorer};
use crate::sim::{Basis, NoiseMode, RegressorConfig};
use crate::synth::{BenchInstance, GeneratorConfig, MechanismClass, ScmSpec};

pub use bench::{run_ablation_sparsity, run_benchmark, AblationRow, BenchmarkConfig, BenchmarkResult, InstanceRow};
pub use files::{load_graph_dir, load_score_matrix, load_training_set, save_score_matrix};

/// Where the test dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A CSV file, optionally with a ground-truth graph for evaluation.
    File { path: PathBuf, truth: Option<PathBuf> },
    /// A synthetic instance drawn from the master seed.
    Generate {
        spec: String,
        d: usize,
        n: usize,
        #[serde(default)]
        generator: GeneratorConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stages {
    /// Seed, refine, training-set synthesis, training and prediction.
    Full,
    /// Stops after refinement; the highest-scoring graph is the output.
    RefineOnly,
    /// Predicts the collected graph scoring highest on the test data.
    KnnOnly,
}

impl std::str::FromStr for Stages {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Stages::Full),
            "refine-only" | "refine_only" => Ok(Stages::RefineOnly),
            "knn-only" | "knn_only" => Ok(Stages::KnnOnly),
            other => Err(Error::Config(format!("unknown stage selection {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub refine: RefineConfig,
    /// Mechanism regressor for training-set synthesis; `None` reuses the
    /// score's regressor.
    pub regressor: Option<RegressorConfig>,
    pub noise_mode: NoiseMode,
    pub train: TrainConfig,
    pub threshold: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub stages: Stages,
    /// Write the synthesized training datasets under `trainset/`.
    pub save_trainset: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: DataSource::Generate {
                spec: "Linear_U_ER".into(),
                d: 10,
                n: 200,
                generator: GeneratorConfig::default(),
            },
            refine: RefineConfig::default(),
            regressor: None,
            noise_mode: NoiseMode::Empirical,
            train: TrainConfig::default(),
            threshold: 0.5,
            out_dir: PathBuf::from("run"),
            seed: 0,
            stages: Stages::Full,
            save_trainset: true,
        }
    }
}

/// Regressor matching a mechanism hypothesis: a linear basis for linear
/// mechanisms and the default Fourier basis otherwise.
pub fn regressor_for(mechanism: MechanismClass) -> RegressorConfig {
    match mechanism {
        MechanismClass::Linear => RegressorConfig::linear(),
        _ => RegressorConfig { basis: Basis::Fourier, ..RegressorConfig::default() },
    }
}

impl PipelineConfig {
    /// Defaults for a synthetic instance, with the regressor basis matched
    /// to the spec's mechanism class.
    pub fn for_spec(spec: ScmSpec, d: usize, n: usize) -> Self {
        let mut cfg = PipelineConfig {
            data: DataSource::Generate { spec: spec.to_string(), d, n, generator: GeneratorConfig::default() },
            ..Default::default()
        };
        cfg.refine.score_config.regressor = regressor_for(spec.mechanism);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        if let Some(r) = &self.regressor {
            r.validate()?;
        }
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if let DataSource::Generate { spec, d, n, generator } = &self.data {
            spec.parse::<ScmSpec>()?;
            generator.validate()?;
            if *d < 2 || *n == 0 {
                return Err(Error::Config("generated data needs d >= 2 and n >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn sim_regressor(&self) -> &RegressorConfig {
        self.regressor.as_ref().unwrap_or(&self.refine.score_config.regressor)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Seconds spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub data: f64,
    pub seed_init: f64,
    pub refine: f64,
    pub sim_generation: f64,
    pub training: f64,
    pub prediction: f64,
    pub evaluation: f64,
    pub total: f64,
}

/// Metrics of the three pipeline outputs against the true graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub seed: Option<MetricReport>,
    pub best_scoring: Option<MetricReport>,
    pub prediction: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, message: String },
}

/// Summary of a run. File fields hold paths relative to `run_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_dir: PathBuf,
    pub status: RunStatus,
    pub config_file: String,
    pub seed_graph: Option<String>,
    pub trace: Option<String>,
    pub collected: Vec<String>,
    pub best_graph: Option<String>,
    pub trainset: Vec<String>,
    pub predictor: Option<String>,
    pub prediction: Option<String>,
    pub prediction_binary: Option<String>,
    pub metrics_file: Option<String>,
    pub timings_file: String,
    pub seed_score: Option<ScoreRecord>,
    pub best_score: Option<ScoreRecord>,
    pub mean_collected_edges: Option<f64>,
    pub metrics: StageMetrics,
    #[serde(skip)]
    pub timings: Timings,
    #[serde(skip)]
    pub prediction_matrix: Option<Vec<Vec<f64>>>,
}

impl RunRecord {
    fn new(run_dir: &Path) -> Self {
        RunRecord {
            run_dir: run_dir.to_path_buf(),
            status: RunStatus::Complete,
            config_file: "config.json".into(),
            seed_graph: None,
            trace: None,
            collected: Vec::new(),
            best_graph: None,
            trainset: Vec::new(),
            predictor: None,
            prediction: None,
            prediction_binary: None,
            metrics_file: None,
            timings_file: "timings.json".into(),
            seed_score: None,
            best_score: None,
            mean_collected_edges: None,
            metrics: StageMetrics::default(),
            timings: Timings::default(),
            prediction_matrix: None,
        }
    }

    fn persist(&self) -> Result<()> {
        write_json(&self.run_dir.join("run.json"), self)?;
        write_json(&self.run_dir.join(&self.timings_file), &self.timings)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned()
}

fn stage_err(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage, source: Box::new(e) },
    }
}

/// Resolves the configured data source. Generated data uses a stream split
/// from the master seed.
pub fn load_source(config: &PipelineConfig) -> Result<(Dataset, Option<Dag>)> {
    match &config.data {
        DataSource::File { path, truth } => {
            let data = load_dataset(path)?;
            let truth = truth.as_deref().map(load_graph).transpose()?;
            if let Some(t) = &truth {
                if t.d() != data.d() {
                    return Err(Error::Input(format!("truth graph has {} nodes, data has {}", t.d(), data.d())));
                }
            }
            Ok((data, truth))
        }
        DataSource::Generate { spec, d, n, generator } => {
            let inst = BenchInstance::generate(spec.parse()?, *d, *n, generator, child_seed(config.seed, 0))?;
            Ok((inst.data, Some(inst.scm.dag)))
        }
    }
}

/// Runs the configured stages and writes the run directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let (data, truth) = load_source(config)?;
    let data_secs = start.elapsed().as_secs_f64();
    let mut record = run_pipeline_on(&data, truth.as_ref(), config)?;
    record.timings.data = data_secs;
    record.timings.total += data_secs;
    record.persist()?;
    Ok(record)
}

/// Runs the pipeline on an in-memory dataset. On a stage failure the
/// partial record is persisted and the stage error returned.
pub fn run_pipeline_on(data: &Dataset, truth: Option<&Dag>, config: &PipelineConfig) -> Result<RunRecord> {
    config.validate()?;
    if let Some(t) = truth {
        if t.d() != data.d() {
            return Err(Error::Input(format!("truth graph has {} nodes, data has {}", t.d(), data.d())));
        }
    }
    let dir = config.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("config.json"), config)?;
    if let DataSource::Generate { .. } = config.data {
        save_dataset(data, &dir.join("data.csv"))?;
        if let Some(t) = truth {
            save_graph_csv(t, &dir.join("truth_graph.csv"))?;
        }
    }
    let mut record = RunRecord::new(&dir);
    let start = Instant::now();
    let result = run_stages(data, truth, config, &mut record);
    record.timings.total = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        let stage = match e {
            Error::Stage { stage, .. } => stage.to_string(),
            _ => "setup".to_string(),
        };
        record.status = RunStatus::Failed { stage, message: e.to_string() };
    }
    record.persist()?;
    result.map(|()| record)
}

fn run_stages(data: &Dataset, truth: Option<&Dag>, config: &PipelineConfig, record: &mut RunRecord) -> Result<()> {
    let dir = config.out_dir.clone();
    let scorer = Scorer::new(data, config.refine.score_config.clone()).map_err(stage_err("setup"))?;

    let t = Instant::now();
    let seed = init_seed_with(&scorer, data.d(), &config.refine, &mut rng_from_seed(child_seed(config.seed, 1)))
        .map_err(stage_err("seed_init"))?;
    let seed_path = dir.join("seed_graph.csv");
    save_graph_csv(&seed, &seed_path)?;
    record.seed_graph = Some(rel(&dir, &seed_path));
    record.timings.seed_init = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let trace = refine_with(&scorer, &seed, &config.refine, &mut rng_from_seed(child_seed(config.seed, 2)))
        .map_err(stage_err("refine"))?;
    record.timings.refine = t.elapsed().as_secs_f64();
    let trace_path = dir.join("trace.jsonl");
    trace.write_jsonl(&trace_path)?;
    record.trace = Some(rel(&dir, &trace_path));
    let graphs_dir = dir.join("graphs");
    if graphs_dir.exists() {
        std::fs::remove_dir_all(&graphs_dir).map_err(|e| Error::io(&graphs_dir, e))?;
    }
    record.collected = trace.save_collected(&graphs_dir)?.iter().map(|p| rel(&dir, p)).collect();
    let (best, best_value) = best_scoring(&trace).map_err(stage_err("refine"))?;
    let best_path = dir.join("best_graph.csv");
    save_graph_csv(&best, &best_path)?;
    record.best_graph = Some(rel(&dir, &best_path));
    record.seed_score = Some(scorer.record(trace.seed_score));
    record.best_score = Some(scorer.record(best_value));
    record.mean_collected_edges =
        Some(trace.collected.iter().map(|g| g.edge_count() as f64).sum::<f64>() / trace.collected.len() as f64);

    let prediction = match config.stages {
        Stages::RefineOnly => best.to_scores(),
        Stages::KnnOnly => {
            let t = Instant::now();
            let set = TrainingSet::from_pairs(trace.collected.iter().map(|g| (data.clone(), g.clone())).collect())
                .map_err(stage_err("knn"))?;
            let (k, _) = knn_score_select(&set, &scorer).map_err(stage_err("knn"))?;
            record.timings.prediction = t.elapsed().as_secs_f64();
            set.instances[k].dag.to_scores()
        }
        Stages::Full => {
            let t = Instant::now();
            let set = generate_training_set(
                &trace.collected,
                data,
                config.sim_regressor(),
                config.noise_mode,
                &mut rng_from_seed(child_seed(config.seed, 3)),
            )
            .map_err(stage_err("sim_generation"))?;
            record.timings.sim_generation = t.elapsed().as_secs_f64();
            if config.save_trainset {
                let ts_dir = dir.join("trainset");
                if ts_dir.exists() {
                    std::fs::remove_dir_all(&ts_dir).map_err(|e| Error::io(&ts_dir, e))?;
                }
                record.trainset = set.save(&ts_dir)?.iter().map(|p| rel(&dir, p)).collect();
            }

            let t = Instant::now();
            let train_cfg = TrainConfig {
                seed: child_seed(child_seed(config.seed, 4), config.train.seed),
                ..config.train.clone()
            };
            let predictor = train(&set, &train_cfg).map_err(stage_err("training"))?;
            record.timings.training = t.elapsed().as_secs_f64();
            let predictor_path = dir.join("predictor.json");
            predictor.save(&predictor_path)?;
            record.predictor = Some(rel(&dir, &predictor_path));

            let t = Instant::now();
            let m = predictor.predict(data).map_err(stage_err("prediction"))?;
            record.timings.prediction = t.elapsed().as_secs_f64();
            m
        }
    };
    let pred_path = dir.join("prediction.csv");
    save_score_matrix(&prediction, &pred_path)?;
    let binary: Vec<Vec<u8>> = prediction
        .iter()
        .map(|r| r.iter().map(|&v| u8::from(v >= config.threshold)).collect())
        .collect();
    let bin_path = dir.join("prediction_binary.csv");
    crate::table::write_csv(&bin_path, None, &binary)?;
    record.prediction = Some(rel(&dir, &pred_path));
    record.prediction_binary = Some(rel(&dir, &bin_path));

    if let Some(truth) = truth {
        let t = Instant::now();
        let eval = |scores: &[Vec<f64>], what: &str| match evaluate(scores, truth, config.threshold) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("{what} not evaluated: {e}");
                None
            }
        };
        record.metrics = StageMetrics {
            seed: eval(&seed.to_scores(), "seed graph"),
            best_scoring: eval(&best.to_scores(), "highest-scoring graph"),
            prediction: eval(&prediction, "prediction"),
        };
        let metrics_path = dir.join("metrics.json");
        write_json(&metrics_path, &record.metrics)?;
        record.metrics_file = Some(rel(&dir, &metrics_path));
        record.timings.evaluation = t.elapsed().as_secs_f64();
    }
    record.prediction_matrix = Some(prediction);
    Ok(())
}
