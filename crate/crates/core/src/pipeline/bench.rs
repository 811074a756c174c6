use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_pipeline_on, DataSource, PipelineConfig, RunRecord};
use crate::dataset::save_dataset;
use crate::error::{Error, Result};
use crate::graph::save_graph_csv;
use crate::metrics::{MeanStd, MetricReport};
use crate::rng::child_seed;
use crate::synth::{make_shift_suite, BenchInstance, GeneratorConfig, ShiftSetting, ShiftSuite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub setting: ShiftSetting,
    pub test_spec: String,
    pub d: usize,
    pub n: usize,
    pub instances: usize,
    pub generator: GeneratorConfig,
    /// Template for every run; its data source, output directory and seed
    /// are replaced per instance.
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            setting: ShiftSetting::Iid,
            test_spec: "Linear_U_ER".into(),
            d: 10,
            n: 200,
            instances: 10,
            generator: GeneratorConfig::default(),
            pipeline: PipelineConfig { save_trainset: false, ..Default::default() },
            seed: 0,
            out_dir: PathBuf::from("bench"),
        }
    }
}

/// One metric of one stage output on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance: usize,
    pub seed: u64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub rows: Vec<InstanceRow>,
    pub summary: Vec<SummaryRow>,
    /// Instance index and error message of every failed run.
    pub failures: Vec<(usize, String)>,
    /// Records of successful runs, by instance.
    pub records: Vec<(usize, RunRecord)>,
}

impl BenchmarkResult {
    /// Mean of `metric` for `method` over successful instances.
    pub fn mean(&self, method: &str, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.method == method && r.metric == metric).map(|r| r.mean)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn test_instances(config: &BenchmarkConfig) -> Result<Vec<BenchInstance>> {
    let suite = ShiftSuite::new(config.setting, config.test_spec.parse()?)?;
    Ok(make_shift_suite(&suite, config.d, config.n, config.instances, &config.generator, config.seed)?.1)
}

/// Writes the instance data into `dir` and returns a pipeline config that
/// reads it back, so each run directory is self-describing.
fn instance_config(template: &PipelineConfig, inst: &BenchInstance, dir: &Path, seed: u64) -> Result<PipelineConfig> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join("data.csv");
    let truth_path = dir.join("truth_graph.csv");
    save_dataset(&inst.data, &data_path)?;
    save_graph_csv(&inst.scm.dag, &truth_path)?;
    Ok(PipelineConfig {
        data: DataSource::File { path: data_path, truth: Some(truth_path) },
        out_dir: dir.to_path_buf(),
        seed,
        ..template.clone()
    })
}

const METRICS: [&str; 4] = ["auroc", "auprc", "f1", "acc"];

fn metric_value(r: &MetricReport, metric: &str) -> f64 {
    match metric {
        "auroc" => r.auroc,
        "auprc" => r.auprc,
        "f1" => r.f1,
        _ => r.acc,
    }
}

/// Runs the pipeline on `instances` test instances of a shift suite and
/// writes `instances.csv`, `summary.csv` and `failures.csv`.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let instances = test_instances(config)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let outcomes: Vec<(usize, u64, Result<RunRecord>)> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let dir = config.out_dir.join(format!("instance_{k:03}"));
            let run = instance_config(&config.pipeline, inst, &dir, child_seed(config.seed, 1000 + k as u64))
                .and_then(|cfg| run_pipeline_on(&inst.data, Some(&inst.scm.dag), &cfg));
            (k, inst.seed, run)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (k, seed, run) in outcomes {
        match run {
            Ok(rec) => {
                let stages = [
                    ("seed", rec.metrics.seed),
                    ("best_scoring", rec.metrics.best_scoring),
                    ("prediction", rec.metrics.prediction),
                ];
                for (method, report) in stages {
                    if let Some(r) = report {
                        for metric in METRICS {
                            rows.push(InstanceRow {
                                instance: k,
                                seed,
                                method: method.into(),
                                metric: metric.into(),
                                value: metric_value(&r, metric),
                            });
                        }
                    }
                }
                records.push((k, rec));
            }
            Err(e) => {
                log::warn!("instance {k} failed: {e}");
                failures.push((k, e.to_string()));
            }
        }
    }

    let setting = format!("{}:{}", serde_json::to_value(config.setting)?.as_str().unwrap_or("?"), config.test_spec);
    let mut summary = Vec::new();
    for method in ["seed", "best_scoring", "prediction"] {
        for metric in METRICS {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.metric == metric)
                .map(|r| r.value)
                .collect();
            if let Ok(ms) = MeanStd::of(&values) {
                summary.push(SummaryRow {
                    setting: setting.clone(),
                    method: method.into(),
                    metric: metric.into(),
                    mean: ms.mean,
                    std: ms.std,
                });
            }
        }
    }
    write_rows(&config.out_dir.join("instances.csv"), &rows)?;
    write_rows(&config.out_dir.join("summary.csv"), &summary)?;
    #[derive(Serialize)]
    struct Failure<'a> {
        instance: usize,
        error: &'a str,
    }
    let failure_rows: Vec<Failure> = failures.iter().map(|(k, e)| Failure { instance: *k, error: e }).collect();
    write_rows(&config.out_dir.join("failures.csv"), &failure_rows)?;
    Ok(BenchmarkResult { rows, summary, failures, records })
}

/// Diagnostics of one run in the sparsity ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub instance: usize,
    pub seed: u64,
    pub variant: String,
    pub lambda: f64,
    /// Parts of the highest-scoring graph's score.
    pub ad: f64,
    pub sparsity: usize,
    pub total: f64,
    /// AUROC of the final prediction.
    pub auroc: Option<f64>,
    pub best_auroc: Option<f64>,
    pub mean_collected_edges: f64,
}

/// Runs every instance with the configured edge penalty and with none,
/// sharing the instance seed, and writes `ablation.csv`.
pub fn run_ablation_sparsity(config: &BenchmarkConfig) -> Result<Vec<AblationRow>> {
    let instances = test_instances(config)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut unpenalized = config.pipeline.clone();
    unpenalized.refine.score_config.sparsity_weight = Some(0.0);
    let variants = [("penalized", &config.pipeline), ("unpenalized", &unpenalized)];
    let jobs: Vec<(usize, usize)> = (0..instances.len()).flat_map(|k| [(k, 0), (k, 1)]).collect();
    let rows: Vec<Result<AblationRow>> = jobs
        .par_iter()
        .map(|&(k, v)| {
            let (name, template) = variants[v];
            let inst = &instances[k];
            let dir = config.out_dir.join(format!("instance_{k:03}_{name}"));
            let cfg = instance_config(template, inst, &dir, child_seed(config.seed, 1000 + k as u64))?;
            let rec = run_pipeline_on(&inst.data, Some(&inst.scm.dag), &cfg)?;
            let best = rec.best_score.expect("refinement ran");
            Ok(AblationRow {
                instance: k,
                seed: inst.seed,
                variant: name.into(),
                lambda: best.lambda,
                ad: best.ad,
                sparsity: best.sparsity,
                total: best.total,
                auroc: rec.metrics.prediction.map(|r| r.auroc),
                best_auroc: rec.metrics.best_scoring.map(|r| r.auroc),
                mean_collected_edges: rec.mean_collected_edges.unwrap_or(0.0),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_rows(&config.out_dir.join("ablation.csv"), &rows)?;
    Ok(rows)
}
