use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use causal_ttt::graph::{load_graph, save_graph_csv, Dag};
use causal_ttt::metrics::evaluate;
use causal_ttt::pipeline::{
    load_graph_dir, load_score_matrix, load_training_set, run_ablation_sparsity, run_benchmark, run_pipeline,
    save_score_matrix, BenchmarkConfig, PipelineConfig, Stages,
};
use causal_ttt::refine::{best_scoring, init_seed, refine, RefineConfig, SeedMode};
use causal_ttt::rng::{child_seed, rng_from_seed};
use causal_ttt::scl::{generate_training_set, train, EdgePredictor, TrainConfig};
use causal_ttt::sim::{NoiseMode, RegressorConfig};
use causal_ttt::synth::{save_instance, BenchInstance, GeneratorConfig, InstanceMeta, ScmSpec};
use causal_ttt::{load_dataset, Error, Result};

#[derive(Parser)]
#[command(name = "causal-ttt", version, about = "Causal structure learning by test-time training")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic instance into data.csv, graph.csv and meta.json.
    Generate {
        /// Mechanism, noise and graph triple such as RFF_G_ER.
        #[arg(long)]
        spec: ScmSpec,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Generator settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed and refine a graph on a dataset.
    Refine {
        #[arg(long)]
        data: PathBuf,
        /// Refinement settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from this graph instead of the configured seed mode.
        #[arg(long)]
        seed_graph: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit mechanisms for collected graphs and resample a training set.
    MakeTrainset {
        #[arg(long)]
        data: PathBuf,
        /// Directory of graph_*.csv files.
        #[arg(long)]
        graphs: PathBuf,
        /// Regressor settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "empirical")]
        noise_mode: NoiseArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the edge predictor on a training-set directory.
    Train {
        #[arg(long)]
        trainset: PathBuf,
        /// Training settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict edge probabilities for a dataset.
    Predict {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction matrix against a true graph.
    Eval {
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage and write a run directory.
    Pipeline {
        /// Pipeline settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// full, refine-only or knn-only.
        #[arg(long)]
        stages: Option<Stages>,
    },
    /// Run the pipeline over generated test instances and tabulate metrics.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stages: Option<Stages>,
    },
    /// Compare runs with and without the edge penalty.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum NoiseArg {
    Parametric,
    Empirical,
}

impl From<NoiseArg> for NoiseMode {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Parametric => NoiseMode::Parametric,
            NoiseArg::Empirical => NoiseMode::Empirical,
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, d, n, config, seed, out } => {
            let generator: GeneratorConfig = read_config(config.as_deref())?;
            let inst = BenchInstance::generate(spec, d, n, &generator, seed)?;
            let meta = InstanceMeta {
                spec: spec.to_string(),
                mechanism: spec.mechanism,
                noise: spec.noise,
                graph: spec.graph,
                seed,
                n,
                d,
                generator,
            };
            save_instance(&out, &inst.data, &inst.scm.dag, &meta)?;
            println!("wrote {}", out.display());
        }
        Command::Refine { data, config, seed_graph, seed, out } => {
            let mut cfg: RefineConfig = read_config(config.as_deref())?;
            if let Some(p) = seed_graph {
                cfg.seed_mode = SeedMode::FromFile(p);
            }
            let data = load_dataset(&data)?;
            create_dir(&out)?;
            let start = init_seed(&data, &cfg, &mut rng_from_seed(child_seed(seed, 1)))?;
            save_graph_csv(&start, &out.join("seed_graph.csv"))?;
            let trace = refine(&data, &start, &cfg, &mut rng_from_seed(child_seed(seed, 2)))?;
            trace.write_jsonl(&out.join("trace.jsonl"))?;
            trace.save_collected(&out.join("graphs"))?;
            let (best, value) = best_scoring(&trace)?;
            save_graph_csv(&best, &out.join("best_graph.csv"))?;
            println!("{}", serde_json::json!({
                "seed_total": trace.seed_score.total,
                "best_total": value.total,
                "best_edges": value.sparsity,
                "accepted": trace.accepted_count(),
                "collected": trace.collected.len(),
            }));
        }
        Command::MakeTrainset { data, graphs, config, noise_mode, seed, out } => {
            let regressor: RegressorConfig = read_config(config.as_deref())?;
            let data = load_dataset(&data)?;
            let graphs: Vec<Dag> = load_graph_dir(&graphs)?;
            let set = generate_training_set(&graphs, &data, &regressor, noise_mode.into(), &mut rng_from_seed(seed))?;
            set.save(&out)?;
            println!("wrote {} instances ({} skipped) to {}", set.len(), set.skipped.len(), out.display());
        }
        Command::Train { trainset, config, seed, out } => {
            let mut cfg: TrainConfig = read_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let set = load_training_set(&trainset)?;
            let predictor = train(&set, &cfg)?;
            create_dir(&out)?;
            predictor.save(&out.join("predictor.json"))?;
            println!("final training loss {:.6}", predictor.loss_history.last().copied().unwrap_or(f64::NAN));
        }
        Command::Predict { predictor, data, threshold, out } => {
            let predictor = EdgePredictor::load(&predictor)?;
            let m = predictor.predict(&load_dataset(&data)?)?;
            create_dir(&out)?;
            save_score_matrix(&m, &out.join("prediction.csv"))?;
            let binary: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|&v| f64::from(u8::from(v >= threshold))).collect()).collect();
            save_score_matrix(&binary, &out.join("prediction_binary.csv"))?;
        }
        Command::Eval { prediction, truth, threshold, out } => {
            let report = evaluate(&load_score_matrix(&prediction)?, &load_graph(&truth)?, threshold)?;
            if let Some(out) = out {
                create_dir(&out)?;
                write_json(&out.join("metrics.json"), &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Pipeline { config, seed, out, stages } => {
            let mut cfg: PipelineConfig = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = stages {
                cfg.stages = s;
            }
            let record = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "run_dir": record.run_dir,
                "metrics": record.metrics,
                "timings": record.timings,
            }))?);
        }
        Command::Benchmark { config, seed, out, stages } => {
            let mut cfg: BenchmarkConfig = read_config(config.as_deref())?;
            override_bench(&mut cfg, seed, out);
            if let Some(s) = stages {
                cfg.pipeline.stages = s;
            }
            let result = run_benchmark(&cfg)?;
            for row in &result.summary {
                println!("{},{},{},{:.4},{:.4}", row.setting, row.method, row.metric, row.mean, row.std);
            }
            if !result.failures.is_empty() {
                eprintln!("{} instance(s) failed", result.failures.len());
            }
        }
        Command::Ablate { config, seed, out } => {
            let mut cfg: BenchmarkConfig = read_config(config.as_deref())?;
            override_bench(&mut cfg, seed, out);
            let rows = run_ablation_sparsity(&cfg)?;
            for r in &rows {
                println!(
                    "{},{},{:.4},{},{:.4},{}",
                    r.instance,
                    r.variant,
                    r.ad,
                    r.sparsity,
                    r.total,
                    r.auroc.map_or("nan".into(), |a| format!("{a:.4}"))
                );
            }
        }
    }
    Ok(())
}

fn override_bench(cfg: &mut BenchmarkConfig, seed: Option<u64>, out: Option<PathBuf>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
