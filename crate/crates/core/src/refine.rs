//! Seed initialization and stochastic single-edge refinement of a graph
//! under the joint score.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{apply_move, feasible_moves, load_graph, random_er, save_graph_csv, Dag, EdgeMove, MoveKind};
use crate::scoring::{ScoreConfig, ScoreValue, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Acceptance {
    /// `alpha = min(1, exp((s_cand - s_curr) / T))`. Without an explicit
    /// temperature, `T = max(0.01 |s_seed|, 1e-6)`.
    Metropolis { temperature: Option<f64> },
    /// `alpha = min(1, s_cand / s_curr)` clamped to `[0, 1]`.
    LiteralRatio,
}

impl Default for Acceptance {
    fn default() -> Self {
        Acceptance::Metropolis { temperature: None }
    }
}

impl Acceptance {
    /// Metropolis acceptance at a temperature small enough that only
    /// non-worsening candidates pass.
    pub fn greedy() -> Self {
        Acceptance::Metropolis { temperature: Some(f64::MIN_POSITIVE) }
    }

    fn temperature(&self, seed_total: f64) -> f64 {
        match *self {
            Acceptance::Metropolis { temperature: Some(t) } => t,
            _ => (0.01 * seed_total.abs()).max(1e-6),
        }
    }
}

/// Acceptance probability of moving from a graph scoring `s_curr` to one
/// scoring `s_cand`.
pub fn acceptance_probability(rule: &Acceptance, temperature: f64, s_curr: f64, s_cand: f64) -> f64 {
    match rule {
        Acceptance::Metropolis { .. } => ((s_cand - s_curr) / temperature).exp().min(1.0),
        Acceptance::LiteralRatio => {
            if s_curr == 0.0 {
                if s_cand >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (s_cand / s_curr).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    RandomDag,
    GreedyHillClimb,
    FromFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub n_steps: usize,
    pub collect_k: usize,
    pub acceptance: Acceptance,
    pub seed_mode: SeedMode,
    pub dedup_collected: bool,
    pub score_config: ScoreConfig,
    /// Round limit for the hill-climbing seed; `None` runs to a local optimum.
    pub max_rounds: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            n_steps: 2000,
            collect_k: 200,
            acceptance: Acceptance::default(),
            seed_mode: SeedMode::GreedyHillClimb,
            dedup_collected: false,
            score_config: ScoreConfig::default(),
            max_rounds: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.collect_k == 0 {
            return Err(Error::Config("n_steps and collect_k must be positive".into()));
        }
        if let Acceptance::Metropolis { temperature: Some(t) } = self.acceptance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("temperature {t} must be finite and > 0")));
            }
        }
        self.score_config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(rename = "move")]
    pub mv: EdgeMove,
    pub s_curr: f64,
    pub s_cand: f64,
    pub ad_cand: f64,
    pub alpha: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub seed: Dag,
    pub seed_score: ScoreValue,
    pub temperature: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub collected: Vec<Dag>,
    pub best: Dag,
    pub best_score: ScoreValue,
}

impl RefineTrace {
    pub fn accepted_count(&self) -> usize {
        self.steps.iter().filter(|s| s.accepted).count()
    }

    /// The graph held at the end of the chain.
    pub fn final_graph(&self) -> Result<Dag> {
        let mut g = self.seed.clone();
        for s in self.steps.iter().filter(|s| s.accepted) {
            g = apply_move(&g, s.mv)?;
        }
        Ok(g)
    }

    /// Writes one JSON object per step.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Saves collected graphs as `graph_0000.csv`, `graph_0001.csv`, ...
    pub fn save_collected(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.collected
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let p = dir.join(format!("graph_{k:04}.csv"));
                save_graph_csv(g, &p)?;
                Ok(p)
            })
            .collect()
    }
}

/// Reads a step trace written by [`RefineTrace::write_jsonl`].
pub fn read_trace_jsonl(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Feasible moves that keep every in-degree within `cap`.
pub fn admissible_moves(dag: &Dag, cap: Option<usize>) -> Vec<EdgeMove> {
    let mut moves = feasible_moves(dag);
    if let Some(cap) = cap {
        moves.retain(|m| match m.kind {
            MoveKind::Add => dag.in_degree(m.target) < cap,
            MoveKind::Reverse => dag.in_degree(m.source) < cap,
            MoveKind::Delete => true,
        });
    }
    moves
}

/// Greedy ascent from the empty graph: each round applies the admissible
/// move with the largest strict improvement of the total score, the first
/// in canonical order among equals.
pub fn greedy_hill_climb(data: &Dataset, score_config: &ScoreConfig, max_rounds: Option<usize>) -> Result<Dag> {
    let scorer = Scorer::new(data, score_config.clone())?;
    hill_climb_with(&scorer, Dag::empty(data.d()), max_rounds)
}

fn hill_climb_with(scorer: &Scorer<'_>, start: Dag, max_rounds: Option<usize>) -> Result<Dag> {
    let cap = scorer.config().regressor.max_in_degree;
    let mut curr = start;
    let mut terms = scorer.node_terms(&curr)?;
    let mut total = scorer.combine(&terms, curr.edge_count()).total;
    let mut rounds = 0;
    while max_rounds.is_none_or(|m| rounds < m) {
        let moves = admissible_moves(&curr, cap);
        let evaluated: Vec<(Dag, Vec<f64>, f64)> = moves
            .par_iter()
            .map(|&mv| {
                let (cand, cand_terms) = candidate(scorer, &curr, &terms, mv)?;
                let t = scorer.combine(&cand_terms, cand.edge_count()).total;
                Ok((cand, cand_terms, t))
            })
            .collect::<Result<_>>()?;
        let mut best: Option<usize> = None;
        for (k, (_, _, t)) in evaluated.iter().enumerate() {
            if *t > total && best.is_none_or(|b| *t > evaluated[b].2) {
                best = Some(k);
            }
        }
        let Some(b) = best else { break };
        let (g, tm, t) = evaluated.into_iter().nth(b).expect("index in range");
        curr = g;
        terms = tm;
        total = t;
        rounds += 1;
    }
    log::debug!("hill climb stopped after {rounds} rounds at total {total}");
    Ok(curr)
}

fn candidate(scorer: &Scorer<'_>, curr: &Dag, terms: &[f64], mv: EdgeMove) -> Result<(Dag, Vec<f64>)> {
    let cand = apply_move(curr, mv)?;
    let cand_terms = scorer.updated_terms(terms, &cand, &mv.changed_nodes())?;
    Ok((cand, cand_terms))
}

/// Produces the starting graph for refinement.
pub fn init_seed<R: Rng + ?Sized>(data: &Dataset, config: &RefineConfig, rng: &mut R) -> Result<Dag> {
    let scorer = Scorer::new(data, config.score_config.clone())?;
    init_seed_with(&scorer, data.d(), config, rng)
}

/// Like [`init_seed`], reusing an existing scorer for the hill-climbing seed.
pub fn init_seed_with<R: Rng + ?Sized>(scorer: &Scorer<'_>, d: usize, config: &RefineConfig, rng: &mut R) -> Result<Dag> {
    match &config.seed_mode {
        SeedMode::RandomDag => Ok(random_er(d, d as f64, rng)),
        SeedMode::GreedyHillClimb => hill_climb_with(scorer, Dag::empty(d), config.max_rounds),
        SeedMode::FromFile(path) => {
            let g = load_graph(path)?;
            if g.d() != d {
                return Err(Error::Input(format!(
                    "seed graph {} has {} nodes, dataset has {d} columns",
                    path.display(),
                    g.d()
                )));
            }
            Ok(g)
        }
    }
}

/// Runs the refinement chain from `seed`.
pub fn refine<R: Rng + ?Sized>(data: &Dataset, seed: &Dag, config: &RefineConfig, rng: &mut R) -> Result<RefineTrace> {
    let scorer = Scorer::new(data, config.score_config.clone())?;
    refine_with(&scorer, seed, config, rng)
}

/// Like [`refine`], reusing an existing scorer and its fit cache.
pub fn refine_with<R: Rng + ?Sized>(
    scorer: &Scorer<'_>,
    seed: &Dag,
    config: &RefineConfig,
    rng: &mut R,
) -> Result<RefineTrace> {
    config.validate()?;
    let cap = scorer.config().regressor.max_in_degree;
    let mut curr = seed.clone();
    let mut terms = scorer.node_terms(&curr)?;
    let mut score = scorer.combine(&terms, curr.edge_count());
    let seed_score = score;
    let temperature = match config.acceptance {
        Acceptance::Metropolis { .. } => Some(config.acceptance.temperature(seed_score.total)),
        Acceptance::LiteralRatio => None,
    };
    let mut best = curr.clone();
    let mut best_score = score;
    let collect_from = config.n_steps.saturating_sub(config.collect_k);
    let mut steps = Vec::with_capacity(config.n_steps);
    let mut collected: Vec<Dag> = Vec::new();
    for step in 0..config.n_steps {
        let moves = admissible_moves(&curr, cap);
        if moves.is_empty() {
            return Err(Error::Numerical(format!("no feasible move from the graph at step {step}")));
        }
        let mv = moves[rng.random_range(0..moves.len())];
        let (cand, cand_terms) = candidate(scorer, &curr, &terms, mv)?;
        let cand_score = scorer.combine(&cand_terms, cand.edge_count());
        let alpha = acceptance_probability(&config.acceptance, temperature.unwrap_or(1.0), score.total, cand_score.total);
        let u: f64 = rng.random();
        let accepted = u < alpha;
        steps.push(StepRecord {
            step,
            mv,
            s_curr: score.total,
            s_cand: cand_score.total,
            ad_cand: cand_score.ad,
            alpha,
            accepted,
        });
        if accepted {
            curr = cand;
            terms = cand_terms;
            score = cand_score;
            if score.total > best_score.total {
                best = curr.clone();
                best_score = score;
            }
        }
        if step >= collect_from && !(config.dedup_collected && collected.contains(&curr)) {
            collected.push(curr.clone());
        }
    }
    Ok(RefineTrace {
        seed: seed.clone(),
        seed_score,
        temperature,
        steps,
        collected,
        best,
        best_score,
    })
}

/// The highest-scoring visited graph, the earliest among ties. Visited
/// graphs are the seed and every accepted candidate.
pub fn best_scoring(trace: &RefineTrace) -> Result<(Dag, ScoreValue)> {
    let mut curr = trace.seed.clone();
    let mut best = (curr.clone(), trace.seed_score);
    for s in trace.steps.iter().filter(|s| s.accepted) {
        curr = apply_move(&curr, s.mv)?;
        if s.s_cand > best.1.total {
            let value = ScoreValue { ad: s.ad_cand, sparsity: curr.edge_count(), total: s.s_cand };
            best = (curr.clone(), value);
        }
    }
    Ok(best)
}
