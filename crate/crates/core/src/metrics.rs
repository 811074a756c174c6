//! Edge-prediction metrics over the off-diagonal entries of a score matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Off-diagonal scores and labels, row-major in `(i, j)`.
fn flatten(scores: &[Vec<f64>], truth: &Dag) -> Result<(Vec<f64>, Vec<bool>)> {
    let d = truth.d();
    if scores.len() != d || scores.iter().any(|r| r.len() != d) {
        return Err(Error::Structural(format!("score matrix is not {d} x {d}")));
    }
    let mut s = Vec::with_capacity(d * d.saturating_sub(1));
    let mut y = Vec::with_capacity(s.capacity());
    for (i, row) in scores.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                if !v.is_finite() {
                    return Err(Error::Input(format!("score ({i}, {j}) is not finite")));
                }
                s.push(v);
                y.push(truth.has_edge(i, j));
            }
        }
    }
    Ok((s, y))
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ranking metrics need both classes, got {p} positives and {n} negatives"
        )));
    }
    Ok((p, n))
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[k] => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}

/// Rank-based AUROC with midranks for ties.
pub fn auroc_labels(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = class_counts(labels)?;
    let groups = tie_groups(scores);
    // Ranks ascend from the lowest score.
    let mut rank_sum = 0.0;
    let mut above = 0usize;
    for g in &groups {
        let lowest_rank_in_group = scores.len() - above - g.len() + 1;
        let mid = lowest_rank_in_group as f64 + (g.len() - 1) as f64 / 2.0;
        rank_sum += mid * g.iter().filter(|&&k| labels[k]).count() as f64;
        above += g.len();
    }
    Ok((rank_sum - (p * (p + 1)) as f64 / 2.0) / (p * n) as f64)
}

/// Step-wise average precision: `sum_k (R_k - R_{k-1}) P_k` over distinct
/// score thresholds in descending order.
pub fn auprc_labels(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, _) = class_counts(labels)?;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let pos = g.iter().filter(|&&k| labels[k]).count();
        tp += pos;
        seen += g.len();
        ap += (pos as f64 / p as f64) * (tp as f64 / seen as f64);
    }
    Ok(ap)
}

/// F1 and accuracy after predicting an edge wherever `score >= threshold`.
pub fn f1_acc_labels(scores: &[f64], labels: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    let mut correct = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        if pred == l {
            correct += 1;
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let acc = if scores.is_empty() { 0.0 } else { correct as f64 / scores.len() as f64 };
    (f1, acc)
}

pub fn auroc(scores: &[Vec<f64>], truth: &Dag) -> Result<f64> {
    let (s, y) = flatten(scores, truth)?;
    auroc_labels(&s, &y)
}

pub fn auprc(scores: &[Vec<f64>], truth: &Dag) -> Result<f64> {
    let (s, y) = flatten(scores, truth)?;
    auprc_labels(&s, &y)
}

pub fn f1_acc(scores: &[Vec<f64>], truth: &Dag, threshold: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} is outside [0, 1]")));
    }
    let (s, y) = flatten(scores, truth)?;
    Ok(f1_acc_labels(&s, &y, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub f1: f64,
    pub acc: f64,
    pub threshold: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// All metrics of one score matrix against the true graph.
pub fn evaluate(scores: &[Vec<f64>], truth: &Dag, threshold: f64) -> Result<MetricReport> {
    let (s, y) = flatten(scores, truth)?;
    let (f1, acc) = f1_acc(scores, truth, threshold)?;
    let n_positive = y.iter().filter(|&&l| l).count();
    Ok(MetricReport {
        auroc: auroc_labels(&s, &y)?,
        auprc: auprc_labels(&s, &y)?,
        f1,
        acc,
        threshold,
        n_positive,
        n_negative: y.len() - n_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation; identical values, including a
    /// single value, have deviation exactly 0.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("cannot aggregate an empty list".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.iter().all(|&v| v == values[0]) {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    pub auroc: MeanStd,
    pub auprc: MeanStd,
    pub f1: MeanStd,
    pub acc: MeanStd,
}

pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    let col = |f: fn(&MetricReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        count: reports.len(),
        auroc: col(|r| r.auroc)?,
        auprc: col(|r| r.auprc)?,
        f1: col(|r| r.f1)?,
        acc: col(|r| r.acc)?,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::graph::random_er;
    use crate::rng::rng_from_seed;

    /// Area under the ROC polyline traced by sweeping every distinct threshold.
    fn auroc_sweep(s: &[f64], y: &[bool]) -> f64 {
        let p = y.iter().filter(|&&l| l).count() as f64;
        let n = y.len() as f64 - p;
        let mut thresholds: Vec<f64> = s.to_vec();
        thresholds.push(f64::INFINITY);
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let point = |t: f64| {
            let tp = s.iter().zip(y).filter(|(&v, &l)| l && v >= t).count() as f64;
            let fp = s.iter().zip(y).filter(|(&v, &l)| !l && v >= t).count() as f64;
            (fp / n, tp / p)
        };
        thresholds
            .windows(2)
            .map(|w| {
                let (x0, y0) = point(w[0]);
                let (x1, y1) = point(w[1]);
                (x1 - x0) * (y0 + y1) / 2.0
            })
            .sum()
    }

    /// Mean over positives of the precision at that positive's score.
    fn ap_oracle(s: &[f64], y: &[bool]) -> f64 {
        let pos: Vec<f64> = s.iter().zip(y).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
        pos.iter()
            .map(|&t| {
                let hits = s.iter().zip(y).filter(|(&v, &l)| l && v >= t).count() as f64;
                let all = s.iter().filter(|&&v| v >= t).count() as f64;
                hits / all
            })
            .sum::<f64>()
            / pos.len() as f64
    }

    fn f1_acc_oracle(s: &[f64], y: &[bool], t: f64) -> (f64, f64) {
        let pred: Vec<bool> = s.iter().map(|&v| v >= t).collect();
        let tp = pred.iter().zip(y).filter(|(&a, &b)| a && b).count() as f64;
        let pp = pred.iter().filter(|&&a| a).count() as f64;
        let ap = y.iter().filter(|&&b| b).count() as f64;
        let f1 = if pp + ap == 0.0 { 0.0 } else { 2.0 * tp / (pp + ap) };
        let acc = pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / s.len() as f64;
        (f1, acc)
    }

    #[test]
    fn trivial_cases() {
        let truth = Dag::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let perfect = truth.to_scores();
        assert_eq!(auroc(&perfect, &truth).unwrap(), 1.0);
        assert_eq!(auprc(&perfect, &truth).unwrap(), 1.0);
        assert_eq!(f1_acc(&perfect, &truth, 0.5).unwrap(), (1.0, 1.0));
        let flipped: Vec<Vec<f64>> = perfect.iter().map(|r| r.iter().map(|v| 1.0 - v).collect()).collect();
        assert_eq!(auroc(&flipped, &truth).unwrap(), 0.0);
        let constant = vec![vec![0.3; 3]; 3];
        assert_eq!(auroc(&constant, &truth).unwrap(), 0.5);
        assert!((auprc(&constant, &truth).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        let zeros = vec![vec![0.0; 3]; 3];
        assert_eq!(f1_acc(&zeros, &truth, 0.5).unwrap(), (0.0, 4.0 / 6.0));
    }

    #[test]
    fn hand_counted_f1() {
        let truth = Dag::from_edges(3, [(0, 1)]).unwrap();
        let pred = Dag::from_edges(3, [(0, 1), (1, 2)]).unwrap().to_scores();
        let (f1, acc) = f1_acc(&pred, &truth, 0.5).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((acc - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_metrics() {
        let empty = Dag::empty(3);
        assert!(matches!(auroc(&vec![vec![0.1; 3]; 3], &empty), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auprc(&vec![vec![0.1; 3]; 3], &empty), Err(Error::UndefinedMetric(_))));
        assert!(auroc(&vec![vec![0.1; 2]; 3], &empty).is_err());
        assert!(f1_acc(&vec![vec![0.1; 3]; 3], &empty, 1.5).is_err());
    }

    #[test]
    fn matches_brute_force_oracles_on_small_graphs() {
        let mut rng = rng_from_seed(1);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut checked = 0;
        while checked < 2000 {
            let d = if checked % 2 == 0 { 4 } else { 5 };
            let truth = random_er(d, rng.random_range(1.0..5.0), &mut rng);
            let scores: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| grid[rng.random_range(0..5)]).collect())
                .collect();
            let (s, y) = flatten(&scores, &truth).unwrap();
            if class_counts(&y).is_err() {
                continue;
            }
            let r = evaluate(&scores, &truth, 0.5).unwrap();
            assert!((r.auroc - auroc_sweep(&s, &y)).abs() < 1e-9);
            assert!((r.auprc - ap_oracle(&s, &y)).abs() < 1e-9);
            let (f1, acc) = f1_acc_oracle(&s, &y, 0.5);
            assert!((r.f1 - f1).abs() < 1e-12 && (r.acc - acc).abs() < 1e-12);
            assert_eq!(r.n_positive + r.n_negative, d * (d - 1));
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn auroc_is_rank_invariant_and_flips(
            cases in proptest::collection::vec((0u8..6, any::<bool>()), 2..30),
        ) {
            let s: Vec<f64> = cases.iter().map(|c| c.0 as f64).collect();
            let y: Vec<bool> = cases.iter().map(|c| c.1).collect();
            prop_assume!(class_counts(&y).is_ok());
            let a = auroc_labels(&s, &y).unwrap();
            let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() - 3.0).collect();
            prop_assert!((a - auroc_labels(&t, &y).unwrap()).abs() < 1e-12);
            let flipped: Vec<bool> = y.iter().map(|l| !l).collect();
            prop_assert!((a + auroc_labels(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
            let ap = auprc_labels(&s, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&ap));
        }
    }

    #[test]
    fn aggregation() {
        let base = MetricReport { auroc: 0.8, auprc: 0.5, f1: 0.4, acc: 0.9, threshold: 0.5, n_positive: 3, n_negative: 9 };
        let same = aggregate(&[base, base, base]).unwrap();
        assert_eq!(same.auroc.std, 0.0);
        let two = aggregate(&[base, MetricReport { auroc: 0.9, ..base }]).unwrap();
        assert!((two.auroc.mean - 0.85).abs() < 1e-15);
        assert!((two.auroc.std - 0.070710678).abs() < 1e-8);
        assert_eq!(aggregate(&[base]).unwrap().auroc.std, 0.0);
        assert!(aggregate(&[]).is_err());
    }
}
