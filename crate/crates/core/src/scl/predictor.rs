//! A two-hidden-layer perceptron mapping pair features to edge probabilities.

use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::features::{PairFeaturizer, FEATURE_LEN};
use super::TrainingSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 200,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden, epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("learning_rate must be > 0 and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Parameter layout inside the flat vector: `w1 (h x f)`, `b1 (h)`,
/// `w2 (h x h)`, `b2 (h)`, `w3 (1 x h)`, `b3`. Matrices are column-major.
#[derive(Debug, Clone, Copy)]
struct Layout {
    f: usize,
    h: usize,
}

impl Layout {
    fn w1(&self) -> std::ops::Range<usize> {
        0..self.h * self.f
    }
    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.w1().end;
        s..s + self.h
    }
    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.h * self.h
    }
    fn b2(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.h
    }
    fn w3(&self) -> std::ops::Range<usize> {
        let s = self.b2().end;
        s..s + self.h
    }
    fn b3(&self) -> usize {
        self.w3().end
    }
    fn len(&self) -> usize {
        self.b3() + 1
    }
}

struct Forward {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    logits: DVector<f64>,
}

/// `tanh` through `exp_m1`, faster than the libm routine at full accuracy.
fn fast_tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp_m1();
    e / (e + 2.0)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

/// The trained edge classifier with its frozen feature normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePredictor {
    pub layers: Vec<LayerShape>,
    pub params: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub config: TrainConfig,
    /// Fraction of positive labels seen in training.
    pub base_rate: f64,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

impl EdgePredictor {
    fn layout(&self) -> Layout {
        Layout { f: self.feature_mean.len(), h: self.config.hidden }
    }

    fn forward(&self, x: &DMatrix<f64>) -> Forward {
        forward(&self.params, self.layout(), x)
    }

    fn normalize(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        normalize_columns(rows, &self.feature_mean, &self.feature_std)
    }

    /// Edge probabilities for `data`: entry `(i, j)` is the probability of
    /// `i -> j`; the diagonal is 0.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let d = data.d();
        let pairs = PairFeaturizer::new(data).all_pairs();
        if let Some(((i, j), _)) = pairs.iter().find(|(_, f)| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input(format!("non-finite feature for pair ({i}, {j})")));
        }
        let rows: Vec<Vec<f64>> = pairs.iter().map(|(_, f)| f.clone()).collect();
        let mut out = vec![vec![0.0; d]; d];
        if rows.is_empty() {
            return Ok(out);
        }
        let fw = self.forward(&self.normalize(&rows));
        for (k, ((i, j), _)) in pairs.iter().enumerate() {
            out[*i][*j] = sigmoid(fw.logits[k]);
        }
        Ok(out)
    }

    /// Mean binary cross-entropy of labelled raw feature rows and its
    /// gradient with respect to `params`.
    pub fn loss_and_gradient(&self, rows: &[Vec<f64>], labels: &[f64]) -> (f64, Vec<f64>) {
        loss_and_gradient(&self.params, self.layout(), &self.normalize(rows), labels)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: EdgePredictor = serde_json::from_str(text)?;
        let expected = Layout { f: p.feature_mean.len(), h: p.config.hidden }.len();
        if p.params.len() != expected || p.feature_std.len() != p.feature_mean.len() {
            return Err(Error::Input(format!(
                "predictor has {} parameters, its shapes need {expected}",
                p.params.len()
            )));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn forward(params: &[f64], l: Layout, x: &DMatrix<f64>) -> Forward {
    let w1 = DMatrixView::from_slice(&params[l.w1()], l.h, l.f);
    let b1 = DMatrixView::from_slice(&params[l.b1()], l.h, 1);
    let w2 = DMatrixView::from_slice(&params[l.w2()], l.h, l.h);
    let b2 = DMatrixView::from_slice(&params[l.b2()], l.h, 1);
    let w3 = DMatrixView::from_slice(&params[l.w3()], 1, l.h);
    let b3 = params[l.b3()];
    let mut a1 = w1 * x;
    for mut c in a1.column_iter_mut() {
        c += b1.column(0);
        c.apply(|v| *v = fast_tanh(*v));
    }
    let mut a2 = &w2 * &a1;
    for mut c in a2.column_iter_mut() {
        c += b2.column(0);
        c.apply(|v| *v = fast_tanh(*v));
    }
    let logits = (w3 * &a2).transpose().column(0).map(|v| v + b3);
    Forward { a1, a2, logits }
}

/// Mean binary cross-entropy of a batch and its gradient with respect to
/// the flat parameter vector.
fn loss_and_gradient(params: &[f64], l: Layout, x: &DMatrix<f64>, y: &[f64]) -> (f64, Vec<f64>) {
    let b = x.ncols() as f64;
    let fw = forward(params, l, x);
    let loss = fw.logits.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / b;
    let dz = DMatrix::from_iterator(1, y.len(), fw.logits.iter().zip(y).map(|(&z, &t)| (sigmoid(z) - t) / b));
    let w2 = DMatrixView::from_slice(&params[l.w2()], l.h, l.h);
    let w3 = DMatrixView::from_slice(&params[l.w3()], 1, l.h);

    let mut grad = vec![0.0; l.len()];
    let gw3 = &dz * fw.a2.transpose();
    grad[l.w3()].copy_from_slice(gw3.as_slice());
    grad[l.b3()] = dz.sum();

    let mut dz2 = w3.transpose() * &dz;
    dz2.zip_apply(&fw.a2, |g, a| *g *= 1.0 - a * a);
    let gw2 = &dz2 * fw.a1.transpose();
    grad[l.w2()].copy_from_slice(gw2.as_slice());
    grad[l.b2()].copy_from_slice(dz2.column_sum().as_slice());

    let mut dz1 = w2.transpose() * &dz2;
    dz1.zip_apply(&fw.a1, |g, a| *g *= 1.0 - a * a);
    let gw1 = &dz1 * x.transpose();
    grad[l.w1()].copy_from_slice(gw1.as_slice());
    grad[l.b1()].copy_from_slice(dz1.column_sum().as_slice());
    (loss, grad)
}

fn normalize_columns(rows: &[Vec<f64>], mean: &[f64], std: &[f64]) -> DMatrix<f64> {
    let f = mean.len();
    DMatrix::from_fn(f, rows.len(), |k, c| (rows[c][k] - mean[k]) / std[k])
}

fn init_params<R: Rng + ?Sized>(l: Layout, base_rate: f64, rng: &mut R) -> Vec<f64> {
    let mut p = vec![0.0; l.len()];
    let mut glorot = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("valid bounds");
        for v in &mut p[range] {
            *v = dist.sample(rng);
        }
    };
    glorot(l.w1(), l.f, l.h);
    glorot(l.w2(), l.h, l.h);
    glorot(l.w3(), l.h, 1);
    let r = base_rate.clamp(1e-3, 1.0 - 1e-3);
    p[l.b3()] = (r / (1.0 - r)).ln();
    p
}

/// Labelled pair examples of a training set: one per ordered pair of every
/// instance, labelled by the adjacency entry.
pub fn training_examples(set: &TrainingSet) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rayon::prelude::*;
    let per_instance: Vec<(Vec<Vec<f64>>, Vec<f64>)> = set
        .instances
        .par_iter()
        .map(|inst| {
            let pairs = PairFeaturizer::new(&inst.data).all_pairs();
            let labels = pairs.iter().map(|((i, j), _)| f64::from(u8::from(inst.dag.has_edge(*i, *j)))).collect();
            (pairs.into_iter().map(|(_, f)| f).collect(), labels)
        })
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, l) in per_instance {
        rows.extend(r);
        labels.extend(l);
    }
    (rows, labels)
}

/// Trains a predictor on every ordered pair of every training instance.
pub fn train(set: &TrainingSet, config: &TrainConfig) -> Result<EdgePredictor> {
    let (rows, labels) = training_examples(set);
    train_on_examples(&rows, &labels, config)
}

/// Trains on precomputed `(features, label)` examples with mini-batch
/// gradient descent with momentum.
pub fn train_on_examples(rows: &[Vec<f64>], labels: &[f64], config: &TrainConfig) -> Result<EdgePredictor> {
    config.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Input("training needs at least one labelled example".into()));
    }
    if let Some(k) = rows.iter().position(|r| r.len() != FEATURE_LEN || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Input(format!("training example {k} has malformed features")));
    }
    let m = rows.len() as f64;
    let base_rate = labels.iter().sum::<f64>() / m;
    if base_rate == 0.0 || base_rate == 1.0 {
        log::warn!("all {} training labels are {base_rate}; the predictor is degenerate", rows.len());
    }
    let feature_mean: Vec<f64> = (0..FEATURE_LEN).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / m).collect();
    let feature_std: Vec<f64> = (0..FEATURE_LEN)
        .map(|k| {
            let s = (rows.iter().map(|r| (r[k] - feature_mean[k]).powi(2)).sum::<f64>() / m).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let x = normalize_columns(rows, &feature_mean, &feature_std);
    let l = Layout { f: FEATURE_LEN, h: config.hidden };
    let mut rng = rng_from_seed(config.seed);
    let mut params = init_params(l, base_rate, &mut rng);
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_columns(batch);
            let yb: Vec<f64> = batch.iter().map(|&k| labels[k]).collect();
            let (loss, grad) = loss_and_gradient(&params, l, &xb, &yb);
            epoch_loss += loss * batch.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        loss_history.push(epoch_loss / m);
    }
    Ok(EdgePredictor {
        layers: vec![
            LayerShape { rows: l.h, cols: l.f },
            LayerShape { rows: l.h, cols: l.h },
            LayerShape { rows: 1, cols: l.h },
        ],
        params,
        feature_mean,
        feature_std,
        config: config.clone(),
        base_rate,
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use rand_distr::Normal;

    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let l = Layout { f: FEATURE_LEN, h: 5 };
        let mut rng = rng_from_seed(1);
        let params = init_params(l, 0.3, &mut rng);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(FEATURE_LEN, 10, |_, _| normal.sample(&mut rng));
        let y: Vec<f64> = (0..10).map(|k| f64::from(u8::from(k % 3 == 0))).collect();
        let (_, grad) = loss_and_gradient(&params, l, &x, &y);
        let h = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let up = loss_and_gradient(&p, l, &x, &y).0;
            p[k] -= 2.0 * h;
            let down = loss_and_gradient(&p, l, &x, &y).0;
            let numeric = (up - down) / (2.0 * h);
            let scale = numeric.abs().max(grad[k].abs()).max(1e-6);
            assert!((numeric - grad[k]).abs() / scale < 1e-4, "param {k}: {numeric} vs {}", grad[k]);
        }
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for k in -4000..=4000 {
            let x = k as f64 / 100.0;
            assert!((fast_tanh(x) - x.tanh()).abs() < 1e-15, "{x}");
        }
        assert_eq!(fast_tanh(1e-300), 1e-300);
    }

    #[test]
    fn stable_loss_pieces() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn training_reduces_loss() {
        for seed in 0..5 {
            let mut rng = rng_from_seed(seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..FEATURE_LEN).map(|_| normal.sample(&mut rng)).collect()).collect();
            let labels: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[0] + 0.5 * r[3] > 0.0))).collect();
            let cfg = TrainConfig { epochs: 30, seed, ..Default::default() };
            let p = train_on_examples(&rows, &labels, &cfg).unwrap();
            assert!(p.loss_history.last().unwrap() < &p.loss_history[0], "seed {seed}");
        }
    }

    #[test]
    fn degenerate_labels_still_train() {
        let rows = vec![vec![0.5; FEATURE_LEN]; 20];
        let p = train_on_examples(&rows, &[0.0; 20], &TrainConfig { epochs: 3, ..Default::default() }).unwrap();
        assert_eq!(p.base_rate, 0.0);
        assert!(p.params.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows: Vec<Vec<f64>> = (0..40).map(|k| (0..FEATURE_LEN).map(|f| ((k * f) as f64).sin()).collect()).collect();
        let labels: Vec<f64> = (0..40).map(|k| f64::from(u8::from(k % 2 == 0))).collect();
        let p = train_on_examples(&rows, &labels, &TrainConfig { epochs: 2, hidden: 8, ..Default::default() }).unwrap();
        let q = EdgePredictor::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
        let mut bad = p.clone();
        bad.params.pop();
        assert!(EdgePredictor::from_json(&bad.to_json().unwrap()).is_err());
    }
}
