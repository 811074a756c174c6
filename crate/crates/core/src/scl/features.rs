//! Fixed-length statistics describing an ordered pair of variables.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;

use crate::dataset::Dataset;

/// Number of entries in every pair feature vector.
pub const FEATURE_LEN: usize = 18;

/// Names of the pair features, in order.
pub const FEATURE_NAMES: [&str; FEATURE_LEN] = [
    "mean_i",
    "std_i",
    "skew_i",
    "kurt_i",
    "mean_j",
    "std_j",
    "skew_j",
    "kurt_j",
    "pearson",
    "spearman",
    "resvar_i_to_j",
    "hetero_i_to_j",
    "resvar_j_to_i",
    "hetero_j_to_i",
    "pcorr_single_max",
    "pcorr_single_mean",
    "pcorr_single_min",
    "pcorr_full",
];

/// Offsets of the two directional blocks; swapping `i` and `j` exchanges them.
pub const ASYMMETRY_I_TO_J: std::ops::Range<usize> = 10..12;
pub const ASYMMETRY_J_TO_I: std::ops::Range<usize> = 12..14;

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    std: f64,
    skew: f64,
    kurt: f64,
}

fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 {
        return Moments { mean, std: 0.0, skew: 0.0, kurt: 0.0 };
    }
    let m3 = x.iter().map(|v| ((v - mean) / std).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| ((v - mean) / std).powi(4)).sum::<f64>() / n;
    Moments { mean, std, skew: m3, kurt: m4 - 3.0 }
}

fn standardize(x: &[f64], m: &Moments) -> Vec<f64> {
    if m.std == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - m.mean) / m.std).collect()
    }
}

/// Midranks, 1-based.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            r[k] = mid;
        }
        start = end;
    }
    r
}

/// Mean of the product of two standardized columns, 0 when either is constant.
fn corr_z(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64).clamp(-1.0, 1.0)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (moments(a), moments(b));
    corr_z(&standardize(a, &ma), &standardize(b, &mb))
}

/// Fits `y` on a cubic in `x` (both standardized) and returns the fraction
/// of variance left unexplained and `|corr(residual^2, x^2)|`.
fn directional(x: &[f64], y: &[f64], y_constant: bool) -> [f64; 2] {
    if y_constant {
        return [1.0, 0.0];
    }
    let n = x.len() as f64;
    let mut gram = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    for (&a, &b) in x.iter().zip(y) {
        let f = Vector4::new(1.0, a, a * a, a * a * a);
        gram += f * f.transpose();
        rhs += f * b;
    }
    gram /= n;
    rhs /= n;
    for k in 1..4 {
        gram[(k, k)] += 1e-8;
    }
    let Some(chol) = gram.cholesky() else {
        return [1.0, 0.0];
    };
    let beta = chol.solve(&rhs);
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| b - (beta[0] + beta[1] * a + beta[2] * a * a + beta[3] * a * a * a))
        .collect();
    let resvar = (residuals.iter().map(|r| r * r).sum::<f64>() / n).min(1.0);
    let r2: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let x2: Vec<f64> = x.iter().map(|a| a * a).collect();
    [resvar, pearson(&r2, &x2).abs()]
}

fn partial_given(r: &DMatrix<f64>, i: usize, j: usize, k: usize) -> f64 {
    let (rij, rik, rjk) = (r[(i, j)], r[(i, k)], r[(j, k)]);
    let denom = ((1.0 - rik * rik) * (1.0 - rjk * rjk)).sqrt();
    if denom <= 1e-12 {
        0.0
    } else {
        ((rij - rik * rjk) / denom).clamp(-1.0, 1.0)
    }
}

/// Precomputed per-dataset statistics from which pair features are read.
pub struct PairFeaturizer {
    moments: Vec<Moments>,
    z: Vec<Vec<f64>>,
    pearson: DMatrix<f64>,
    spearman: DMatrix<f64>,
    full_partial: DMatrix<f64>,
}

impl PairFeaturizer {
    pub fn new(data: &Dataset) -> Self {
        let d = data.d();
        let moments: Vec<Moments> = (0..d).map(|j| moments(data.column(j))).collect();
        let z: Vec<Vec<f64>> = (0..d).map(|j| standardize(data.column(j), &moments[j])).collect();
        let rz: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let r = ranks(data.column(j));
                let m = self::moments(&r);
                standardize(&r, &m)
            })
            .collect();
        let mut pearson = DMatrix::identity(d, d);
        let mut spearman = DMatrix::identity(d, d);
        for i in 0..d {
            for j in i + 1..d {
                let p = corr_z(&z[i], &z[j]);
                let s = corr_z(&rz[i], &rz[j]);
                pearson[(i, j)] = p;
                pearson[(j, i)] = p;
                spearman[(i, j)] = s;
                spearman[(j, i)] = s;
            }
        }
        let full_partial = full_partial_correlation(&pearson);
        PairFeaturizer { moments, z, pearson, spearman, full_partial }
    }

    pub fn d(&self) -> usize {
        self.z.len()
    }

    /// Feature vector of the ordered pair `(i, j)`, `i != j`.
    pub fn features(&self, i: usize, j: usize) -> Vec<f64> {
        assert!(i != j && i < self.d() && j < self.d(), "invalid pair ({i}, {j})");
        let (mi, mj) = (self.moments[i], self.moments[j]);
        let mut f = Vec::with_capacity(FEATURE_LEN);
        f.extend([mi.mean, mi.std, mi.skew, mi.kurt, mj.mean, mj.std, mj.skew, mj.kurt]);
        f.push(self.pearson[(i, j)]);
        f.push(self.spearman[(i, j)]);
        f.extend(directional(&self.z[i], &self.z[j], mj.std == 0.0));
        f.extend(directional(&self.z[j], &self.z[i], mi.std == 0.0));
        let mut singles: Vec<f64> = (0..self.d())
            .filter(|&k| k != i && k != j)
            .map(|k| partial_given(&self.pearson, i, j, k).abs())
            .collect();
        if singles.is_empty() {
            singles.push(self.pearson[(i, j)].abs());
        }
        singles.sort_by(f64::total_cmp);
        f.push(singles[singles.len() - 1]);
        f.push(singles.iter().sum::<f64>() / singles.len() as f64);
        f.push(singles[0]);
        f.push(self.full_partial[(i, j)].abs());
        f
    }

    /// Features of every ordered off-diagonal pair, row-major in `(i, j)`.
    pub fn all_pairs(&self) -> Vec<((usize, usize), Vec<f64>)> {
        let d = self.d();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        pairs.into_par_iter().map(|(i, j)| ((i, j), self.features(i, j))).collect()
    }
}

fn full_partial_correlation(r: &DMatrix<f64>) -> DMatrix<f64> {
    let d = r.nrows();
    let reg = r + DMatrix::identity(d, d) * 1e-6;
    let Some(p) = reg.cholesky().map(|c| c.inverse()) else {
        return DMatrix::zeros(d, d);
    };
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            (-p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    })
}

/// Feature vector of the ordered pair `(i, j)` of `data`.
pub fn featurize_pair(data: &Dataset, i: usize, j: usize) -> Vec<f64> {
    PairFeaturizer::new(data).features(i, j)
}
