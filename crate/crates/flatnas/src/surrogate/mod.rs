//! Surrogate predictors of the accuracy/robustness objective, plus the
//! rank-correlation model switch that picks the best predictor per iteration.
//!
//! Genes are embedded as feature vectors by min-max normalizing each index
//! to [0, 1]. Four regressor families are available; each NAS iteration the
//! switch cross-validates all four against the archive and keeps the one
//! whose held-out predictions rank the true objective best under Kendall's
//! tau.

mod kendall;
mod linalg;

pub use kendall::kendall_tau;

use crate::error::{Error, Result};
use crate::objectives::{f_ar, EvalRecord, FomConfig};
use crate::search_space::{ArchGene, SearchSpaceDef};
use crate::seed;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// The four regressor families, in tie-break order: when cross-validation
/// scores tie, the earlier kind wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Rbf,
    GaussianProcess,
    Ridge,
    KNearestNeighbors,
}

/// Fixed evaluation and tie-break order of the kinds.
pub const KIND_ORDER: [SurrogateKind; 4] = [
    SurrogateKind::Rbf,
    SurrogateKind::GaussianProcess,
    SurrogateKind::Ridge,
    SurrogateKind::KNearestNeighbors,
];

impl std::fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SurrogateKind::Rbf => "rbf",
            SurrogateKind::GaussianProcess => "gaussian_process",
            SurrogateKind::Ridge => "ridge",
            SurrogateKind::KNearestNeighbors => "k_nearest_neighbors",
        };
        write!(f, "{s}")
    }
}

/// Normalizes a gene to a feature vector: each index divided by its
/// dimension's maximum index (single-choice dimensions map to 0).
pub fn features(space: &SearchSpaceDef, gene: &ArchGene) -> Result<Vec<f64>> {
    space.check_gene(gene)?;
    Ok(gene
        .genes
        .iter()
        .zip(space.domain_sizes())
        .map(|(&idx, dom)| idx as f64 / (dom - 1).max(1) as f64)
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise distance of the training features; 1.0 when degenerate.
fn median_length_scale(xs: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            dists.push(sq_dist(&xs[i], &xs[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    if median < 1e-12 {
        1.0
    } else {
        median
    }
}

#[derive(Debug, Clone)]
enum Params {
    /// Shared by the RBF interpolant and the Gaussian-process mean: a
    /// Gaussian kernel expansion around the centered targets.
    Kernel { xs: Vec<Vec<f64>>, coeffs: Vec<f64>, length_scale: f64, mean: f64 },
    Ridge { feat_mean: Vec<f64>, weights: Vec<f64>, intercept: f64 },
    Knn { xs: Vec<Vec<f64>>, ys: Vec<f64>, k: usize },
}

/// A fitted regressor. Prediction is pure; the fingerprint identifies the
/// training set the model was fitted on.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub fingerprint: u64,
    params: Params,
    dim: usize,
}

fn fingerprint(features: &[Vec<f64>], targets: &[f64]) -> u64 {
    let mut acc = 0x9E3779B97F4A7C15u64;
    for row in features {
        for v in row {
            acc = seed::mix(acc, &[v.to_bits()]);
        }
    }
    for t in targets {
        acc = seed::mix(acc, &[t.to_bits()]);
    }
    acc
}

/// Fits one regressor family.
///
/// RBF: exact Gaussian-basis interpolant with ridge jitter 1e-8 and the
/// median-heuristic length scale. Gaussian process: same kernel with noise
/// 1e-6, mean prediction. Ridge: linear least squares with regularization
/// 1e-3 and an unpenalized intercept (fitted on centered data). KNN:
/// k = min(5, n) with inverse-distance weighting. All kinds center targets,
/// so constant targets are reproduced exactly everywhere.
pub fn fit(kind: SurrogateKind, features: &[Vec<f64>], targets: &[f64]) -> Result<SurrogateModel> {
    if features.len() != targets.len() {
        return Err(Error::ShapeError(format!(
            "{} feature rows but {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "surrogate fit needs at least 2 points, got {}",
            features.len()
        )));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::ShapeError("inconsistent feature lengths".into()));
    }
    let n = features.len();
    let mean = targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = targets.iter().map(|t| t - mean).collect();
    let fp = fingerprint(features, targets);

    let params = match kind {
        SurrogateKind::Rbf | SurrogateKind::GaussianProcess => {
            let jitter = if kind == SurrogateKind::Rbf { 1e-8 } else { 1e-6 };
            let ell = median_length_scale(features);
            let mut k_mat = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let d2 = sq_dist(&features[i], &features[j]);
                    k_mat[i * n + j] = (-d2 / (2.0 * ell * ell)).exp();
                }
            }
            let mut regularized = k_mat.clone();
            for i in 0..n {
                regularized[i * n + i] += jitter;
            }
            let lu = linalg::Lu::factor(regularized, n)?;
            let mut coeffs = lu.solve(&centered)?;
            if kind == SurrogateKind::Rbf {
                // The jitter stabilizes the solve but shifts the solution
                // off exact interpolation by jitter * |coeffs|. Iterative
                // refinement against the unregularized kernel recovers the
                // interpolant whenever the system is not truly singular
                // (conflicting duplicates stall and keep the jittered fit).
                let mut prev = f64::INFINITY;
                for _ in 0..16 {
                    let mut residual = centered.clone();
                    for (i, r) in residual.iter_mut().enumerate() {
                        for (j, c) in coeffs.iter().enumerate() {
                            *r -= k_mat[i * n + j] * c;
                        }
                    }
                    let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
                    if worst < 1e-10 || worst >= 0.5 * prev {
                        break;
                    }
                    prev = worst;
                    let delta = lu.solve(&residual)?;
                    for (c, d) in coeffs.iter_mut().zip(delta) {
                        *c += d;
                    }
                }
            }
            Params::Kernel { xs: features.to_vec(), coeffs, length_scale: ell, mean }
        }
        SurrogateKind::Ridge => {
            let lambda = 1e-3;
            let mut feat_mean = vec![0.0; dim];
            for row in features {
                for (m, v) in feat_mean.iter_mut().zip(row.iter()) {
                    *m += v / n as f64;
                }
            }
            // Normal equations on centered data: (X^T X + lambda I) w = X^T y.
            let mut a = vec![0.0; dim * dim];
            let mut rhs = vec![0.0; dim];
            for (row, &yc) in features.iter().zip(centered.iter()) {
                let xc: Vec<f64> = row.iter().zip(feat_mean.iter()).map(|(v, m)| v - m).collect();
                for i in 0..dim {
                    rhs[i] += xc[i] * yc;
                    for j in 0..dim {
                        a[i * dim + j] += xc[i] * xc[j];
                    }
                }
            }
            for i in 0..dim {
                a[i * dim + i] += lambda;
            }
            let weights = linalg::solve(a, rhs)?;
            Params::Ridge { feat_mean, weights, intercept: mean }
        }
        SurrogateKind::KNearestNeighbors => Params::Knn {
            xs: features.to_vec(),
            ys: targets.to_vec(),
            k: 5.min(n),
        },
    };
    Ok(SurrogateModel { kind, fingerprint: fp, params, dim })
}

impl SurrogateModel {
    /// Predicted objective value at a feature vector (lower is better).
    pub fn predict(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim {
            return Err(Error::ShapeError(format!(
                "feature vector has {} entries, model expects {}",
                f.len(),
                self.dim
            )));
        }
        Ok(match &self.params {
            Params::Kernel { xs, coeffs, length_scale, mean } => {
                let mut acc = *mean;
                for (x, c) in xs.iter().zip(coeffs.iter()) {
                    acc += c * (-sq_dist(f, x) / (2.0 * length_scale * length_scale)).exp();
                }
                acc
            }
            Params::Ridge { feat_mean, weights, intercept } => {
                let mut acc = *intercept;
                for ((v, m), w) in f.iter().zip(feat_mean.iter()).zip(weights.iter()) {
                    acc += (v - m) * w;
                }
                acc
            }
            Params::Knn { xs, ys, k } => {
                let mut order: Vec<usize> = (0..xs.len()).collect();
                let dists: Vec<f64> = xs.iter().map(|x| sq_dist(f, x).sqrt()).collect();
                order.sort_by(|&i, &j| dists[i].total_cmp(&dists[j]).then(i.cmp(&j)));
                let nearest = &order[..*k];
                if dists[nearest[0]] < 1e-12 {
                    let zero: Vec<usize> =
                        nearest.iter().copied().filter(|&i| dists[i] < 1e-12).collect();
                    zero.iter().map(|&i| ys[i]).sum::<f64>() / zero.len() as f64
                } else {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &i in nearest {
                        let w = 1.0 / dists[i];
                        num += w * ys[i];
                        den += w;
                    }
                    num / den
                }
            }
        })
    }
}

/// Cross-validation outcome of [`adaptive_switch`]: the refitted winner and
/// the mean held-out tau of every kind, in [`KIND_ORDER`].
#[derive(Debug, Clone)]
pub struct SwitchOutcome {
    pub model: SurrogateModel,
    pub scores: Vec<(SurrogateKind, f64)>,
}

/// Picks the regressor family whose 5-fold cross-validated predictions rank
/// the archive's true objective values best (mean Kendall's tau over folds),
/// then refits it on the whole archive. Targets are the combined objective
/// computed from each record with the frozen `gamma`. Ties go to the earlier
/// kind in [`KIND_ORDER`]. Folds where tau is undefined (all-tied values) are
/// skipped; a kind with no defined fold scores 0.
pub fn adaptive_switch(
    space: &SearchSpaceDef,
    archive: &[EvalRecord],
    fom: &FomConfig,
    gamma: f64,
    rng_seed: u64,
) -> Result<SwitchOutcome> {
    let n = archive.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "adaptive switching needs an archive of at least 8, got {n}"
        )));
    }
    let feats: Vec<Vec<f64>> = archive
        .iter()
        .map(|r| features(space, &r.gene))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = archive
        .iter()
        .map(|r| f_ar(r.top1_accuracy, r.robustness, fom.alpha, gamma))
        .collect();

    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut seed::rng(seed::mix(rng_seed, &[0xF01D])));
    let fold_of = |pos_in_shuffle: usize| pos_in_shuffle % 5;

    let mut scores = Vec::with_capacity(KIND_ORDER.len());
    for kind in KIND_ORDER {
        let mut taus = Vec::new();
        for fold in 0..5 {
            let mut train_f = Vec::new();
            let mut train_y = Vec::new();
            let mut test_f = Vec::new();
            let mut test_y = Vec::new();
            for (pos, &i) in shuffled.iter().enumerate() {
                if fold_of(pos) == fold {
                    test_f.push(feats[i].clone());
                    test_y.push(targets[i]);
                } else {
                    train_f.push(feats[i].clone());
                    train_y.push(targets[i]);
                }
            }
            if train_f.len() < 2 || test_f.len() < 2 {
                continue;
            }
            let model = fit(kind, &train_f, &train_y)?;
            let preds: Vec<f64> =
                test_f.iter().map(|f| model.predict(f)).collect::<Result<_>>()?;
            match kendall_tau(&preds, &test_y) {
                Ok(tau) => taus.push(tau),
                Err(Error::NaNCorrelation(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let mean = if taus.is_empty() {
            0.0
        } else {
            taus.iter().sum::<f64>() / taus.len() as f64
        };
        scores.push((kind, mean));
    }

    let mut best = 0;
    for (i, &(_, tau)) in scores.iter().enumerate().skip(1) {
        if tau > scores[best].1 {
            best = i;
        }
    }
    let model = fit(scores[best].0, &feats, &targets)?;
    Ok(SwitchOutcome { model, scores })
}
