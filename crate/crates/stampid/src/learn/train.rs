//! Loss functions, batch gradients and the seeded mini-batch optimizer
//! shared by both model kinds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureConfig, FeatureVector};

use super::{LabelSpace, LinearModel, ModelKind, Standardizer, TrainError};

/// Optimizer settings. The seed drives the per-epoch sample shuffle, so
/// identical inputs and seed produce bit-identical models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs_sgd: u32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            l2_lambda: 1e-4,
            epochs_sgd: 100,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(TrainError::InvalidConfig("l2 weight must be >= 0".into()));
        }
        if self.epochs_sgd < 1 {
            return Err(TrainError::InvalidConfig("need at least one epoch".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-major sample matrix with the constant-1 bias column appended.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DesignMatrix {
    /// Appends the bias term to each row. Rows must share one length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * (dim + 1));
        for row in rows {
            assert_eq!(row.len(), dim, "ragged design matrix");
            data.extend_from_slice(row);
            data.push(1.0);
        }
        Self {
            data,
            rows: rows.len(),
            cols: dim + 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Adds the ridge term `l2 * w` for every non-bias weight.
fn add_l2(grad: &mut [f64], weights: &[f64], cols: usize, l2: f64) {
    if l2 == 0.0 {
        return;
    }
    for (row_g, row_w) in grad.chunks_exact_mut(cols).zip(weights.chunks_exact(cols)) {
        for j in 0..cols - 1 {
            row_g[j] += l2 * row_w[j];
        }
    }
}

fn l2_penalty(weights: &[f64], cols: usize, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let sumsq: f64 = weights
        .chunks_exact(cols)
        .flat_map(|row| row[..cols - 1].iter())
        .map(|w| w * w)
        .sum();
    0.5 * l2 * sumsq
}

/// Mean cross-entropy of softmax scores over `batch` plus the L2 term,
/// with its gradient accumulated into `grad` (which is cleared first).
fn logreg_batch(
    weights: &[f64],
    xs: &DesignMatrix,
    labels: &[usize],
    batch: &[usize],
    l2: f64,
    grad: &mut [f64],
    want_loss: bool,
) -> f64 {
    let cols = xs.cols();
    let classes = weights.len() / cols;
    let inv = 1.0 / batch.len() as f64;
    grad.fill(0.0);
    let mut loss = 0.0;
    let mut scores = vec![0.0; classes];
    for &i in batch {
        let x = xs.row(i);
        for (c, s) in scores.iter_mut().enumerate() {
            *s = dot(&weights[c * cols..(c + 1) * cols], x);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in &mut scores {
            *s = (*s - max).exp();
            sum += *s;
        }
        for (c, s) in scores.iter().enumerate() {
            let p = s / sum;
            let target = if c == labels[i] { 1.0 } else { 0.0 };
            axpy((p - target) * inv, x, &mut grad[c * cols..(c + 1) * cols]);
        }
        if want_loss {
            let p_true = scores[labels[i]] / sum;
            loss -= inv * p_true.max(f64::MIN_POSITIVE).ln();
        }
    }
    add_l2(grad, weights, cols, l2);
    loss + l2_penalty(weights, cols, l2)
}

/// Sum over classes of the one-vs-rest mean hinge loss plus L2, with
/// the subgradient accumulated into `grad`. At a kink (margin exactly
/// 1) the hinge contributes nothing.
fn svm_batch(
    weights: &[f64],
    xs: &DesignMatrix,
    labels: &[usize],
    batch: &[usize],
    l2: f64,
    grad: &mut [f64],
    want_loss: bool,
) -> f64 {
    let cols = xs.cols();
    let classes = weights.len() / cols;
    let inv = 1.0 / batch.len() as f64;
    grad.fill(0.0);
    let mut loss = 0.0;
    for &i in batch {
        let x = xs.row(i);
        for c in 0..classes {
            let sign = if labels[i] == c { 1.0 } else { -1.0 };
            let margin = sign * dot(&weights[c * cols..(c + 1) * cols], x);
            if margin < 1.0 {
                axpy(-sign * inv, x, &mut grad[c * cols..(c + 1) * cols]);
                if want_loss {
                    loss += inv * (1.0 - margin);
                }
            }
        }
    }
    add_l2(grad, weights, cols, l2);
    loss + l2_penalty(weights, cols, l2)
}

#[allow(clippy::too_many_arguments)]
fn batch_loss_grad(
    kind: ModelKind,
    weights: &[f64],
    xs: &DesignMatrix,
    labels: &[usize],
    batch: &[usize],
    l2: f64,
    grad: &mut [f64],
    want_loss: bool,
) -> f64 {
    match kind {
        ModelKind::Logreg => logreg_batch(weights, xs, labels, batch, l2, grad, want_loss),
        ModelKind::Svm => svm_batch(weights, xs, labels, batch, l2, grad, want_loss),
    }
}

/// Full-batch loss and gradient of the multinomial cross-entropy
/// objective. Weight rows are `dim + 1` long (bias last).
pub fn logreg_loss_grad(
    weights: &[Vec<f64>],
    xs: &DesignMatrix,
    labels: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>) {
    full_loss_grad(ModelKind::Logreg, weights, xs, labels, l2)
}

/// Full-batch loss and subgradient of the summed one-vs-rest hinge
/// objective.
pub fn svm_loss_grad(
    weights: &[Vec<f64>],
    xs: &DesignMatrix,
    labels: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>) {
    full_loss_grad(ModelKind::Svm, weights, xs, labels, l2)
}

fn full_loss_grad(
    kind: ModelKind,
    weights: &[Vec<f64>],
    xs: &DesignMatrix,
    labels: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>) {
    let cols = xs.cols();
    let flat: Vec<f64> = weights.iter().flatten().copied().collect();
    assert_eq!(flat.len() % cols, 0, "weight rows must be dim + 1 long");
    let batch: Vec<usize> = (0..xs.rows()).collect();
    let mut grad = vec![0.0; flat.len()];
    let loss = batch_loss_grad(kind, &flat, xs, labels, &batch, l2, &mut grad, true);
    let rows = grad.chunks_exact(cols).map(|r| r.to_vec()).collect();
    (loss, rows)
}

fn resolve_labels(y: &[&str], space: &LabelSpace) -> Result<Vec<usize>, TrainError> {
    y.iter()
        .map(|name| {
            space
                .index_of(name)
                .ok_or_else(|| TrainError::LabelOutsideSpace(name.to_string()))
        })
        .collect()
}

fn check_features(x: &[FeatureVector]) -> Result<(), TrainError> {
    let kind = x[0].kind;
    let dim = x[0].dim();
    for fv in x {
        if fv.kind != kind || fv.dim() != dim {
            return Err(TrainError::InconsistentFeatureDims {
                kind,
                expected: dim,
                got: fv.dim(),
            });
        }
    }
    Ok(())
}

fn fit(
    kind: ModelKind,
    x: &[FeatureVector],
    y: &[&str],
    space: &LabelSpace,
    feature_config: &FeatureConfig,
    tc: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    tc.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(TrainError::EmptyTrainingSet);
    }
    check_features(x)?;
    let labels = resolve_labels(y, space)?;

    let raw_rows: Vec<&[f64]> = x.iter().map(|fv| fv.values.as_slice()).collect();
    let standardizer = Standardizer::fit(&raw_rows);
    let mut buf = Vec::new();
    let standardized: Vec<Vec<f64>> = raw_rows
        .iter()
        .map(|row| {
            standardizer.apply(row, &mut buf);
            buf.clone()
        })
        .collect();
    let refs: Vec<&[f64]> = standardized.iter().map(|r| r.as_slice()).collect();
    let xs = DesignMatrix::from_rows(&refs);

    let cols = xs.cols();
    let classes = space.len();
    let mut weights = vec![0.0; classes * cols];
    let mut grad = vec![0.0; classes * cols];
    let mut order: Vec<usize> = (0..xs.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    for _ in 0..tc.epochs_sgd {
        order.shuffle(&mut rng);
        for batch in order.chunks(tc.batch_size) {
            batch_loss_grad(
                kind,
                &weights,
                &xs,
                &labels,
                batch,
                tc.l2_lambda,
                &mut grad,
                false,
            );
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= tc.learning_rate * g;
            }
        }
    }

    let rows: Vec<Vec<f64>> = weights.chunks_exact(cols).map(|r| r.to_vec()).collect();
    LinearModel::from_parts(
        kind,
        space.clone(),
        x[0].kind,
        feature_config.clone(),
        standardizer,
        rows,
    )
}

/// Trains a multinomial logistic-regression model by seeded mini-batch
/// gradient descent on the softmax cross-entropy objective.
pub fn train_logreg(
    x: &[FeatureVector],
    y: &[&str],
    space: &LabelSpace,
    feature_config: &FeatureConfig,
    tc: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    fit(ModelKind::Logreg, x, y, space, feature_config, tc)
}

/// Trains a one-vs-rest linear SVM with the same optimizer, one binary
/// hinge objective per class; prediction takes the argmax of the class
/// scores.
pub fn train_svm(
    x: &[FeatureVector],
    y: &[&str],
    space: &LabelSpace,
    feature_config: &FeatureConfig,
    tc: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    fit(ModelKind::Svm, x, y, space, feature_config, tc)
}

/// Compares the analytic batch gradient against central finite
/// differences, returning the max over weights of
/// `|ga - gn| / max(1, |ga| + |gn|)`.
///
/// For the SVM the weights must sit away from hinge kinks: any sample
/// with `|1 - s * w_c.x| < 10 * eps` makes the finite difference
/// straddle a non-differentiable point and is rejected.
pub fn gradient_check(
    kind: ModelKind,
    x: &[FeatureVector],
    y: &[&str],
    space: &LabelSpace,
    weight_rows: &[Vec<f64>],
    eps: f64,
    l2: f64,
) -> Result<f64, TrainError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(TrainError::EmptyTrainingSet);
    }
    check_features(x)?;
    let labels = resolve_labels(y, space)?;
    let raw_rows: Vec<&[f64]> = x.iter().map(|fv| fv.values.as_slice()).collect();
    let xs = DesignMatrix::from_rows(&raw_rows);
    let cols = xs.cols();
    let mut flat: Vec<f64> = weight_rows.iter().flatten().copied().collect();
    assert_eq!(flat.len(), space.len() * cols, "weight shape mismatch");

    if kind == ModelKind::Svm {
        let threshold = 10.0 * eps;
        for (i, &label) in labels.iter().enumerate() {
            for c in 0..space.len() {
                let sign = if label == c { 1.0 } else { -1.0 };
                let margin = sign * dot(&flat[c * cols..(c + 1) * cols], xs.row(i));
                if (1.0 - margin).abs() < threshold {
                    return Err(TrainError::KinkTooClose(threshold));
                }
            }
        }
    }

    let batch: Vec<usize> = (0..xs.rows()).collect();
    let mut analytic = vec![0.0; flat.len()];
    batch_loss_grad(kind, &flat, &xs, &labels, &batch, l2, &mut analytic, false);

    let mut scratch = vec![0.0; flat.len()];
    let mut worst = 0.0f64;
    for j in 0..flat.len() {
        let saved = flat[j];
        flat[j] = saved + eps;
        let up = batch_loss_grad(kind, &flat, &xs, &labels, &batch, l2, &mut scratch, true);
        flat[j] = saved - eps;
        let down = batch_loss_grad(kind, &flat, &xs, &labels, &batch, l2, &mut scratch, true);
        flat[j] = saved;
        let numeric = (up - down) / (2.0 * eps);
        let denom = 1.0f64.max(analytic[j].abs() + numeric.abs());
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(worst)
}
