//! Multiclass linear models: one-vs-rest hinge-loss SVM and multinomial
//! logistic regression, trained by seeded mini-batch gradient descent.

mod persist;
mod train;

pub use persist::{load_model, model_from_json, model_to_json, save_model, ModelIoError, FORMAT_VERSION};
pub use train::{
    gradient_check, logreg_loss_grad, svm_loss_grad, train_logreg, train_svm, DesignMatrix,
    TrainConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureKind, FeatureVector};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {0:?} is outside the label space")]
    LabelOutsideSpace(String),
    #[error("inconsistent feature dims: expected {expected} ({kind}), got {got}")]
    InconsistentFeatureDims {
        kind: FeatureKind,
        expected: usize,
        got: usize,
    },
    #[error("feature mismatch: model expects {expected_kind} dim {expected_dim}, got {got_kind} dim {got_dim}")]
    FeatureMismatch {
        expected_kind: FeatureKind,
        expected_dim: usize,
        got_kind: FeatureKind,
        got_dim: usize,
    },
    #[error("operation requires a {expected} model")]
    WrongModelKind { expected: ModelKind },
    #[error("weights sit within {0} of a hinge kink; gradient check is ill-defined there")]
    KinkTooClose(f64),
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
}

/// What the classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Country,
    Year,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Country => "country",
            Task::Year => "year",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Logreg,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Logreg => "logreg",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered, distinct class labels for one task. The order is fixed for
/// the lifetime of any model built on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    task: Task,
    labels: Vec<String>,
}

impl LabelSpace {
    /// Labels must be non-empty and distinct. A single label is
    /// accepted so degenerate one-class training sets still predict.
    pub fn new(task: Task, labels: Vec<String>) -> Result<Self, TrainError> {
        if labels.is_empty() {
            return Err(TrainError::InvalidLabelSpace("no labels".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if a.is_empty() {
                return Err(TrainError::InvalidLabelSpace("empty label name".into()));
            }
            if labels[..i].contains(a) {
                return Err(TrainError::InvalidLabelSpace(format!(
                    "duplicate label {a:?}"
                )));
            }
        }
        Ok(Self { task, labels })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Per-dimension shift and scale fitted on the training set and applied
/// again at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Zero-mean unit-variance transform with a variance floor of 1e-8.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let n = rows.len() as f64;
        let dim = rows.first().map_or(0, |r| r.len());
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                let d = v - m;
                *s += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|s| (s / n).max(1e-8).sqrt())
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(self.mean.iter().zip(self.scale.iter()))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }
}

/// Per-class weight rows (last column is the bias term) plus everything
/// needed to reproduce the feature extraction at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    kind: ModelKind,
    label_space: LabelSpace,
    feature_kind: FeatureKind,
    feature_dim: usize,
    feature_config: FeatureConfig,
    config_fingerprint: String,
    standardizer: Standardizer,
    /// Flat row-major, `labels.len()` rows of `feature_dim + 1` values.
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn from_parts(
        kind: ModelKind,
        label_space: LabelSpace,
        feature_kind: FeatureKind,
        feature_config: FeatureConfig,
        standardizer: Standardizer,
        weight_rows: Vec<Vec<f64>>,
    ) -> Result<Self, TrainError> {
        let classes = label_space.len();
        if weight_rows.len() != classes {
            return Err(TrainError::InvalidLabelSpace(format!(
                "{} weight rows for {} labels",
                weight_rows.len(),
                classes
            )));
        }
        let cols = weight_rows[0].len();
        if cols < 2 {
            return Err(TrainError::InvalidConfig(
                "weight rows need at least one feature plus bias".into(),
            ));
        }
        if weight_rows.iter().any(|r| r.len() != cols) {
            return Err(TrainError::InvalidConfig(
                "ragged weight matrix".into(),
            ));
        }
        if standardizer.mean.len() != cols - 1 || standardizer.scale.len() != cols - 1 {
            return Err(TrainError::InvalidConfig(
                "standardizer length must match the feature dimension".into(),
            ));
        }
        let weights: Vec<f64> = weight_rows.into_iter().flatten().collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::InvalidConfig("non-finite weight".into()));
        }
        let config_fingerprint = feature_config.fingerprint();
        Ok(Self {
            kind,
            label_space,
            feature_kind,
            feature_dim: cols - 1,
            feature_config,
            config_fingerprint,
            standardizer,
            weights,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks_exact(self.feature_dim + 1)
            .map(|r| r.to_vec())
            .collect()
    }

    fn check_input(&self, x: &FeatureVector) -> Result<(), TrainError> {
        if x.kind != self.feature_kind || x.dim() != self.feature_dim {
            return Err(TrainError::FeatureMismatch {
                expected_kind: self.feature_kind,
                expected_dim: self.feature_dim,
                got_kind: x.kind,
                got_dim: x.dim(),
            });
        }
        Ok(())
    }

    fn scores_of_standardized(&self, z: &[f64]) -> Vec<f64> {
        let cols = self.feature_dim + 1;
        self.weights
            .chunks_exact(cols)
            .map(|row| {
                let dot: f64 = row[..self.feature_dim]
                    .iter()
                    .zip(z.iter())
                    .map(|(w, v)| w * v)
                    .sum();
                dot + row[self.feature_dim]
            })
            .collect()
    }
}

/// Raw per-class scores `W * x` with the stored standardization applied
/// to `x` first.
pub fn predict_scores(model: &LinearModel, x: &FeatureVector) -> Result<Vec<f64>, TrainError> {
    model.check_input(x)?;
    let mut z = Vec::with_capacity(model.feature_dim);
    model.standardizer.apply(&x.values, &mut z);
    Ok(model.scores_of_standardized(&z))
}

/// Numerically stable softmax: subtracts the max score before
/// exponentiating.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Class distribution under a logistic-regression model.
pub fn predict_proba(model: &LinearModel, x: &FeatureVector) -> Result<Vec<f64>, TrainError> {
    if model.kind != ModelKind::Logreg {
        return Err(TrainError::WrongModelKind {
            expected: ModelKind::Logreg,
        });
    }
    Ok(softmax(&predict_scores(model, x)?))
}

/// Label of the highest score; exact ties resolve to the lowest label
/// index.
pub fn predict_label<'m>(
    model: &'m LinearModel,
    x: &FeatureVector,
) -> Result<&'m str, TrainError> {
    let scores = predict_scores(model, x)?;
    Ok(&model.label_space.labels()[argmax(&scores)])
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector::new(FeatureKind::Hist, values)
    }

    fn space(names: &[&str]) -> LabelSpace {
        LabelSpace::new(Task::Country, names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn model_with_rows(rows: Vec<Vec<f64>>, labels: &[&str]) -> LinearModel {
        let dim = rows[0].len() - 1;
        LinearModel::from_parts(
            ModelKind::Logreg,
            space(labels),
            FeatureKind::Hist,
            FeatureConfig::default(),
            Standardizer::identity(dim),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn label_space_rejects_duplicates_and_empties() {
        assert!(LabelSpace::new(Task::Year, vec![]).is_err());
        assert!(LabelSpace::new(Task::Year, vec!["a".into(), "a".into()]).is_err());
        assert!(LabelSpace::new(Task::Year, vec!["a".into(), "".into()]).is_err());
        assert!(LabelSpace::new(Task::Year, vec!["only".into()]).is_ok());
    }

    #[test]
    fn zero_weights_give_zero_scores_and_uniform_proba() {
        let model = model_with_rows(vec![vec![0.0; 4]; 3], &["a", "b", "c"]);
        let x = fv(vec![1.0, -2.0, 0.5]);
        assert_eq!(predict_scores(&model, &x).unwrap(), vec![0.0, 0.0, 0.0]);
        let p = predict_proba(&model, &x).unwrap();
        for v in &p {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(predict_label(&model, &x).unwrap(), "a");
    }

    #[test]
    fn identity_weights_select_basis_column() {
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let model = model_with_rows(rows, &["a", "b", "c"]);
        let e1 = fv(vec![0.0, 1.0, 0.0]);
        assert_eq!(predict_scores(&model, &e1).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(predict_label(&model, &e1).unwrap(), "b");
    }

    #[test]
    fn scores_match_straight_line_dot_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let model = model_with_rows(rows.clone(), &["a", "b", "c", "d"]);
        let got = predict_scores(&model, &fv(x.clone())).unwrap();
        for (row, g) in rows.iter().zip(&got) {
            let mut expect = row[5];
            for j in 0..5 {
                expect += row[j] * x[j];
            }
            assert_relative_eq!(*g, expect, epsilon = 1e-12);
        }
        let labels = ["a", "b", "c", "d"];
        assert_eq!(
            predict_label(&model, &fv(x)).unwrap(),
            labels[argmax(&got)]
        );
    }

    #[test]
    fn proba_reference_point_and_shift_invariance() {
        let p = softmax(&[1000.0, 1000.0 + 3.0f64.ln()]);
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-9);
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-9);

        let scores = [0.3, -1.2, 2.0, 0.0];
        let base = softmax(&scores);
        let shifted: Vec<f64> = scores.iter().map(|s| s + 17.5).collect();
        for (a, b) in base.iter().zip(softmax(&shifted)) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_relative_eq!(base.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn proba_requires_logreg() {
        let mut model = model_with_rows(vec![vec![0.0; 3]; 2], &["a", "b"]);
        model.kind = ModelKind::Svm;
        assert!(matches!(
            predict_proba(&model, &fv(vec![0.0, 0.0])).unwrap_err(),
            TrainError::WrongModelKind { .. }
        ));
    }

    #[test]
    fn feature_mismatch_is_rejected() {
        let model = model_with_rows(vec![vec![0.0; 3]; 2], &["a", "b"]);
        let wrong_dim = fv(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            predict_scores(&model, &wrong_dim).unwrap_err(),
            TrainError::FeatureMismatch { .. }
        ));
        let wrong_kind = FeatureVector::new(FeatureKind::Hog, vec![1.0, 2.0]);
        assert!(matches!(
            predict_scores(&model, &wrong_kind).unwrap_err(),
            TrainError::FeatureMismatch { .. }
        ));
    }

    #[test]
    fn label_prediction_is_scale_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * 3.5).collect())
            .collect();
        let a = model_with_rows(rows, &["a", "b", "c"]);
        let b = model_with_rows(scaled, &["a", "b", "c"]);
        for _ in 0..50 {
            let x = fv((0..3).map(|_| rng.gen_range(-4.0..4.0)).collect());
            assert_eq!(
                predict_label(&a, &x).unwrap(),
                predict_label(&b, &x).unwrap()
            );
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let rows = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]];
        let model = model_with_rows(rows, &["a", "b", "c"]);
        assert_eq!(predict_label(&model, &fv(vec![2.0])).unwrap(), "a");
    }
}
