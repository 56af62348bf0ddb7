//! Versioned JSON model persistence.
//!
//! Weights round trip bit-exactly: serde_json emits the shortest
//! decimal that parses back to the identical f64.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureKind};

use super::{LabelSpace, LinearModel, ModelKind, Standardizer, Task};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot read model {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("cannot write model {path}: {reason}")]
    Write { path: String, reason: String },
    #[error("model file is not valid JSON: {0}")]
    Parse(String),
    #[error("unknown model format_version {0} (expected {FORMAT_VERSION})")]
    UnknownVersion(u32),
    #[error("invalid model file: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    task: Task,
    labels: Vec<String>,
    feature_kind: FeatureKind,
    feature_config: FeatureConfig,
    standardizer: Standardizer,
    weights: Vec<Vec<f64>>,
}

/// Serializes a model to its JSON document.
pub fn model_to_json(model: &LinearModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        kind: model.kind(),
        task: model.label_space().task(),
        labels: model.label_space().labels().to_vec(),
        feature_kind: model.feature_kind(),
        feature_config: model.feature_config().clone(),
        standardizer: model.standardizer().clone(),
        weights: model.weight_rows(),
    };
    let mut json = serde_json::to_string_pretty(&file).expect("model serializes");
    json.push('\n');
    json
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| ModelIoError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Loads and validates a model file. Unknown format versions fail
/// loudly rather than being parsed best-effort.
pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel, ModelIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelIoError::Read {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    model_from_json(&text)
}

pub fn model_from_json(text: &str) -> Result<LinearModel, ModelIoError> {
    let version: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelIoError::Parse(e.to_string()))?;
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(ModelIoError::UnknownVersion(v as u32)),
        None => return Err(ModelIoError::Invalid("missing format_version".into())),
    }
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelIoError::Parse(e.to_string()))?;
    let space = LabelSpace::new(file.task, file.labels)
        .map_err(|e| ModelIoError::Invalid(e.to_string()))?;
    LinearModel::from_parts(
        file.kind,
        space,
        file.feature_kind,
        file.feature_config,
        file.standardizer,
        file.weights,
    )
    .map_err(|e| ModelIoError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::learn::{predict_scores, train_svm, TrainConfig};
    use rand::{Rng, SeedableRng};

    fn trained_fixture() -> (LinearModel, Vec<FeatureVector>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x: Vec<FeatureVector> = (0..30)
            .map(|_| {
                FeatureVector::new(
                    FeatureKind::Hist,
                    (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                )
            })
            .collect();
        let names = ["a", "b", "c"];
        let y: Vec<&str> = (0..30).map(|i| names[i % 3]).collect();
        let ls = LabelSpace::new(Task::Country, names.iter().map(|s| s.to_string()).collect())
            .unwrap();
        let tc = TrainConfig {
            epochs_sgd: 20,
            ..TrainConfig::default()
        };
        let model = train_svm(&x, &y, &ls, &FeatureConfig::default(), &tc).unwrap();
        let probes: Vec<FeatureVector> = (0..100)
            .map(|_| {
                FeatureVector::new(
                    FeatureKind::Hist,
                    (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                )
            })
            .collect();
        (model, probes)
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let (model, probes) = trained_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.weight_rows(), model.weight_rows());
        assert_eq!(loaded.standardizer(), model.standardizer());
        assert_eq!(loaded.config_fingerprint(), model.config_fingerprint());
        for p in &probes {
            assert_eq!(
                predict_scores(&loaded, p).unwrap(),
                predict_scores(&model, p).unwrap()
            );
        }
        // saving the loaded model reproduces the original bytes
        assert_eq!(model_to_json(&loaded), model_to_json(&model));
    }

    #[test]
    fn unknown_version_fails_loudly() {
        let (model, _) = trained_fixture();
        let json = model_to_json(&model).replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            model_from_json(&json).unwrap_err(),
            ModelIoError::UnknownVersion(9)
        ));
    }

    #[test]
    fn garbage_and_invalid_models_are_rejected() {
        assert!(matches!(
            model_from_json("not json").unwrap_err(),
            ModelIoError::Parse(_)
        ));
        let (model, _) = trained_fixture();
        let json = model_to_json(&model).replace("\"a\"", "\"b\"");
        assert!(matches!(
            model_from_json(&json).unwrap_err(),
            ModelIoError::Invalid(_)
        ));
    }
}
