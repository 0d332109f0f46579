//! Linear logistic regression trained by full-batch gradient descent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dataset has no features")]
    NoFeatures,
    #[error("record {0} has a non-finite feature")]
    NonFinite(usize),
    #[error("model expects {expected} features, dataset has {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Serialized as `{"weights": [...], "bias": b, "threshold": t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl LogisticModel {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            bias: 0.0,
            threshold: 0.5,
        }
    }

    pub fn probability(&self, features: &[f64]) -> f64 {
        sigmoid(self.logit(features))
    }

    fn logit(&self, features: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// Ties (`sigmoid == threshold`) classify as positive.
    pub fn classify(&self, features: &[f64]) -> bool {
        self.probability(features) >= self.threshold
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::InvalidConfig("model has non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Recorded for provenance; zero initialisation with full-batch updates
    /// consumes no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Mean log-loss plus `l2 / 2 * |w|^2` (bias unpenalised).
pub fn loss(model: &LogisticModel, dataset: &Dataset, l2: f64) -> f64 {
    let n = dataset.len() as f64;
    let data: f64 = dataset
        .records()
        .iter()
        .map(|r| {
            let z = model.logit(&r.features);
            // log(1 + e^z) - y z, evaluated stably
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            softplus - if r.truth { z } else { 0.0 }
        })
        .sum();
    data / n + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`loss`]: `(d/dw, d/db)`.
pub fn gradient(model: &LogisticModel, dataset: &Dataset, l2: f64) -> (Vec<f64>, f64) {
    let n = dataset.len() as f64;
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = 0.0;
    for r in dataset.records() {
        let err = model.probability(&r.features) - r.truth as u8 as f64;
        for (g, x) in gw.iter_mut().zip(&r.features) {
            *g += err * x;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

fn validate(dataset: &Dataset) -> Result<(), ModelError> {
    if dataset.len() < 2 {
        return Err(ModelError::TooFewRecords(dataset.len()));
    }
    if dataset.feature_names().is_empty() {
        return Err(ModelError::NoFeatures);
    }
    let positives = dataset.records().iter().filter(|r| r.truth).count();
    if positives == 0 || positives == dataset.len() {
        return Err(ModelError::SingleClass);
    }
    if let Some(i) = dataset
        .records()
        .iter()
        .position(|r| r.features.iter().any(|x| !x.is_finite()))
    {
        return Err(ModelError::NonFinite(i));
    }
    Ok(())
}

/// Full-batch gradient descent from zero weights. A step that would raise
/// the loss is retried with half the learning rate, so the loss sequence is
/// non-increasing.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<LogisticModel, ModelError> {
    train_traced(dataset, config).map(|(m, _)| m)
}

/// Like [`train`], also returning the loss after each epoch (index 0 is the
/// initial loss).
pub fn train_traced(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(LogisticModel, Vec<f64>), ModelError> {
    validate(dataset)?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) || !(config.l2 >= 0.0) {
        return Err(ModelError::InvalidConfig(format!(
            "learning rate {} / l2 {}",
            config.learning_rate, config.l2
        )));
    }
    let mut model = LogisticModel::zeros(dataset.feature_names().len());
    let mut current = loss(&model, dataset, config.l2);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(current);
    let mut rate = config.learning_rate;
    for _ in 0..config.epochs {
        let (gw, gb) = gradient(&model, dataset, config.l2);
        loop {
            let candidate = LogisticModel {
                weights: model.weights.iter().zip(&gw).map(|(w, g)| w - rate * g).collect(),
                bias: model.bias - rate * gb,
                threshold: model.threshold,
            };
            let next = loss(&candidate, dataset, config.l2);
            if next <= current {
                model = candidate;
                current = next;
                break;
            }
            rate /= 2.0;
            if rate < f64::EPSILON * config.learning_rate {
                break;
            }
        }
        trace.push(current);
    }
    Ok((model, trace))
}

/// Copy of `dataset` with predictions from `model`.
pub fn predict(model: &LogisticModel, dataset: &Dataset) -> Result<Dataset, ModelError> {
    let found = dataset.feature_names().len();
    if found != model.weights.len() {
        return Err(ModelError::ArityMismatch {
            expected: model.weights.len(),
            found,
        });
    }
    let predictions: Vec<bool> = dataset
        .records()
        .iter()
        .map(|r| model.classify(&r.features))
        .collect();
    Ok(dataset.with_predictions(&predictions)?)
}

pub fn accuracy(dataset: &Dataset) -> f64 {
    let correct = dataset
        .records()
        .iter()
        .filter(|r| r.truth == r.prediction)
        .count();
    correct as f64 / dataset.len() as f64
}
