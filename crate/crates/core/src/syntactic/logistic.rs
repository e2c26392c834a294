//! L2-regularized logistic regression trained by full-batch gradient descent.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Correctness;

/// Scores at or below this are predicted correct.
pub const DEFAULT_THRESHOLD: f64 = 0.975;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            epochs: 2000,
            l2_penalty: 1e-4,
            seed: 42,
        }
    }
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Population mean and standard deviation; constant columns get std 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in rows {
            for ((s, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Trained model, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    /// Embedding dimension the features were built from.
    pub k: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
    pub threshold: f64,
    pub config: TrainingConfig,
}

impl PredictorModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PredictorModel =
            serde_json::from_str(text).map_err(|e| Error::json("model file", e))?;
        let d = model.weights.len();
        if model.standardization.mean.len() != d || model.standardization.std.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: model.standardization.mean.len().min(model.standardization.std.len()),
            });
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
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

// ln(1 + e^z) without overflow
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Mean cross-entropy plus `l2/2 * |w|^2`, on already standardized rows.
pub fn logistic_loss(weights: &[f64], bias: f64, rows: &[Vec<f64>], targets: &[f64], l2: f64) -> f64 {
    loss_and_gradient(weights, bias, rows, targets, l2).0
}

/// Loss with its gradient in the weights and the bias.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    rows: &[Vec<f64>],
    targets: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in rows.iter().zip(targets) {
        let z = dot(weights, x) + bias;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += r * xi;
        }
        grad_b += r;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(weights, weights);
    (loss, grad, grad_b)
}

fn validate(features: &[Vec<f64>], labels: &[Correctness], config: &TrainingConfig) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::SingleClassData);
    }
    let d = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: row.len(),
        });
    }
    let positives = labels.iter().filter(|l| l.is_overfitting()).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClassData);
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    if !(config.l2_penalty >= 0.0 && config.l2_penalty.is_finite()) {
        return Err(Error::InvalidConfig("l2 penalty must be non-negative".into()));
    }
    Ok(d)
}

/// Trains with `threshold` set to [`DEFAULT_THRESHOLD`]. `k` is recorded
/// in the model as-is.
pub fn lr_train(
    features: &[Vec<f64>],
    labels: &[Correctness],
    k: usize,
    config: &TrainingConfig,
) -> Result<PredictorModel> {
    lr_train_traced(features, labels, k, config).map(|(m, _)| m)
}

/// Like [`lr_train`], also returning the loss before each epoch and after
/// the last one (`epochs + 1` values).
pub fn lr_train_traced(
    features: &[Vec<f64>],
    labels: &[Correctness],
    k: usize,
    config: &TrainingConfig,
) -> Result<(PredictorModel, Vec<f64>)> {
    let d = validate(features, labels, config)?;
    let standardization = Standardization::fit(features);
    let rows: Vec<Vec<f64>> = features.iter().map(|r| standardization.apply(r)).collect();
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    let mut bias = 0.0;
    let mut losses = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..=config.epochs {
        let (loss, grad, grad_b) =
            loss_and_gradient(&weights, bias, &rows, &targets, config.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        if epoch == config.epochs {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_b;
    }

    let model = PredictorModel {
        k,
        weights,
        bias,
        standardization,
        threshold: DEFAULT_THRESHOLD,
        config: *config,
    };
    Ok((model, losses))
}

/// Probability that the patch is overfitting.
pub fn lr_predict(model: &PredictorModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim(),
            found: features.len(),
        });
    }
    let x = model.standardization.apply(features);
    Ok(sigmoid(dot(&model.weights, &x) + model.bias))
}

/// Correct iff `score <= threshold`.
pub fn classify_threshold(score: f64, threshold: f64) -> Correctness {
    if score <= threshold {
        Correctness::Correct
    } else {
        Correctness::Overfitting
    }
}
