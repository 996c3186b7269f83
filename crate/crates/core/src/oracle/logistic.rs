use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_prob, row_bce, sigmoid, Dataset, OracleError, OracleKind, TrainConfig};
use crate::features::{FeatureVector, Fingerprint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticOracle {
    pub schema: Fingerprint,
    pub clamp: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticOracle {
    pub fn zeros(schema: Fingerprint, n: usize, clamp: f64) -> Self {
        Self {
            schema,
            clamp,
            weights: vec![0.0; n],
            bias: 0.0,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64, OracleError> {
        if x.schema != self.schema || x.values.len() != self.weights.len() {
            return Err(OracleError::SchemaMismatch {
                expected: self.schema,
                got: x.schema,
            });
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(&x.values)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias;
        Ok(clamp_prob(sigmoid(z), self.clamp))
    }

    fn predict_row(&self, data: &Dataset, i: usize) -> f64 {
        clamp_prob(sigmoid(data.dot(i, &self.weights) + self.bias), self.clamp)
    }
}

/// Regularized mean BCE and its analytic gradient `(loss, d/dw, d/db)`.
///
/// The gradient uses `p - y` per row, which is exact wherever the clamp is
/// inactive.
pub fn logistic_objective(
    weights: &[f64],
    bias: f64,
    data: &Dataset,
    clamp: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    let mut total_w = 0.0;
    for i in 0..data.len() {
        let w = data.weight(i);
        let y = data.labels()[i];
        let p_raw = sigmoid(data.dot(i, weights) + bias);
        loss += w * row_bce(clamp_prob(p_raw, clamp), y);
        let r = w * (p_raw - f64::from(y));
        let (cols, vals) = data.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            grad[c as usize] += r * v;
        }
        grad_b += r;
        total_w += w;
    }
    let norm = if total_w > 0.0 { 1.0 / total_w } else { 0.0 };
    let mut penalty = 0.0;
    for (g, &wt) in grad.iter_mut().zip(weights) {
        *g = *g * norm + l2 * wt;
        penalty += 0.5 * l2 * wt * wt;
    }
    (loss * norm + penalty, grad, grad_b * norm)
}

fn training_loss(model: &LogisticOracle, data: &Dataset, l2: f64) -> f64 {
    let mut loss = 0.0;
    let mut total_w = 0.0;
    for i in 0..data.len() {
        let w = data.weight(i);
        loss += w * row_bce(model.predict_row(data, i), data.labels()[i]);
        total_w += w;
    }
    let penalty: f64 = model.weights.iter().map(|w| 0.5 * l2 * w * w).sum();
    loss / total_w.max(f64::MIN_POSITIVE) + penalty
}

pub fn train_logistic(data: &Dataset, cfg: &TrainConfig) -> Result<LogisticOracle, OracleError> {
    train_logistic_traced(data, cfg).map(|(m, _)| m)
}

/// Train and also return the objective after each epoch (index 0 is the
/// all-zero starting point). The returned model is the best epoch seen, so
/// its loss never exceeds the initial loss.
pub fn train_logistic_traced(
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LogisticOracle, Vec<f64>), OracleError> {
    cfg.validate()?;
    if cfg.kind != OracleKind::Logistic {
        return Err(OracleError::Config("expected kind = logistic".into()));
    }
    if data.is_empty() {
        return Err(OracleError::Empty);
    }
    let n_features = data.n_features();
    let mut model = LogisticOracle::zeros(data.schema(), n_features, cfg.probability_clamp);
    let mut best = model.clone();
    let mut best_loss = training_loss(&model, data, cfg.l2);
    let mut history = vec![best_loss];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n_features];
    let mut touched: Vec<usize> = Vec::new();
    let mut marked = vec![false; n_features];

    for _ in 0..cfg.rounds {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_b = 0.0;
            let mut total_w = 0.0;
            for &i in batch {
                let w = data.weight(i);
                let p = sigmoid(data.dot(i, &model.weights) + model.bias);
                let r = w * (p - f64::from(data.labels()[i]));
                let (cols, vals) = data.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    let c = c as usize;
                    if !marked[c] {
                        marked[c] = true;
                        touched.push(c);
                    }
                    grad[c] += r * v;
                }
                grad_b += r;
                total_w += w;
            }
            if total_w <= 0.0 {
                continue;
            }
            let scale = cfg.step / total_w;
            if cfg.l2 > 0.0 {
                for (w, g) in model.weights.iter_mut().zip(&grad) {
                    *w -= scale * g + cfg.step * cfg.l2 * *w;
                }
            } else {
                for &c in &touched {
                    model.weights[c] -= scale * grad[c];
                }
            }
            model.bias -= scale * grad_b;
            for &c in &touched {
                grad[c] = 0.0;
                marked[c] = false;
            }
            if cfg.l2 > 0.0 {
                grad.iter_mut().for_each(|g| *g = 0.0);
            }
            touched.clear();
        }
        if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
            return Err(OracleError::NonFinite);
        }
        let loss = training_loss(&model, data, cfg.l2);
        history.push(loss);
        if loss <= best_loss {
            best_loss = loss;
            best = model.clone();
        }
    }
    Ok((best, history))
}
