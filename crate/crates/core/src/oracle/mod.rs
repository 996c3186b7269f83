//! Regression oracles `f(x, a) ~ E[r | x, a]` trained offline on logged
//! batches with binary cross-entropy.
//!
//! Two families are provided: a logistic-linear model fit by mini-batch
//! gradient descent, and gradient-boosted regression trees with Newton leaf
//! weights. Both are train-then-freeze: there is no incremental update.

mod dataset;
mod logistic;
mod trees;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSchema, FeatureVector, Fingerprint};

pub use dataset::Dataset;
pub use logistic::{logistic_objective, train_logistic, train_logistic_traced, LogisticOracle};
pub use trees::{split_gain, train_trees, train_trees_traced, Node, Tree, TreesOracle};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("empty dataset")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("schema mismatch: oracle expects {expected}, got {got}")]
    SchemaMismatch { expected: Fingerprint, got: Fingerprint },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub const DEFAULT_PROBABILITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Logistic,
    Trees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: OracleKind,
    /// Epochs (logistic) or boosting rounds (trees).
    pub rounds: usize,
    /// Gradient step (logistic) or shrinkage (trees).
    pub step: f64,
    /// Row fraction per boosting round.
    pub subsample: f64,
    pub max_depth: usize,
    pub seed: u64,
    pub probability_clamp: f64,
    pub batch_size: usize,
    /// L2 penalty on logistic weights.
    pub l2: f64,
    /// L2 regularization of tree leaf weights.
    pub lambda: f64,
    /// Minimum hessian mass per tree child.
    pub min_child_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: OracleKind::Trees,
            rounds: 60,
            step: 0.3,
            subsample: 1.0,
            max_depth: 5,
            seed: 0,
            probability_clamp: DEFAULT_PROBABILITY_CLAMP,
            batch_size: 128,
            l2: 0.0,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn logistic() -> Self {
        Self {
            kind: OracleKind::Logistic,
            rounds: 8,
            step: 0.5,
            ..Self::default()
        }
    }

    pub fn trees() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::Config(m.to_string()));
        if self.kind == OracleKind::Logistic && self.rounds == 0 {
            return bad("rounds must be > 0 for the logistic oracle");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1");
        }
        if !(self.probability_clamp > 0.0 && self.probability_clamp < 0.5) {
            return bad("probability_clamp must lie in (0, 0.5)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0");
        }
        if !(self.l2 >= 0.0 && self.lambda >= 0.0 && self.min_child_weight >= 0.0) {
            return bad("regularization terms must be non-negative");
        }
        Ok(())
    }
}

/// A trained, frozen oracle of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    Logistic(LogisticOracle),
    Trees(TreesOracle),
}

impl Oracle {
    pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<Self, OracleError> {
        match cfg.kind {
            OracleKind::Logistic => train_logistic(data, cfg).map(Oracle::Logistic),
            OracleKind::Trees => train_trees(data, cfg).map(Oracle::Trees),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64, OracleError> {
        match self {
            Oracle::Logistic(o) => o.predict(x),
            Oracle::Trees(o) => o.predict(x),
        }
    }

    pub fn schema(&self) -> Fingerprint {
        match self {
            Oracle::Logistic(o) => o.schema,
            Oracle::Trees(o) => o.schema,
        }
    }

    pub fn kind(&self) -> OracleKind {
        match self {
            Oracle::Logistic(_) => OracleKind::Logistic,
            Oracle::Trees(_) => OracleKind::Trees,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("oracles serialize")
    }

    /// Parse a serialized oracle and check it was trained under `expected`.
    pub fn from_json(text: &str, expected: Option<Fingerprint>) -> Result<Self, OracleError> {
        let oracle: Oracle =
            serde_json::from_str(text).map_err(|e| OracleError::InvalidInput(e.to_string()))?;
        if let Some(fp) = expected {
            if oracle.schema() != fp {
                return Err(OracleError::SchemaMismatch {
                    expected: fp,
                    got: oracle.schema(),
                });
            }
        }
        Ok(oracle)
    }
}

/// A frozen oracle bundled with the feature layout it was trained under, so
/// that consumers can featurize logged contexts without the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleArtifact {
    pub features: FeatureSchema,
    pub oracle: Oracle,
}

impl OracleArtifact {
    pub fn new(features: FeatureSchema, oracle: Oracle) -> Result<Self, OracleError> {
        let fp = features.fingerprint();
        if fp != oracle.schema() {
            return Err(OracleError::SchemaMismatch {
                expected: oracle.schema(),
                got: fp,
            });
        }
        Ok(Self { features, oracle })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifacts serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let a: OracleArtifact =
            serde_json::from_str(text).map_err(|e| OracleError::InvalidInput(e.to_string()))?;
        Self::new(a.features, a.oracle)
    }

    pub fn predict(&self, ctx: &crate::types::Context, a: crate::types::ActionId) -> Result<f64, OracleError> {
        let x = crate::features::featurize(ctx, a, &self.features)
            .map_err(|e| OracleError::InvalidInput(e.to_string()))?;
        self.oracle.predict(&x)
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

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Mean binary cross-entropy with predictions clamped to `[clamp, 1 - clamp]`.
pub fn bce_loss(predictions: &[f64], labels: &[u8], clamp: f64) -> Result<f64, OracleError> {
    if predictions.len() != labels.len() {
        return Err(OracleError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(OracleError::Empty);
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| row_bce(clamp_prob(p, clamp), y))
        .sum();
    Ok(total / predictions.len() as f64)
}

#[inline]
pub(crate) fn row_bce(p: f64, y: u8) -> f64 {
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}
