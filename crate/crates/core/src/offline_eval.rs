//! Off-policy value estimates from logged feedback: clipped IPS and SNIPS.
//!
//! Target probabilities are always computed over the eligible set stored in
//! each record, never over a recomputed one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleArtifact;
use crate::policy::{PolicyConfig, PredictionVector};
use crate::types::LogRecord;

pub const DEFAULT_CLIP: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty logs")]
    Empty,
    #[error("record {round}: propensity {propensity} is not positive")]
    Propensity { round: u64, propensity: f64 },
    #[error("record {round}: target puts mass outside the logged eligible set")]
    Support { round: u64 },
    #[error("all importance weights are zero")]
    ZeroWeights,
    #[error("clip must be positive, got {0}")]
    Clip(f64),
    #[error("target policy failed: {0}")]
    Target(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ips,
    Snips,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffPolicyEstimate {
    pub estimator: Estimator,
    pub value: f64,
    /// Weight cap; `None` means unclipped.
    #[serde(rename = "M")]
    pub clip: Option<f64>,
    pub n: usize,
    pub ess: f64,
    pub max_weight: f64,
    pub mean_weight: f64,
}

/// Probability the target policy assigns to the logged action.
pub trait TargetPolicy {
    fn prob(&self, record: &LogRecord) -> Result<f64, EvalError>;
}

/// The policy that produced the logs: its probability is the logged propensity.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoggingPolicy;

impl TargetPolicy for LoggingPolicy {
    fn prob(&self, record: &LogRecord) -> Result<f64, EvalError> {
        Ok(record.propensity)
    }
}

/// A frozen oracle plus a policy rule.
#[derive(Debug, Clone)]
pub struct OraclePolicy<'a> {
    pub oracle: &'a OracleArtifact,
    pub policy: PolicyConfig,
}

impl TargetPolicy for OraclePolicy<'_> {
    fn prob(&self, record: &LogRecord) -> Result<f64, EvalError> {
        let target = |e: String| EvalError::Target(format!("record {}: {e}", record.round));
        let preds = record
            .eligible
            .iter()
            .map(|&a| {
                self.oracle
                    .predict(&record.context, a)
                    .map(|p| (a, p))
                    .map_err(|e| target(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let preds = PredictionVector::new(preds).map_err(|e| target(e.to_string()))?;
        let dist = self
            .policy
            .distribution(&preds)
            .map_err(|e| target(e.to_string()))?;
        Ok(dist.prob(record.chosen))
    }
}

impl<F: Fn(&LogRecord) -> f64> TargetPolicy for F {
    fn prob(&self, record: &LogRecord) -> Result<f64, EvalError> {
        Ok(self(record))
    }
}

/// Per-record clipped weights `min(pi(a|x) / p, M)`.
pub fn importance_weights<T: TargetPolicy + ?Sized>(
    logs: &[LogRecord],
    target: &T,
    clip: Option<f64>,
) -> Result<Vec<f64>, EvalError> {
    if let Some(m) = clip {
        if !(m > 0.0) {
            return Err(EvalError::Clip(m));
        }
    }
    logs.iter()
        .map(|r| {
            if !(r.propensity > 0.0) {
                return Err(EvalError::Propensity {
                    round: r.round,
                    propensity: r.propensity,
                });
            }
            if !r.eligible.contains(&r.chosen) {
                return Err(EvalError::Support { round: r.round });
            }
            let pi = target.prob(r)?;
            if !(0.0..=1.0 + 1e-12).contains(&pi) {
                return Err(EvalError::Target(format!(
                    "record {}: probability {pi} outside [0, 1]",
                    r.round
                )));
            }
            let w = pi / r.propensity;
            Ok(match clip {
                Some(m) => w.min(m),
                None => w,
            })
        })
        .collect()
}

fn summarize(estimator: Estimator, value: f64, clip: Option<f64>, weights: &[f64]) -> OffPolicyEstimate {
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    OffPolicyEstimate {
        estimator,
        value,
        clip,
        n: weights.len(),
        ess: if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 },
        max_weight: weights.iter().copied().fold(0.0, f64::max),
        mean_weight: sum / weights.len() as f64,
    }
}

pub fn ips_value<T: TargetPolicy + ?Sized>(
    logs: &[LogRecord],
    target: &T,
    clip: Option<f64>,
) -> Result<OffPolicyEstimate, EvalError> {
    if logs.is_empty() {
        return Err(EvalError::Empty);
    }
    let w = importance_weights(logs, target, clip)?;
    let total: f64 = logs
        .iter()
        .zip(&w)
        .map(|(r, w)| f64::from(r.reward) * w)
        .sum();
    Ok(summarize(Estimator::Ips, total / logs.len() as f64, clip, &w))
}

pub fn snips_value<T: TargetPolicy + ?Sized>(
    logs: &[LogRecord],
    target: &T,
    clip: Option<f64>,
) -> Result<OffPolicyEstimate, EvalError> {
    if logs.is_empty() {
        return Err(EvalError::Empty);
    }
    let w = importance_weights(logs, target, clip)?;
    let den: f64 = w.iter().sum();
    if den <= 0.0 {
        return Err(EvalError::ZeroWeights);
    }
    let num: f64 = logs
        .iter()
        .zip(&w)
        .map(|(r, w)| f64::from(r.reward) * w)
        .sum();
    Ok(summarize(Estimator::Snips, num / den, clip, &w))
}

pub fn estimate<T: TargetPolicy + ?Sized>(
    estimator: Estimator,
    logs: &[LogRecord],
    target: &T,
    clip: Option<f64>,
) -> Result<OffPolicyEstimate, EvalError> {
    match estimator {
        Estimator::Ips => ips_value(logs, target, clip),
        Estimator::Snips => snips_value(logs, target, clip),
    }
}
