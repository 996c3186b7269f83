//! Action-selection policies over an oracle's per-action predictions.
//!
//! SquareCB assigns every non-greedy action `1 / (mu + gamma * gap)` with
//! `mu = |A_t|` and gives the remaining mass to the greedy action. With
//! `mu = |A_t|` each non-greedy probability is at most `1 / |A_t|`, so the
//! greedy probability is at least `1 / |A_t|` and never negative.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ActionId;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("empty prediction vector")]
    Empty,
    #[error("duplicate action {0} in predictions")]
    Duplicate(ActionId),
    #[error("prediction {value} for action {action} outside [0, 1]")]
    BadPrediction { action: ActionId, value: f64 },
    #[error("epsilon {0} outside [0, 1]")]
    BadEpsilon(f64),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
}

/// Oracle predictions over the eligible set, in eligible-set order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector {
    by_action: Vec<(ActionId, f64)>,
}

impl PredictionVector {
    pub fn new(by_action: Vec<(ActionId, f64)>) -> Result<Self, PolicyError> {
        if by_action.is_empty() {
            return Err(PolicyError::Empty);
        }
        for (k, &(a, p)) in by_action.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(PolicyError::BadPrediction { action: a, value: p });
            }
            if by_action[..k].iter().any(|&(b, _)| b == a) {
                return Err(PolicyError::Duplicate(a));
            }
        }
        Ok(Self { by_action })
    }

    pub fn as_slice(&self) -> &[(ActionId, f64)] {
        &self.by_action
    }

    pub fn len(&self) -> usize {
        self.by_action.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_action.is_empty()
    }

    pub fn get(&self, a: ActionId) -> Option<f64> {
        self.by_action.iter().find(|(b, _)| *b == a).map(|&(_, p)| p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<(ActionId, f64)>,
    greedy: ActionId,
}

impl ActionDistribution {
    /// Validates normalization (within 1e-9), ranges and greedy dominance.
    pub fn new(probs: Vec<(ActionId, f64)>, greedy: ActionId) -> Result<Self, PolicyError> {
        if probs.is_empty() {
            return Err(PolicyError::Empty);
        }
        let sum: f64 = probs.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::BadDistribution(format!("sums to {sum}")));
        }
        if probs.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            return Err(PolicyError::BadDistribution("probability outside [0, 1]".into()));
        }
        let pg = probs
            .iter()
            .find(|(a, _)| *a == greedy)
            .map(|&(_, p)| p)
            .ok_or_else(|| PolicyError::BadDistribution(format!("greedy {greedy} absent")))?;
        if probs.iter().any(|&(_, p)| p > pg) {
            return Err(PolicyError::BadDistribution("greedy action is not maximal".into()));
        }
        Ok(Self { probs, greedy })
    }

    pub fn probs(&self) -> &[(ActionId, f64)] {
        &self.probs
    }

    pub fn greedy(&self) -> ActionId {
        self.greedy
    }

    pub fn prob(&self, a: ActionId) -> f64 {
        self.probs
            .iter()
            .find(|(b, _)| *b == a)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Probability of choosing anything other than the greedy action.
    pub fn exploration_mass(&self) -> f64 {
        self.probs
            .iter()
            .filter(|(a, _)| *a != self.greedy)
            .map(|&(_, p)| p)
            .sum()
    }
}

impl fmt::Display for ActionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .probs
            .iter()
            .map(|(a, p)| format!("({a}, {p:.9})"))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Greedy,
    EpsilonGreedy { epsilon: f64 },
    #[serde(rename = "squarecb")]
    SquareCb { gamma: f64 },
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            PolicyConfig::Greedy => Ok(()),
            PolicyConfig::EpsilonGreedy { epsilon } => check_epsilon(epsilon),
            PolicyConfig::SquareCb { gamma } => check_gamma(gamma),
        }
    }

    pub fn distribution(&self, preds: &PredictionVector) -> Result<ActionDistribution, PolicyError> {
        match *self {
            PolicyConfig::Greedy => epsilon_greedy_distribution(preds, 0.0),
            PolicyConfig::EpsilonGreedy { epsilon } => epsilon_greedy_distribution(preds, epsilon),
            PolicyConfig::SquareCb { gamma } => squarecb_distribution(preds, gamma),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            PolicyConfig::Greedy => "greedy".into(),
            PolicyConfig::EpsilonGreedy { epsilon } => format!("epsilon_greedy({epsilon})"),
            PolicyConfig::SquareCb { gamma } => format!("squarecb({gamma})"),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), PolicyError> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(PolicyError::BadEpsilon(epsilon))
    }
}

fn check_gamma(gamma: f64) -> Result<(), PolicyError> {
    if gamma > 0.0 && !gamma.is_nan() {
        Ok(())
    } else {
        Err(PolicyError::BadGamma(gamma))
    }
}

/// Argmax of the predictions; ties go to the lowest action id.
pub fn greedy_action(preds: &PredictionVector) -> ActionId {
    let mut best = preds.by_action[0];
    for &(a, p) in &preds.by_action[1..] {
        if p > best.1 || (p == best.1 && a < best.0) {
            best = (a, p);
        }
    }
    best.0
}

/// Greedy with probability `1 - eps`, otherwise uniform over all eligible
/// actions (the greedy one included).
pub fn epsilon_greedy_distribution(
    preds: &PredictionVector,
    epsilon: f64,
) -> Result<ActionDistribution, PolicyError> {
    check_epsilon(epsilon)?;
    let greedy = greedy_action(preds);
    let share = epsilon / preds.len() as f64;
    let probs = preds
        .by_action
        .iter()
        .map(|&(a, _)| {
            if a == greedy {
                (a, 1.0 - epsilon + share)
            } else {
                (a, share)
            }
        })
        .collect();
    Ok(ActionDistribution { probs, greedy })
}

pub fn squarecb_distribution(
    preds: &PredictionVector,
    gamma: f64,
) -> Result<ActionDistribution, PolicyError> {
    check_gamma(gamma)?;
    let greedy = greedy_action(preds);
    let best = preds.get(greedy).expect("greedy is present");
    let mu = preds.len() as f64;
    let mut others = 0.0;
    let mut probs: Vec<(ActionId, f64)> = preds
        .by_action
        .iter()
        .map(|&(a, r)| {
            if a == greedy {
                (a, 0.0)
            } else {
                let p = 1.0 / (mu + gamma * (best - r));
                others += p;
                (a, p)
            }
        })
        .collect();
    for entry in probs.iter_mut() {
        if entry.0 == greedy {
            entry.1 = 1.0 - others;
        }
    }
    Ok(ActionDistribution { probs, greedy })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub action: ActionId,
    pub propensity: f64,
    pub was_greedy: bool,
}

/// Draw one action by inverse CDF with the greedy action placed first.
///
/// Consuming exactly one uniform per call couples draws across policies:
/// with a shared stream, shrinking the exploration mass can only turn
/// non-greedy draws into greedy ones.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> SampledAction {
    let u: f64 = rng.random();
    let pg = dist.prob(dist.greedy);
    let greedy = SampledAction {
        action: dist.greedy,
        propensity: pg,
        was_greedy: true,
    };
    if u < pg {
        return greedy;
    }
    let mut acc = pg;
    let mut last = None;
    for &(a, p) in &dist.probs {
        if a == dist.greedy || p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some((a, p));
        if u < acc {
            break;
        }
    }
    match last {
        Some((action, propensity)) => SampledAction {
            action,
            propensity,
            was_greedy: false,
        },
        None => greedy,
    }
}
