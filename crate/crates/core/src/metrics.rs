//! Diagnostics computed from persisted logs: rewards with Wilson intervals,
//! effective exploration overall and per action-set size, Lorenz curves,
//! traffic-weighted Gini, and relative uplift.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActionId, LogRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("baseline mean reward is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceLevel {
    #[serde(rename = "0.75")]
    P75,
    #[serde(rename = "0.95")]
    P95,
}

impl ConfidenceLevel {
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::P75 => 1.150_349,
            ConfidenceLevel::P95 => 1.959_964,
        }
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(
    successes: u64,
    n: u64,
    level: ConfidenceLevel,
) -> Result<(f64, f64), MetricsError> {
    if n == 0 || successes > n {
        return Err(MetricsError::InvalidCounts(format!("k={successes}, n={n}")));
    }
    let z = level.z();
    let z2 = z * z;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

fn non_empty(logs: &[LogRecord]) -> Result<(), MetricsError> {
    if logs.is_empty() {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

/// Share of rounds whose chosen action was not the oracle argmax.
pub fn effective_exploration_rate(logs: &[LogRecord]) -> Result<f64, MetricsError> {
    non_empty(logs)?;
    let explored = logs.iter().filter(|r| !r.was_greedy).count();
    Ok(explored as f64 / logs.len() as f64)
}

/// Propensity-weighted estimate of the mean non-greedy probability mass.
///
/// On greedy rounds the logged propensity is the greedy probability `g`, so
/// `(1 - g) / g` summed over greedy rounds and divided by `n` is unbiased for
/// `E[1 - g]`.
pub fn exploration_rate(logs: &[LogRecord]) -> Result<f64, MetricsError> {
    non_empty(logs)?;
    let total: f64 = logs
        .iter()
        .filter(|r| r.was_greedy)
        .map(|r| (1.0 - r.propensity) / r.propensity)
        .sum();
    Ok(total / logs.len() as f64)
}

/// Effective exploration within each `|eligible|` bucket.
pub fn exploration_by_action_size(logs: &[LogRecord]) -> Result<BTreeMap<usize, f64>, MetricsError> {
    non_empty(logs)?;
    let mut buckets: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in logs {
        let e = buckets.entry(r.eligible.len()).or_default();
        e.0 += u64::from(!r.was_greedy);
        e.1 += 1;
    }
    Ok(buckets
        .into_iter()
        .map(|(k, (x, n))| (k, x as f64 / n as f64))
        .collect())
}

pub fn positive_rate(logs: &[LogRecord]) -> Result<f64, MetricsError> {
    non_empty(logs)?;
    let pos: u64 = logs.iter().map(|r| u64::from(r.reward)).sum();
    Ok(pos as f64 / logs.len() as f64)
}

/// `(reward sum, rounds)` over exploration and exploitation rounds.
pub fn split_counts(logs: &[LogRecord]) -> ((u64, u64), (u64, u64)) {
    let mut explore = (0, 0);
    let mut exploit = (0, 0);
    for r in logs {
        let slot = if r.was_greedy { &mut exploit } else { &mut explore };
        slot.0 += u64::from(r.reward);
        slot.1 += 1;
    }
    (explore, exploit)
}

fn ratio_or_zero(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    pub points: Vec<(f64, f64)>,
}

/// Lorenz curve of action-selection counts, shares sorted ascending.
pub fn lorenz_curve(counts: &[u64]) -> Result<LorenzCurve, MetricsError> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(MetricsError::InvalidCounts("total count must be positive".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut acc = 0u64;
    for (i, c) in sorted.iter().enumerate() {
        acc += c;
        points.push(((i + 1) as f64 / n as f64, acc as f64 / total as f64));
    }
    Ok(LorenzCurve { points })
}

impl LorenzCurve {
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    /// Linear interpolation of the action share at a population share.
    pub fn at(&self, x: f64) -> f64 {
        for w in self.points.windows(2) {
            if x <= w[1].0 {
                let span = w[1].0 - w[0].0;
                if span <= 0.0 {
                    return w[1].1;
                }
                return w[0].1 + (x - w[0].0) / span * (w[1].1 - w[0].1);
            }
        }
        1.0
    }

    /// Largest vertical gap between two curves, checked at both sets of knots.
    pub fn sup_distance(&self, other: &LorenzCurve) -> f64 {
        self.points
            .iter()
            .chain(&other.points)
            .map(|&(x, _)| (self.at(x) - other.at(x)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("population_share,action_share\n");
        for (x, y) in &self.points {
            s.push_str(&format!("{x},{y}\n"));
        }
        s
    }
}

/// `1 - 2 * area` under the trapezoidal Lorenz curve.
///
/// Evaluated in integers: with cumulative sorted sums `S_i` and total `T`,
/// `1 - 2 * area = 1 - sum(S_{i-1} + S_i) / (n T)`, so one rounding remains.
pub fn gini(counts: &[u64]) -> Result<f64, MetricsError> {
    let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    if counts.is_empty() || total == 0 {
        return Err(MetricsError::InvalidCounts("total count must be positive".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mut acc = 0u128;
    let mut twice_area = 0u128;
    for &c in &sorted {
        let prev = acc;
        acc += u128::from(c);
        twice_area += prev + acc;
    }
    let denom = sorted.len() as u128 * total;
    Ok((denom - twice_area) as f64 / denom as f64)
}

/// Traffic-weighted mean of per-group Gini values.
pub fn traffic_weighted_gini(groups: &[(u64, Vec<u64>)]) -> Result<f64, MetricsError> {
    let mut num = 0.0;
    let mut den = 0u64;
    for (traffic, counts) in groups {
        if *traffic == 0 {
            continue;
        }
        num += *traffic as f64 * gini(counts)?;
        den += traffic;
    }
    if den == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(num / den as f64)
}

/// Per eligible-set signature: traffic and per-action selection counts, with
/// zero counts for eligible actions that were never chosen.
pub fn eligible_set_groups(logs: &[LogRecord]) -> BTreeMap<Vec<ActionId>, BTreeMap<ActionId, u64>> {
    let mut groups: BTreeMap<Vec<ActionId>, BTreeMap<ActionId, u64>> = BTreeMap::new();
    for r in logs {
        let mut key = r.eligible.clone();
        key.sort_unstable();
        let counts = groups
            .entry(key)
            .or_insert_with_key(|k| k.iter().map(|&a| (a, 0)).collect());
        *counts.entry(r.chosen).or_default() += 1;
    }
    groups
}

pub fn weighted_gini_of_logs(logs: &[LogRecord]) -> Result<f64, MetricsError> {
    let groups: Vec<(u64, Vec<u64>)> = eligible_set_groups(logs)
        .into_values()
        .map(|c| {
            let counts: Vec<u64> = c.into_values().collect();
            (counts.iter().sum(), counts)
        })
        .collect();
    traffic_weighted_gini(&groups)
}

/// Lorenz curve of pooled counts over every eligible set of size `size`.
///
/// Counts are kept per `(eligible set, action)` cell so that distinct sets of
/// the same size each contribute their own actions.
pub fn lorenz_for_size(logs: &[LogRecord], size: usize) -> Result<LorenzCurve, MetricsError> {
    let counts: Vec<u64> = eligible_set_groups(logs)
        .into_iter()
        .filter(|(k, _)| k.len() == size)
        .flat_map(|(_, c)| c.into_values())
        .collect();
    lorenz_curve(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uplift {
    /// `(mean_v - mean_b) / mean_b * 100`.
    pub relative_pct: f64,
    pub difference: f64,
    pub difference_ci95: (f64, f64),
    /// Delta-method interval on the relative uplift, in percent.
    pub relative_ci95: (f64, f64),
    pub excludes_zero: bool,
}

fn mean_var(rewards: &[u8]) -> (f64, f64) {
    let n = rewards.len() as f64;
    let m = rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / n;
    (m, m * (1.0 - m))
}

/// Relative uplift of variant over baseline rewards with normal-approximation
/// intervals.
pub fn uplift_rewards(variant: &[u8], baseline: &[u8]) -> Result<Uplift, MetricsError> {
    if variant.is_empty() || baseline.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mv, vv) = mean_var(variant);
    let (mb, vb) = mean_var(baseline);
    if mb == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    let (nv, nb) = (variant.len() as f64, baseline.len() as f64);
    let z = ConfidenceLevel::P95.z();
    let diff = mv - mb;
    let se_diff = (vv / nv + vb / nb).sqrt();
    let ratio = mv / mb;
    // d(mv/mb) = dmv/mb - mv dmb/mb^2
    let se_ratio = (vv / nv / (mb * mb) + mv * mv * vb / nb / mb.powi(4)).sqrt();
    let difference_ci95 = (diff - z * se_diff, diff + z * se_diff);
    Ok(Uplift {
        relative_pct: (ratio - 1.0) * 100.0,
        difference: diff,
        difference_ci95,
        relative_ci95: ((ratio - 1.0 - z * se_ratio) * 100.0, (ratio - 1.0 + z * se_ratio) * 100.0),
        excludes_zero: difference_ci95.0 > 0.0 || difference_ci95.1 < 0.0,
    })
}

pub fn uplift(variant: &[LogRecord], baseline: &[LogRecord]) -> Result<Uplift, MetricsError> {
    let v: Vec<u8> = variant.iter().map(|r| r.reward).collect();
    let b: Vec<u8> = baseline.iter().map(|r| r.reward).collect();
    uplift_rewards(&v, &b)
}

/// Percentile bootstrap interval for the relative uplift in percent.
pub fn bootstrap_uplift_ci<R: Rng + ?Sized>(
    variant: &[u8],
    baseline: &[u8],
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64), MetricsError> {
    if variant.is_empty() || baseline.is_empty() || resamples == 0 {
        return Err(MetricsError::Empty);
    }
    let resample_mean = |xs: &[u8], rng: &mut R| -> f64 {
        let s: u64 = (0..xs.len())
            .map(|_| u64::from(xs[rng.random_range(0..xs.len())]))
            .sum();
        s as f64 / xs.len() as f64
    };
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mv = resample_mean(variant, rng);
        let mb = resample_mean(baseline, rng);
        if mb > 0.0 {
            stats.push((mv / mb - 1.0) * 100.0);
        }
    }
    if stats.is_empty() {
        return Err(MetricsError::ZeroBaseline);
    }
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| stats[((p * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Ok((q(0.025), q(0.975)))
}

/// Per-generation summary. Every field is a function of that generation's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u32,
    pub rounds: u64,
    pub mean_reward: f64,
    pub exploration_rate: f64,
    pub effective_exploration: f64,
    pub exploration_round_mean_reward: f64,
    pub exploitation_round_mean_reward: f64,
    pub exploration_by_size: BTreeMap<usize, f64>,
    pub positive_rate: f64,
    pub gini: f64,
    pub ci75: (f64, f64),
    pub ci95: (f64, f64),
}

impl GenerationReport {
    pub fn from_logs(generation: u32, logs: &[LogRecord]) -> Result<Self, MetricsError> {
        non_empty(logs)?;
        let n = logs.len() as u64;
        let pos: u64 = logs.iter().map(|r| u64::from(r.reward)).sum();
        let ((xs, xn), (gs, gn)) = split_counts(logs);
        Ok(Self {
            generation,
            rounds: n,
            mean_reward: pos as f64 / n as f64,
            exploration_rate: exploration_rate(logs)?,
            effective_exploration: effective_exploration_rate(logs)?,
            exploration_round_mean_reward: ratio_or_zero(xs, xn),
            exploitation_round_mean_reward: ratio_or_zero(gs, gn),
            exploration_by_size: exploration_by_action_size(logs)?,
            positive_rate: positive_rate(logs)?,
            gini: weighted_gini_of_logs(logs)?,
            ci75: wilson_interval(pos, n, ConfidenceLevel::P75)?,
            ci95: wilson_interval(pos, n, ConfidenceLevel::P95)?,
        })
    }
}
