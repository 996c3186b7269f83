//! Synthetic payment-like world.
//!
//! Contexts are drawn from uniform categoricals, a log-normal amount and
//! standard-normal extra covariates. Eligible actions come from a seeded rule
//! table over `(country, mcc, amount band, action)` followed by pruning of
//! actions whose observed authorization rate in the `(merchant, country)`
//! bucket is too low. Rewards are Bernoulli draws from a hidden logistic
//! model whose non-linear part is scaled by the misspecification strength.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSchema, SchemaError};
use crate::oracle::sigmoid;
use crate::types::{ActionId, ActionSet, Context, LogRecord, RngStream};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Standard-normal quantiles at 0.2, 0.4, 0.6, 0.8.
const QUINTILE_Z: [f64; 4] = [
    -0.841_621_233_572_914_3,
    -0.253_347_103_135_799_7,
    0.253_347_103_135_799_7,
    0.841_621_233_572_914_3,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub countries: u32,
    pub merchants: u32,
    pub mccs: u32,
    pub devices: u32,
    /// Log-normal location and scale of the amount.
    pub amount_log_mean: f64,
    pub amount_log_sd: f64,
    /// Min-max bounds used when featurizing the amount.
    pub amount_min: f64,
    pub amount_max: f64,
    pub extra_numeric_dim: usize,
    /// Global catalog size `A_max`.
    pub n_actions: u32,
    /// Bernoulli density of the rule table.
    pub rule_density: f64,
    pub rule_seed: u64,
    /// Rule rows with fewer eligible actions are redrawn.
    pub min_rule_eligible: u32,
    pub risk_min_samples: u64,
    pub risk_min_auth_rate: f64,
    pub hidden_seed: u64,
    /// Misspecification strength (lambda); 0 makes the reward exactly logistic in the features.
    pub misspecification: f64,
    /// Positive rate of the true-best policy that the intercept is solved for.
    pub target_positive_rate: f64,
    pub calibration_contexts: usize,
    pub context_effect_scale: f64,
    pub numeric_effect_scale: f64,
    pub action_effect_scale: f64,
    pub interaction_scale: f64,
    pub nonlinear_scale: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            countries: 6,
            merchants: 20,
            mccs: 24,
            devices: 3,
            amount_log_mean: 3.5,
            amount_log_sd: 1.0,
            amount_min: 0.0,
            amount_max: 500.0,
            extra_numeric_dim: 2,
            n_actions: 15,
            rule_density: 0.239,
            rule_seed: 47,
            min_rule_eligible: 2,
            risk_min_samples: 200,
            risk_min_auth_rate: 0.5,
            hidden_seed: 3,
            misspecification: 0.5,
            target_positive_rate: 0.90,
            calibration_contexts: 20_000,
            context_effect_scale: 0.83,
            numeric_effect_scale: 0.3,
            action_effect_scale: 1.56,
            interaction_scale: 1.79,
            nonlinear_scale: 1.09,
        }
    }
}

impl EnvConfig {
    /// Every context sees exactly `n` actions: full rule density, pruning off.
    pub fn pinned_action_count(n: u32) -> Self {
        Self {
            n_actions: n,
            rule_density: 1.0,
            min_rule_eligible: n.min(2),
            risk_min_samples: u64::MAX,
            ..Self::default()
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            countries: self.countries,
            merchants: self.merchants,
            mccs: self.mccs,
            devices: self.devices,
            extra_numeric_dim: self.extra_numeric_dim,
            n_actions: self.n_actions,
            amount_min: self.amount_min,
            amount_max: self.amount_max,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.countries < 1 || self.merchants < 1 || self.mccs < 1 || self.devices < 1 {
            return bad("cardinalities must be >= 1".into());
        }
        if self.n_actions < 2 {
            return bad(format!("n_actions must be >= 2, got {}", self.n_actions));
        }
        if !(0.0..=1.0).contains(&self.risk_min_auth_rate) {
            return bad("risk_min_auth_rate must lie in [0, 1]".into());
        }
        if !(self.rule_density > 0.0 && self.rule_density <= 1.0) {
            return bad("rule_density must lie in (0, 1]".into());
        }
        if self.min_rule_eligible < 1 || self.min_rule_eligible > self.n_actions {
            return bad("min_rule_eligible must lie in [1, n_actions]".into());
        }
        if !(self.amount_log_sd > 0.0) || !self.amount_log_mean.is_finite() {
            return bad("amount log-normal parameters invalid".into());
        }
        if !(self.amount_max > self.amount_min) {
            return bad("amount_max must exceed amount_min".into());
        }
        if !(self.misspecification >= 0.0) {
            return bad("misspecification must be >= 0".into());
        }
        if !(self.target_positive_rate > 0.0 && self.target_positive_rate < 1.0) {
            return bad("target_positive_rate must lie in (0, 1)".into());
        }
        if self.calibration_contexts == 0 {
            return bad("calibration_contexts must be > 0".into());
        }
        Ok(())
    }

    /// Short stable hash of the serialized config.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        crate::features::Fingerprint::of_bytes(text.as_bytes()).to_string()
    }
}

/// Per-`(merchant, country, action)` authorization counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskStats {
    buckets: BTreeMap<(u32, u32, u32), (u64, u64)>,
}

impl RiskStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// `(successes, total)` for a bucket.
    pub fn get(&self, merchant: u32, country: u32, action: ActionId) -> (u64, u64) {
        self.buckets
            .get(&(merchant, country, action.0))
            .copied()
            .unwrap_or((0, 0))
    }

    pub fn record(&mut self, merchant: u32, country: u32, action: ActionId, reward: u8) {
        let e = self.buckets.entry((merchant, country, action.0)).or_default();
        e.0 += u64::from(reward);
        e.1 += 1;
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

pub fn update_risk_stats(stats: &mut RiskStats, record: &LogRecord) {
    stats.record(
        record.context.merchant,
        record.context.country,
        record.chosen,
        record.reward,
    );
}

/// The hidden reward model. Only the environment reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenRewardModel {
    schema: FeatureSchema,
    /// Linear weights over the feature layout, interaction block included.
    weights: Vec<f64>,
    intercept: f64,
    /// Per action, weights on products `z_i * z_j` (`i <= j`) of standardized numerics.
    nonlinear: Vec<Vec<f64>>,
    lambda: f64,
    amount_log_mean: f64,
    amount_log_sd: f64,
}

impl HiddenRewardModel {
    fn sample(cfg: &EnvConfig, schema: &FeatureSchema) -> Self {
        use crate::features::Slot;
        let mut rng = RngStream::new(cfg.hidden_seed, 0).derive(&[0x4d4f_4445_4c]).rng();
        let mut normal = |scale: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        };
        let weights: Vec<f64> = (0..schema.len())
            .map(|j| match schema.slot(j).expect("in range") {
                Slot::Country(_) | Slot::Merchant(_) | Slot::Mcc(_) | Slot::Device(_) => {
                    normal(cfg.context_effect_scale)
                }
                Slot::Amount | Slot::Extra(_) => normal(cfg.numeric_effect_scale),
                Slot::Action(_) => normal(cfg.action_effect_scale),
                Slot::CountryAction(_, _) => normal(cfg.interaction_scale),
            })
            .collect();
        let m = 1 + cfg.extra_numeric_dim;
        let pairs = m * (m + 1) / 2;
        let nonlinear = (0..cfg.n_actions)
            .map(|_| (0..pairs).map(|_| normal(cfg.nonlinear_scale)).collect())
            .collect();
        Self {
            schema: schema.clone(),
            weights,
            intercept: 0.0,
            nonlinear,
            lambda: cfg.misspecification,
            amount_log_mean: cfg.amount_log_mean,
            amount_log_sd: cfg.amount_log_sd,
        }
    }

    /// All-zero model: every `(ctx, a)` has probability 1/2.
    pub fn zeros(cfg: &EnvConfig) -> Self {
        let schema = cfg.schema();
        let m = 1 + cfg.extra_numeric_dim;
        Self {
            weights: vec![0.0; schema.len()],
            intercept: 0.0,
            nonlinear: vec![vec![0.0; m * (m + 1) / 2]; cfg.n_actions as usize],
            lambda: cfg.misspecification,
            amount_log_mean: cfg.amount_log_mean,
            amount_log_sd: cfg.amount_log_sd,
            schema,
        }
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Logit without the intercept.
    fn partial_logit(&self, ctx: &Context, a: ActionId) -> f64 {
        let s = &self.schema;
        let w = &self.weights;
        let n = s.n_actions as usize;
        let mut z = 0.0;
        let mut off = 0usize;
        z += w[off + ctx.country as usize];
        off += s.countries as usize;
        z += w[off + ctx.merchant as usize];
        off += s.merchants as usize;
        z += w[off + ctx.merchant_category as usize];
        off += s.mccs as usize;
        z += w[off + ctx.device_type as usize];
        off += s.devices as usize;
        z += w[off] * s.scale_amount(ctx.amount);
        off += 1;
        for (k, &x) in ctx.extra_numeric.iter().enumerate() {
            z += w[off + k] * x;
        }
        off += s.extra_numeric_dim;
        z += w[off + a.index()];
        off += n;
        z += w[off + ctx.country as usize * n + a.index()];

        if self.lambda != 0.0 {
            let log_amount = ctx.amount.max(1e-12).ln();
            let z0 = (log_amount - self.amount_log_mean) / self.amount_log_sd;
            let nums: Vec<f64> = std::iter::once(z0)
                .chain(ctx.extra_numeric.iter().copied())
                .collect();
            let v = &self.nonlinear[a.index()];
            let mut k = 0;
            let mut nl = 0.0;
            for i in 0..nums.len() {
                for j in i..nums.len() {
                    nl += v[k] * nums[i] * nums[j];
                    k += 1;
                }
            }
            z += self.lambda * nl;
        }
        z
    }

    pub fn prob(&self, ctx: &Context, a: ActionId) -> f64 {
        sigmoid(self.intercept + self.partial_logit(ctx, a))
    }
}

pub fn true_reward_prob(ctx: &Context, a: ActionId, model: &HiddenRewardModel) -> f64 {
    model.prob(ctx, a)
}

pub fn draw_reward<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    u8::from(u < p)
}

pub fn gen_context<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Context {
    let country = rng.random_range(0..cfg.countries);
    let merchant = rng.random_range(0..cfg.merchants);
    let merchant_category = rng.random_range(0..cfg.mccs);
    let device_type = rng.random_range(0..cfg.devices);
    let amount = LogNormal::new(cfg.amount_log_mean, cfg.amount_log_sd)
        .expect("validated log-normal")
        .sample(rng);
    let extra_numeric = (0..cfg.extra_numeric_dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Context {
        amount,
        country,
        merchant,
        merchant_category,
        device_type,
        extra_numeric,
    }
}

/// Environment state fixed at construction: rule table, amount bands and the
/// calibrated hidden model.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    schema: FeatureSchema,
    band_edges: [f64; 4],
    rules: Vec<bool>,
    model: HiddenRewardModel,
}

impl Environment {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let schema = cfg.schema();
        let band_edges = QUINTILE_Z.map(|z| (cfg.amount_log_mean + cfg.amount_log_sd * z).exp());
        let rules = build_rule_table(&cfg)?;
        let model = HiddenRewardModel::sample(&cfg, &schema);
        let mut env = Self {
            cfg,
            schema,
            band_edges,
            rules,
            model,
        };
        env.calibrate_intercept()?;
        Ok(env)
    }

    /// Same world but with a caller-supplied hidden model.
    pub fn with_model(cfg: EnvConfig, model: HiddenRewardModel) -> Result<Self, EnvError> {
        let mut env = Self::new(cfg)?;
        env.model = model;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn hidden_model(&self) -> &HiddenRewardModel {
        &self.model
    }

    pub fn gen_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Context {
        gen_context(&self.cfg, rng)
    }

    pub fn amount_band(&self, amount: f64) -> usize {
        self.band_edges.iter().filter(|&&e| amount > e).count()
    }

    fn rule_row(&self, ctx: &Context) -> &[bool] {
        let n = self.cfg.n_actions as usize;
        let row = rule_row_index(&self.cfg, ctx.country, ctx.merchant_category, self.amount_band(ctx.amount));
        &self.rules[row * n..(row + 1) * n]
    }

    /// Rule filtering followed by risk pruning.
    pub fn eligible_actions(&self, ctx: &Context, stats: &RiskStats) -> Result<ActionSet, EnvError> {
        self.schema.validate(ctx)?;
        let row = self.rule_row(ctx);
        let mut rule_ok = Vec::new();
        let mut excluded_by_rule = Vec::new();
        for (a, &allowed) in row.iter().enumerate() {
            let id = ActionId(a as u32);
            if allowed {
                rule_ok.push(id);
            } else {
                excluded_by_rule.push(id);
            }
        }
        if rule_ok.is_empty() {
            return Err(EnvError::Config("rule filter left no eligible action".into()));
        }
        let mut eligible = Vec::with_capacity(rule_ok.len());
        let mut excluded_by_risk = Vec::new();
        for &a in &rule_ok {
            let (succ, total) = stats.get(ctx.merchant, ctx.country, a);
            let risky = total >= self.cfg.risk_min_samples
                && (succ as f64) < self.cfg.risk_min_auth_rate * total as f64;
            if risky {
                excluded_by_risk.push(a);
            } else {
                eligible.push(a);
            }
        }
        if eligible.is_empty() {
            // keep the rule-eligible action with the best observed rate
            let rate = |a: ActionId| {
                let (s, t) = stats.get(ctx.merchant, ctx.country, a);
                s as f64 / t.max(1) as f64
            };
            let keep = *excluded_by_risk
                .iter()
                .fold(None::<&ActionId>, |best, a| match best {
                    Some(b) if rate(*b) >= rate(*a) => Some(b),
                    _ => Some(a),
                })
                .expect("non-empty");
            excluded_by_risk.retain(|&a| a != keep);
            eligible.push(keep);
        }
        Ok(ActionSet {
            eligible,
            excluded_by_rule,
            excluded_by_risk,
        })
    }

    pub fn true_reward_prob(&self, ctx: &Context, a: ActionId) -> f64 {
        self.model.prob(ctx, a)
    }

    /// Mean true reward of the best rule-eligible action over a fixed
    /// calibration sample of contexts.
    pub fn oracle_best_rate(&self) -> f64 {
        let logits = self.calibration_best_logits();
        logits
            .iter()
            .map(|&b| sigmoid(self.model.intercept + b))
            .sum::<f64>()
            / logits.len() as f64
    }

    fn calibration_best_logits(&self) -> Vec<f64> {
        let mut rng = RngStream::new(self.cfg.hidden_seed, 0)
            .derive(&[0x4341_4c49_42])
            .rng();
        let empty = RiskStats::new();
        (0..self.cfg.calibration_contexts)
            .map(|_| {
                let ctx = self.gen_context(&mut rng);
                let set = self.eligible_actions(&ctx, &empty).expect("rule rows are non-empty");
                set.eligible
                    .iter()
                    .map(|&a| self.model.partial_logit(&ctx, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    fn calibrate_intercept(&mut self) -> Result<(), EnvError> {
        let logits = self.calibration_best_logits();
        let target = self.cfg.target_positive_rate;
        let rate = |c: f64| logits.iter().map(|&b| sigmoid(c + b)).sum::<f64>() / logits.len() as f64;
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.model.intercept = 0.5 * (lo + hi);
        Ok(())
    }
}

fn rule_row_index(cfg: &EnvConfig, country: u32, mcc: u32, band: usize) -> usize {
    (country as usize * cfg.mccs as usize + mcc as usize) * 5 + band
}

fn build_rule_table(cfg: &EnvConfig) -> Result<Vec<bool>, EnvError> {
    let n = cfg.n_actions as usize;
    let rows = cfg.countries as usize * cfg.mccs as usize * 5;
    let mut rng = RngStream::new(cfg.rule_seed, 0).derive(&[0x5255_4c45]).rng();
    let mut table = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        let mut attempts = 0;
        loop {
            let row: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < cfg.rule_density).collect();
            if row.iter().filter(|&&b| b).count() >= cfg.min_rule_eligible as usize {
                table.extend(row);
                break;
            }
            attempts += 1;
            if attempts > 100_000 {
                return Err(EnvError::Config(format!(
                    "rule_density {} cannot reach {} eligible actions per row",
                    cfg.rule_density, cfg.min_rule_eligible
                )));
            }
        }
    }
    Ok(table)
}
