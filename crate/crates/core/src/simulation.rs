//! The batch logged-feedback loop.
//!
//! Generation 0 is a shared uniform-random bootstrap. Each arm then runs
//! policy generations `1..=G`: train an oracle on its own window of logs,
//! freeze it, and serve `T` rounds with it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{update_risk_stats, EnvConfig, EnvError, Environment, RiskStats};
use crate::features::{featurize, Fingerprint, SchemaError};
use crate::metrics::{GenerationReport, MetricsError};
use crate::oracle::{Dataset, Oracle, OracleArtifact, OracleError, TrainConfig};
use crate::policy::{sample_action, ActionDistribution, PolicyConfig, PolicyError, PredictionVector};
use crate::types::{LogRecord, RngStream};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("schema mismatch: oracle {oracle}, featurizer {featurizer}")]
    SchemaMismatch {
        oracle: Fingerprint,
        featurizer: Fingerprint,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Sink(String),
}

const TAG_BOOTSTRAP: u64 = 0xb007;
const TAG_ARM: u64 = 0xa23;
const TAG_CONTEXT: u64 = 1;
const TAG_ACTION: u64 = 2;
const TAG_REWARD: u64 = 3;
const TAG_TRAIN: u64 = 4;
const TAG_MATCH: u64 = 0x3a7c;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingWindow {
    /// Only the previous generation's log.
    #[default]
    Latest,
    /// Every log so far, the bootstrap included.
    All,
}

/// One arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSpec {
    pub name: String,
    pub rounds_per_generation: u64,
    pub generations: u32,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub oracle: TrainConfig,
    #[serde(default)]
    pub training_window: TrainingWindow,
    /// Overrides the experiment seed for this arm's streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Name of an arm whose expected effective exploration this SquareCB arm
    /// is tuned to match before the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_exploration_to: Option<String>,
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.name.is_empty() {
            return Err(SimError::Config("arm name must be non-empty".into()));
        }
        if self.rounds_per_generation == 0 {
            return Err(SimError::Config(format!(
                "arm {}: rounds_per_generation must be > 0",
                self.name
            )));
        }
        if self.generations == 0 {
            return Err(SimError::Config(format!("arm {}: generations must be >= 1", self.name)));
        }
        self.policy.validate()?;
        self.oracle.validate()?;
        if self.match_exploration_to.is_some() && !matches!(self.policy, PolicyConfig::SquareCb { .. }) {
            return Err(SimError::Config(format!(
                "arm {}: match_exploration_to requires a squarecb policy",
                self.name
            )));
        }
        Ok(())
    }

    fn stream(&self, experiment_seed: u64) -> RngStream {
        RngStream::new(self.seed.unwrap_or(experiment_seed), 0).derive(&[TAG_ARM])
    }
}

/// Uniform-random logging over the eligible set.
///
/// With no oracle every prediction ties, so the lowest eligible id counts as
/// the greedy action.
pub fn bootstrap_gen0(
    env: &Environment,
    n: u64,
    stats: &mut RiskStats,
    stream: RngStream,
) -> Result<Vec<LogRecord>, SimError> {
    if n == 0 {
        return Err(SimError::Config("bootstrap_n must be >= 1".into()));
    }
    let mut ctx_rng = stream.derive(&[TAG_CONTEXT]).rng();
    let mut act_rng = stream.derive(&[TAG_ACTION]).rng();
    let mut rew_rng = stream.derive(&[TAG_REWARD]).rng();
    let mut logs = Vec::with_capacity(n as usize);
    for t in 0..n {
        let ctx = env.gen_context(&mut ctx_rng);
        let set = env.eligible_actions(&ctx, stats)?;
        let p = 1.0 / set.len() as f64;
        let dist = ActionDistribution::new(
            set.eligible.iter().map(|&a| (a, p)).collect(),
            set.eligible[0],
        )?;
        let s = sample_action(&dist, &mut act_rng);
        let reward = crate::environment::draw_reward(env.true_reward_prob(&ctx, s.action), &mut rew_rng);
        let record = LogRecord {
            generation: 0,
            round: t,
            context: ctx,
            eligible: set.eligible,
            chosen: s.action,
            propensity: p,
            reward,
            was_greedy: s.was_greedy,
        };
        update_risk_stats(stats, &record);
        logs.push(record);
    }
    Ok(logs)
}

pub fn bootstrap_stream(experiment_seed: u64) -> RngStream {
    RngStream::new(experiment_seed, 0).derive(&[TAG_BOOTSTRAP])
}

/// Oracle predictions over the eligible actions of one context.
pub fn predict_eligible(
    oracle: &OracleArtifact,
    ctx: &crate::types::Context,
    eligible: &[crate::types::ActionId],
) -> Result<PredictionVector, SimError> {
    let preds = eligible
        .iter()
        .map(|&a| Ok((a, oracle.oracle.predict(&featurize(ctx, a, &oracle.features)?)?)))
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(PredictionVector::new(preds)?)
}

fn check_schema(env: &Environment, oracle: &OracleArtifact) -> Result<(), SimError> {
    let featurizer = env.schema().fingerprint();
    if oracle.oracle.schema() != featurizer || oracle.features.fingerprint() != featurizer {
        return Err(SimError::SchemaMismatch {
            oracle: oracle.oracle.schema(),
            featurizer,
        });
    }
    Ok(())
}

/// Serve `rounds` rounds with a frozen oracle.
pub fn run_generation(
    policy: &PolicyConfig,
    oracle: &OracleArtifact,
    env: &Environment,
    stats: &mut RiskStats,
    rounds: u64,
    generation: u32,
    stream: RngStream,
) -> Result<Vec<LogRecord>, SimError> {
    check_schema(env, oracle)?;
    policy.validate()?;
    let g = u64::from(generation);
    let mut ctx_rng = stream.derive(&[g, TAG_CONTEXT]).rng();
    let mut act_rng = stream.derive(&[g, TAG_ACTION]).rng();
    let mut rew_rng = stream.derive(&[g, TAG_REWARD]).rng();
    let mut logs = Vec::with_capacity(rounds as usize);
    for t in 0..rounds {
        let ctx = env.gen_context(&mut ctx_rng);
        let set = env.eligible_actions(&ctx, stats)?;
        let preds = predict_eligible(oracle, &ctx, &set.eligible)?;
        let dist = policy.distribution(&preds)?;
        let s = sample_action(&dist, &mut act_rng);
        let reward = crate::environment::draw_reward(env.true_reward_prob(&ctx, s.action), &mut rew_rng);
        let record = LogRecord {
            generation,
            round: t,
            context: ctx,
            eligible: set.eligible,
            chosen: s.action,
            propensity: s.propensity,
            reward,
            was_greedy: s.was_greedy,
        };
        update_risk_stats(stats, &record);
        logs.push(record);
    }
    Ok(logs)
}

/// One row per record: features of `(context, chosen)` and the reward.
pub fn training_set<'a, I>(env: &Environment, logs: I) -> Result<Dataset, SimError>
where
    I: IntoIterator<Item = &'a LogRecord>,
{
    let schema = env.schema();
    let mut data = Dataset::new(schema.fingerprint(), schema.len());
    for r in logs {
        data.push(&featurize(&r.context, r.chosen, schema)?, r.reward)?;
    }
    Ok(data)
}

pub fn train_oracle(env: &Environment, data: &Dataset, cfg: &TrainConfig) -> Result<OracleArtifact, SimError> {
    let oracle = Oracle::train(data, cfg)?;
    Ok(OracleArtifact::new(env.schema().clone(), oracle)?)
}

fn train_seed(stream: RngStream, generation: u32, base: u64) -> u64 {
    let salt: u64 = stream.derive(&[u64::from(generation), TAG_TRAIN]).rng().random();
    base ^ salt
}

/// The oracle an arm serves in `generation`, trained on `window`.
pub fn train_generation_oracle<'a, I>(
    env: &Environment,
    spec: &GenerationSpec,
    experiment_seed: u64,
    generation: u32,
    window: I,
) -> Result<(OracleArtifact, Dataset), SimError>
where
    I: IntoIterator<Item = &'a LogRecord>,
{
    let data = training_set(env, window)?;
    let cfg = TrainConfig {
        seed: train_seed(spec.stream(experiment_seed), generation, spec.oracle.seed),
        ..spec.oracle.clone()
    };
    let oracle = train_oracle(env, &data, &cfg)?;
    Ok((oracle, data))
}

/// What an arm hands to its sink after each generation.
pub struct GenerationOutput<'a> {
    pub generation: u32,
    pub oracle: &'a OracleArtifact,
    pub logs: &'a [LogRecord],
    pub report: &'a GenerationReport,
    pub training_positive_rate: f64,
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub policy: PolicyConfig,
    pub policy_label: String,
    pub reports: Vec<GenerationReport>,
    /// Positive-label rate of the data each generation's oracle was trained on.
    pub training_positive_rate: Vec<f64>,
    pub training_rows: Vec<usize>,
}

/// Run every generation of one arm from the shared bootstrap state.
pub fn run_arm<F>(
    env: &Environment,
    spec: &GenerationSpec,
    experiment_seed: u64,
    gen0: &[LogRecord],
    stats0: &RiskStats,
    mut sink: F,
) -> Result<ArmResult, SimError>
where
    F: FnMut(GenerationOutput<'_>) -> Result<(), SimError>,
{
    spec.validate()?;
    let stream = spec.stream(experiment_seed);
    let mut stats = stats0.clone();
    let mut past: Vec<Vec<LogRecord>> = Vec::new();
    let mut result = ArmResult {
        name: spec.name.clone(),
        policy: spec.policy,
        policy_label: spec.policy.label(),
        reports: Vec::new(),
        training_positive_rate: Vec::new(),
        training_rows: Vec::new(),
    };
    for g in 1..=spec.generations {
        let window: Vec<&LogRecord> = match (spec.training_window, past.last()) {
            (TrainingWindow::Latest, Some(last)) => last.iter().collect(),
            (TrainingWindow::Latest, None) => gen0.iter().collect(),
            (TrainingWindow::All, _) => gen0.iter().chain(past.iter().flatten()).collect(),
        };
        let (oracle, data) = train_generation_oracle(env, spec, experiment_seed, g, window)?;
        let (train_pos, train_rows) = (data.positive_rate(), data.len());
        result.training_positive_rate.push(train_pos);
        result.training_rows.push(train_rows);
        drop(data);
        let logs = run_generation(
            &spec.policy,
            &oracle,
            env,
            &mut stats,
            spec.rounds_per_generation,
            g,
            stream,
        )?;
        let report = GenerationReport::from_logs(g, &logs)?;
        sink(GenerationOutput {
            generation: g,
            oracle: &oracle,
            logs: &logs,
            report: &report,
            training_positive_rate: train_pos,
            training_rows: train_rows,
        })?;
        result.reports.push(report);
        if spec.training_window == TrainingWindow::Latest {
            past.clear();
        }
        past.push(logs);
    }
    Ok(result)
}

/// Expected share of non-greedy draws: the mean non-greedy mass.
pub fn expected_exploration(policy: &PolicyConfig, preds: &[PredictionVector]) -> Result<f64, SimError> {
    if preds.is_empty() {
        return Err(SimError::Config("no calibration contexts".into()));
    }
    let mut total = 0.0;
    for p in preds {
        total += policy.distribution(p)?.exploration_mass();
    }
    Ok(total / preds.len() as f64)
}

/// Predictions for `n` fresh contexts under frozen risk stats.
pub fn calibration_predictions(
    env: &Environment,
    oracle: &OracleArtifact,
    stats: &RiskStats,
    n: usize,
    stream: RngStream,
) -> Result<Vec<PredictionVector>, SimError> {
    check_schema(env, oracle)?;
    let mut rng = stream.derive(&[TAG_MATCH]).rng();
    (0..n)
        .map(|_| {
            let ctx = env.gen_context(&mut rng);
            let set = env.eligible_actions(&ctx, stats)?;
            predict_eligible(oracle, &ctx, &set.eligible)
        })
        .collect()
}

/// SquareCB `gamma` whose expected exploration on `preds` equals `target`,
/// found by bisection on `ln gamma`.
pub fn match_gamma(preds: &[PredictionVector], target: f64) -> Result<f64, SimError> {
    let rate = |g: f64| expected_exploration(&PolicyConfig::SquareCb { gamma: g }, preds);
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e12f64.ln());
    if rate(lo.exp())? < target || rate(hi.exp())? > target {
        return Err(SimError::Config(format!(
            "exploration target {target} is outside the reachable range"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid.exp())? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

pub const MATCH_CONTEXTS: usize = 20_000;

/// Shared state every arm starts from.
pub struct Prepared {
    pub env: Environment,
    pub gen0: Vec<LogRecord>,
    pub stats: RiskStats,
    pub arms: Vec<GenerationSpec>,
    pub seed: u64,
}

/// Build the environment, run the bootstrap and resolve matched gammas.
pub fn prepare_experiment(
    env_cfg: &EnvConfig,
    arms: &[GenerationSpec],
    seed: u64,
    bootstrap_n: u64,
) -> Result<Prepared, SimError> {
    if arms.is_empty() {
        return Err(SimError::Config("at least one arm is required".into()));
    }
    for (i, a) in arms.iter().enumerate() {
        a.validate()?;
        if arms[..i].iter().any(|b| b.name == a.name) {
            return Err(SimError::Config(format!("duplicate arm name {}", a.name)));
        }
    }
    let env = Environment::new(env_cfg.clone())?;
    let mut stats = RiskStats::new();
    let gen0 = bootstrap_gen0(&env, bootstrap_n, &mut stats, bootstrap_stream(seed))?;
    let mut resolved = arms.to_vec();
    for arm in resolved.iter_mut() {
        let Some(reference) = arm.match_exploration_to.clone() else {
            continue;
        };
        let target_arm = arms
            .iter()
            .find(|a| a.name == reference)
            .ok_or_else(|| SimError::Config(format!("arm {}: unknown arm {reference}", arm.name)))?;
        if target_arm.match_exploration_to.is_some() {
            return Err(SimError::Config(format!(
                "arm {}: cannot match to an arm that is itself matched",
                arm.name
            )));
        }
        let (oracle, _) = train_generation_oracle(&env, arm, seed, 1, &gen0)?;
        let preds = calibration_predictions(&env, &oracle, &stats, MATCH_CONTEXTS, RngStream::new(seed, 0))?;
        let target = expected_exploration(&target_arm.policy, &preds)?;
        arm.policy = PolicyConfig::SquareCb {
            gamma: match_gamma(&preds, target)?,
        };
    }
    Ok(Prepared {
        env,
        gen0,
        stats,
        arms: resolved,
        seed,
    })
}

/// Sequential convenience wrapper: prepare, then run every arm.
pub fn run_experiment(
    env_cfg: &EnvConfig,
    arms: &[GenerationSpec],
    seed: u64,
    bootstrap_n: u64,
) -> Result<(Prepared, Vec<ArmResult>), SimError> {
    let prepared = prepare_experiment(env_cfg, arms, seed, bootstrap_n)?;
    let results = prepared
        .arms
        .iter()
        .map(|a| run_arm(&prepared.env, a, seed, &prepared.gen0, &prepared.stats, |_| Ok(())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prepared, results))
}
