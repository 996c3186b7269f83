use std::path::PathBuf;

use banditlab_core::offline_eval::{estimate, Estimator, LoggingPolicy, OffPolicyEstimate, OraclePolicy};
use banditlab_core::{OracleArtifact, PolicyConfig};

use crate::artifacts::{read_log_file, runtime, write_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    /// The policy that wrote the logs.
    Logging,
    Oracle(PolicyConfig),
}

/// `greedy`, `epsilon_greedy:EPS`, `squarecb:GAMMA` or `logging`.
pub fn parse_policy_spec(text: &str) -> Result<PolicySpec, CliError> {
    let bad = || CliError::Config(format!("policy: cannot parse {text:?}"));
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a.parse::<f64>().map_err(|_| bad())?)),
        None => (text, None),
    };
    let spec = match (kind, arg) {
        ("logging", None) => PolicySpec::Logging,
        ("greedy", None) => PolicySpec::Oracle(PolicyConfig::Greedy),
        ("epsilon_greedy", Some(epsilon)) => PolicySpec::Oracle(PolicyConfig::EpsilonGreedy { epsilon }),
        ("squarecb", Some(gamma)) => PolicySpec::Oracle(PolicyConfig::SquareCb { gamma }),
        _ => return Err(bad()),
    };
    if let PolicySpec::Oracle(p) = spec {
        p.validate().map_err(|e| CliError::Config(format!("policy: {e}")))?;
    }
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub logs: PathBuf,
    pub oracle: PathBuf,
    pub policy: PolicySpec,
    pub estimator: Estimator,
    pub clip: Option<f64>,
    /// Defaults to `<logs stem>.estimate.json` beside the logs.
    pub out: Option<PathBuf>,
}

pub fn cmd_eval_offline(args: &EvalArgs) -> Result<OffPolicyEstimate, CliError> {
    let (header, logs) = read_log_file(&args.logs)?;
    let text = std::fs::read_to_string(&args.oracle).map_err(|e| runtime(&args.oracle, e))?;
    let oracle = OracleArtifact::from_json(&text).map_err(|e| runtime(&args.oracle, e))?;
    let oracle_fp = oracle.features.fingerprint();
    if header.schema != oracle_fp {
        return Err(CliError::Schema(format!(
            "logs schema {} != oracle schema {oracle_fp}",
            header.schema
        )));
    }
    let result = match args.policy {
        PolicySpec::Logging => estimate(args.estimator, &logs, &LoggingPolicy, args.clip),
        PolicySpec::Oracle(policy) => estimate(
            args.estimator,
            &logs,
            &OraclePolicy {
                oracle: &oracle,
                policy,
            },
            args.clip,
        ),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.logs.with_extension("estimate.json"));
    write_json(&out, &result)?;
    Ok(result)
}
