//! Contextual-bandit experimentation lab.
//!
//! A synthetic payment-routing world generates contexts and eligible action
//! sets, policies choose actions from a frozen reward oracle, and batches of
//! logs feed the next generation's oracle.

pub mod environment;
pub mod features;
pub mod logfile;
pub mod metrics;
pub mod offline_eval;
pub mod oracle;
pub mod policy;
pub mod simulation;
pub mod types;

pub use environment::{EnvConfig, Environment, RiskStats};
pub use features::{featurize, FeatureSchema, FeatureVector, Fingerprint};
pub use metrics::GenerationReport;
pub use oracle::{Oracle, OracleArtifact, OracleKind, TrainConfig};
pub use policy::{ActionDistribution, PolicyConfig, PredictionVector};
pub use types::{ActionId, ActionSet, Context, LogRecord, RngStream};
pub use simulation::{ArmResult, GenerationSpec, TrainingWindow};
