//! On-disk layout of an experiment directory and the comparison report.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use banditlab_core::logfile::{read_log, write_log, LogHeader};
use banditlab_core::metrics::{eligible_set_groups, lorenz_curve, uplift_rewards, Uplift};
use banditlab_core::{ArmResult, Fingerprint, GenerationReport, LogRecord};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PARTIAL_MARKER: &str = ".partial";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const HIDDEN_MODEL_FILE: &str = "env/hidden_model.json";

pub fn log_name(generation: u32) -> String {
    format!("gen{generation}.log")
}

pub fn oracle_name(generation: u32) -> String {
    format!("oracle_gen{generation}.json")
}

pub fn lorenz_name(generation: u32) -> String {
    format!("lorenz_gen{generation}.csv")
}

pub fn by_size_name(generation: u32) -> String {
    format!("exploration_by_size_gen{generation}.csv")
}

/// Rewards of one generation, split by round type.
#[derive(Debug, Clone, Default)]
pub struct RewardSplit {
    pub all: Vec<u8>,
    pub exploration: Vec<u8>,
    pub exploitation: Vec<u8>,
}

impl RewardSplit {
    pub fn of(logs: &[LogRecord]) -> Self {
        let mut s = RewardSplit::default();
        for r in logs {
            s.all.push(r.reward);
            if r.was_greedy {
                s.exploitation.push(r.reward);
            } else {
                s.exploration.push(r.reward);
            }
        }
        s
    }
}

/// Variant arm against the baseline (first) arm in one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftRow {
    pub variant: String,
    pub baseline: String,
    pub generation: u32,
    pub reward: Option<Uplift>,
    pub exploration: Option<Uplift>,
    pub exploitation: Option<Uplift>,
}

impl UpliftRow {
    pub fn compute(
        variant: &str,
        baseline: &str,
        generation: u32,
        v: &RewardSplit,
        b: &RewardSplit,
    ) -> Self {
        UpliftRow {
            variant: variant.into(),
            baseline: baseline.into(),
            generation,
            reward: uplift_rewards(&v.all, &b.all).ok(),
            exploration: uplift_rewards(&v.exploration, &b.exploration).ok(),
            exploitation: uplift_rewards(&v.exploitation, &b.exploitation).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub schema: Fingerprint,
    pub seed: u64,
    pub arms: Vec<ArmResult>,
    pub uplifts: Vec<UpliftRow>,
}

/// Uplift rows of every later arm against the first, for each shared generation.
pub fn uplift_rows(names: &[String], splits: &[Vec<RewardSplit>]) -> Vec<UpliftRow> {
    let mut rows = Vec::new();
    let (Some(base_name), Some(base)) = (names.first(), splits.first()) else {
        return rows;
    };
    for (name, arm) in names.iter().zip(splits).skip(1) {
        for (i, (v, b)) in arm.iter().zip(base).enumerate() {
            rows.push(UpliftRow::compute(name, base_name, i as u32 + 1, v, b));
        }
    }
    rows
}

pub fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(path, e))?;
    serde_json::from_str(&text).map_err(|e| runtime(path, e))
}

pub fn write_log_file(path: &Path, header: &LogHeader, logs: &[LogRecord]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| runtime(path, e))?;
    write_log(BufWriter::new(file), header, logs).map_err(|e| runtime(path, e))
}

pub fn read_log_file(path: &Path) -> Result<(LogHeader, Vec<LogRecord>), CliError> {
    let file = File::open(path).map_err(|e| runtime(path, e))?;
    read_log(BufReader::new(file)).map_err(|e| runtime(path, e))
}

/// One Lorenz curve per eligible-set group; the group column joins sorted ids with `-`.
pub fn lorenz_csv(logs: &[LogRecord]) -> String {
    let mut s = String::from("group,population_share,action_share\n");
    for (key, counts) in eligible_set_groups(logs) {
        let group = key.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join("-");
        let counts: Vec<u64> = counts.into_values().collect();
        if let Ok(curve) = lorenz_curve(&counts) {
            for (x, y) in curve.points {
                s.push_str(&format!("{group},{x},{y}\n"));
            }
        }
    }
    s
}

pub fn by_size_csv(report: &GenerationReport) -> String {
    let mut s = String::from("size,exploration_rate\n");
    for (size, rate) in &report.exploration_by_size {
        s.push_str(&format!("{size},{rate}\n"));
    }
    s
}

/// Arm directory names are the arm names, which must be safe path components.
pub fn arm_dir(root: &Path, name: &str) -> Result<PathBuf, CliError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name != "env"
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(CliError::Config(format!(
            "arms: name {name:?} must be a plain file name of [A-Za-z0-9_.-]"
        )));
    }
    Ok(root.join(name))
}
