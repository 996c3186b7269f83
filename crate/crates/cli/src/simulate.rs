use std::path::{Path, PathBuf};

use banditlab_core::logfile::LogHeader;
use banditlab_core::simulation::{prepare_experiment, run_arm, SimError};
use banditlab_core::{ArmResult, GenerationSpec};
use rayon::prelude::*;

use crate::artifacts::*;
use crate::{CliError, ExperimentConfig};

/// Run the experiment described by `config` and write its artifact tree.
///
/// Returns the output directory. A `.partial` marker stays behind when a run
/// fails part-way.
pub fn cmd_simulate(config: &Path, workers: usize) -> Result<PathBuf, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    simulate(&cfg, workers)
}

pub fn simulate(cfg: &ExperimentConfig, workers: usize) -> Result<PathBuf, CliError> {
    if workers == 0 {
        return Err(CliError::Config("workers: must be >= 1".into()));
    }
    let root = cfg.resolved_output();
    for arm in &cfg.arms {
        arm_dir(&root, &arm.name)?;
    }
    let marker = root.join(PARTIAL_MARKER);
    write_bytes(&marker, b"run in progress\n")?;
    match run(cfg, &root, workers) {
        Ok(()) => {
            std::fs::remove_file(&marker).map_err(|e| runtime(&marker, e))?;
            Ok(root)
        }
        Err(e) => {
            // best effort: the marker already exists, this only adds the reason
            let _ = std::fs::write(&marker, format!("run failed: {e}\n"));
            Err(e)
        }
    }
}

struct ArmOutcome {
    result: ArmResult,
    splits: Vec<RewardSplit>,
}

fn run(cfg: &ExperimentConfig, root: &Path, workers: usize) -> Result<(), CliError> {
    write_bytes(&root.join(CONFIG_FILE), cfg.canonical().as_bytes())?;
    let prepared = prepare_experiment(&cfg.env, &cfg.arms, cfg.seed, cfg.bootstrap_n)?;
    write_json(&root.join(HIDDEN_MODEL_FILE), prepared.env.hidden_model())?;
    let header = LogHeader {
        schema: prepared.env.schema().fingerprint(),
        config: cfg.hash(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let outcomes: Vec<ArmOutcome> = pool.install(|| {
        prepared
            .arms
            .par_iter()
            .map(|spec| run_one_arm(&prepared, spec, root, &header))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let names: Vec<String> = outcomes.iter().map(|o| o.result.name.clone()).collect();
    let splits: Vec<Vec<RewardSplit>> = outcomes.iter().map(|o| o.splits.clone()).collect();
    let report = ExperimentReport {
        config_hash: header.config.clone(),
        schema: header.schema,
        seed: cfg.seed,
        uplifts: uplift_rows(&names, &splits),
        arms: outcomes.into_iter().map(|o| o.result).collect(),
    };
    write_json(&root.join(REPORT_FILE), &report)
}

fn run_one_arm(
    prepared: &banditlab_core::simulation::Prepared,
    spec: &GenerationSpec,
    root: &Path,
    header: &LogHeader,
) -> Result<ArmOutcome, CliError> {
    let dir = arm_dir(root, &spec.name)?;
    std::fs::create_dir_all(&dir).map_err(|e| runtime(&dir, e))?;
    write_log_file(&dir.join(log_name(0)), header, &prepared.gen0)?;

    let mut partial = ArmResult {
        name: spec.name.clone(),
        policy: spec.policy,
        policy_label: spec.policy.label(),
        reports: Vec::new(),
        training_positive_rate: Vec::new(),
        training_rows: Vec::new(),
    };
    let mut splits = Vec::new();
    let sink_err = |e: CliError| SimError::Sink(e.to_string());
    let result = run_arm(
        &prepared.env,
        spec,
        prepared.seed,
        &prepared.gen0,
        &prepared.stats,
        |out| {
            let g = out.generation;
            write_log_file(&dir.join(log_name(g)), header, out.logs).map_err(sink_err)?;
            write_bytes(&dir.join(oracle_name(g)), out.oracle.to_json().as_bytes()).map_err(sink_err)?;
            write_bytes(&dir.join(lorenz_name(g)), lorenz_csv(out.logs).as_bytes()).map_err(sink_err)?;
            write_bytes(&dir.join(by_size_name(g)), by_size_csv(out.report).as_bytes())
                .map_err(sink_err)?;
            partial.reports.push(out.report.clone());
            partial.training_positive_rate.push(out.training_positive_rate);
            partial.training_rows.push(out.training_rows);
            write_json(&dir.join(REPORT_FILE), &partial).map_err(sink_err)?;
            splits.push(RewardSplit::of(out.logs));
            Ok(())
        },
    )?;
    write_json(&dir.join(REPORT_FILE), &result)?;
    Ok(ArmOutcome { result, splits })
}
