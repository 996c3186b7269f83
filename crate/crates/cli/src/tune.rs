use std::path::{Path, PathBuf};

use banditlab_core::metrics::effective_exploration_rate;
use banditlab_core::simulation::{prepare_experiment, run_generation, train_generation_oracle};
use banditlab_core::{LogRecord, OracleArtifact, PolicyConfig, RngStream};

use crate::artifacts::{runtime, write_bytes};
use crate::{CliError, ExperimentConfig};

pub const HISTOGRAM_BINS: usize = 20;
const TAG_TUNE: u64 = 0x70e;

#[derive(Debug, Clone, PartialEq)]
pub struct GammaRow {
    pub gamma: f64,
    pub exploration_pct: f64,
    /// Share of rounds whose chosen action's predicted probability falls in each bin.
    pub histogram: Vec<f64>,
}

/// One generation per gamma from the first arm's generation-1 oracle.
///
/// Every gamma, and the greedy reference, replays the same context and
/// reward streams. Writes `tune_gamma/tune_gamma.csv` and
/// `tune_gamma/histograms.csv` under the output directory.
pub fn cmd_tune_gamma(config: &Path, gammas: &[f64]) -> Result<(Vec<GammaRow>, PathBuf), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    tune_gamma(&cfg, gammas)
}

pub fn tune_gamma(cfg: &ExperimentConfig, gammas: &[f64]) -> Result<(Vec<GammaRow>, PathBuf), CliError> {
    if gammas.is_empty() {
        return Err(CliError::Config("gammas: list is empty".into()));
    }
    let spec = cfg.arms[0].clone();
    let prepared = prepare_experiment(&cfg.env, std::slice::from_ref(&spec), cfg.seed, cfg.bootstrap_n)?;
    let (oracle, _) = train_generation_oracle(&prepared.env, &spec, cfg.seed, 1, &prepared.gen0)?;
    let stream = RngStream::new(cfg.seed, 0).derive(&[TAG_TUNE]);

    let measure = |policy: PolicyConfig| -> Result<(f64, Vec<f64>), CliError> {
        let mut stats = prepared.stats.clone();
        let logs = run_generation(
            &policy,
            &oracle,
            &prepared.env,
            &mut stats,
            spec.rounds_per_generation,
            1,
            stream,
        )?;
        let rate = effective_exploration_rate(&logs).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok((rate * 100.0, chosen_histogram(&oracle, &logs)?))
    };

    let (_, greedy_hist) = measure(PolicyConfig::Greedy)?;
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let (exploration_pct, histogram) = measure(PolicyConfig::SquareCb { gamma })?;
        rows.push(GammaRow {
            gamma,
            exploration_pct,
            histogram,
        });
    }

    let dir = cfg.resolved_output().join("tune_gamma");
    let mut table = String::from("gamma,exploration_pct\n");
    for r in &rows {
        table.push_str(&format!("{},{}\n", r.gamma, r.exploration_pct));
    }
    write_bytes(&dir.join("tune_gamma.csv"), table.as_bytes())?;

    let mut hist = String::from("bin_lo,bin_hi,greedy");
    for r in &rows {
        hist.push_str(&format!(",gamma_{}", r.gamma));
    }
    hist.push('\n');
    for b in 0..HISTOGRAM_BINS {
        let w = 1.0 / HISTOGRAM_BINS as f64;
        hist.push_str(&format!("{},{},{}", b as f64 * w, (b + 1) as f64 * w, greedy_hist[b]));
        for r in &rows {
            hist.push_str(&format!(",{}", r.histogram[b]));
        }
        hist.push('\n');
    }
    write_bytes(&dir.join("histograms.csv"), hist.as_bytes())?;
    Ok((rows, dir))
}

fn chosen_histogram(oracle: &OracleArtifact, logs: &[LogRecord]) -> Result<Vec<f64>, CliError> {
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for r in logs {
        let p = oracle
            .predict(&r.context, r.chosen)
            .map_err(|e| runtime(Path::new("oracle"), e))?;
        let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let n = logs.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
