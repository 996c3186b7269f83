use std::fmt::Write as _;
use std::path::Path;

use banditlab_core::metrics::Uplift;
use banditlab_core::{ArmResult, GenerationReport};

use crate::artifacts::*;
use crate::{CliError, ExperimentConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub text: String,
    pub warnings: Vec<String>,
    /// Uplift rows recomputed from the logs.
    pub uplifts: Vec<UpliftRow>,
}

fn mismatch(what: String) -> CliError {
    CliError::Runtime(format!("report/logs mismatch: {what}"))
}

/// Recompute every stored metric from the logs and render a summary.
///
/// A partial run is summarized from the generations it completed.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary, CliError> {
    let mut warnings = Vec::new();
    let partial = dir.join(PARTIAL_MARKER).exists();
    if partial {
        warnings.push(format!(
            "{} has a partial marker; showing completed generations only",
            dir.display()
        ));
    }
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let top: Option<ExperimentReport> = if partial {
        read_json(&dir.join(REPORT_FILE)).ok()
    } else {
        Some(read_json(&dir.join(REPORT_FILE))?)
    };

    let mut arms: Vec<ArmResult> = Vec::new();
    let mut splits: Vec<Vec<RewardSplit>> = Vec::new();
    for spec in &cfg.arms {
        let arm_path = arm_dir(dir, &spec.name)?;
        let stored: ArmResult = match read_json(&arm_path.join(REPORT_FILE)) {
            Ok(r) => r,
            Err(_) if partial => {
                warnings.push(format!("arm {}: no completed generation", spec.name));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut arm_splits = Vec::new();
        for stored_gen in &stored.reports {
            let g = stored_gen.generation;
            let (_, logs) = read_log_file(&arm_path.join(log_name(g)))?;
            let fresh = GenerationReport::from_logs(g, &logs)
                .map_err(|e| CliError::Runtime(format!("arm {} gen {g}: {e}", spec.name)))?;
            if &fresh != stored_gen {
                return Err(mismatch(format!("arm {} generation {g}", spec.name)));
            }
            arm_splits.push(RewardSplit::of(&logs));
        }
        arms.push(stored);
        splits.push(arm_splits);
    }

    let names: Vec<String> = arms.iter().map(|a| a.name.clone()).collect();
    let uplifts = uplift_rows(&names, &splits);
    if let Some(top) = &top {
        if top.arms != arms {
            return Err(mismatch("arm reports differ from the experiment report".into()));
        }
        if top.uplifts != uplifts {
            return Err(mismatch("uplift rows differ from the experiment report".into()));
        }
    }

    Ok(ReportSummary {
        text: render(&arms, &uplifts),
        warnings,
        uplifts,
    })
}

fn render(arms: &[ArmResult], uplifts: &[UpliftRow]) -> String {
    let mut s = String::new();
    for arm in arms {
        let _ = writeln!(s, "arm {} [{}]", arm.name, arm.policy_label);
        let _ = writeln!(
            s,
            "  {:>3} {:>9} {:>8} {:>21} {:>9} {:>7} {:>8}",
            "gen", "rounds", "reward", "ci95", "eff_expl", "gini", "pos_rate"
        );
        for r in &arm.reports {
            let _ = writeln!(
                s,
                "  {:>3} {:>9} {:>8.5} [{:>8.5}, {:>8.5}] {:>8.4}% {:>7.5} {:>8.5}",
                r.generation,
                r.rounds,
                r.mean_reward,
                r.ci95.0,
                r.ci95.1,
                r.effective_exploration * 100.0,
                r.gini,
                r.positive_rate
            );
        }
    }
    if !uplifts.is_empty() {
        let _ = writeln!(s, "uplift vs {}", uplifts[0].baseline);
        for u in uplifts {
            for (label, up) in [
                ("reward", &u.reward),
                ("exploration", &u.exploration),
                ("exploitation", &u.exploitation),
            ] {
                let _ = writeln!(s, "  {} gen {} {:<12} {}", u.variant, u.generation, label, fmt_uplift(up));
            }
        }
    }
    s
}

fn fmt_uplift(u: &Option<Uplift>) -> String {
    match u {
        None => "n/a".into(),
        Some(u) => format!(
            "{:+.3}% diff {:+.5} ci95 [{:+.5}, {:+.5}] excludes_zero={}",
            u.relative_pct, u.difference, u.difference_ci95.0, u.difference_ci95.1, u.excludes_zero
        ),
    }
}
