//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are evaluated at full tolerance and
//! reported as FAIL; the target only errors when a criterion outside that
//! list fails, or when a listed one starts passing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use banditlab_cli::cmd_simulate;
use banditlab_core::metrics::{
    gini, lorenz_for_size, split_counts, uplift_rewards, weighted_gini_of_logs, wilson_interval,
    ConfidenceLevel,
};
use banditlab_core::offline_eval::{ips_value, snips_value, LoggingPolicy};
use banditlab_core::oracle::{
    logistic_objective, sigmoid, split_gain, train_trees, train_trees_traced, Dataset, Node,
};
use banditlab_core::policy::squarecb_distribution;
use banditlab_core::simulation::{
    bootstrap_gen0, bootstrap_stream, prepare_experiment, run_arm, run_generation, train_generation_oracle,
    GenerationOutput,
};
use banditlab_core::{
    ActionId, ArmResult, Context, EnvConfig, Environment, GenerationReport, GenerationSpec, LogRecord,
    OracleArtifact, PolicyConfig, PredictionVector, RiskStats, RngStream, TrainConfig, TrainingWindow,
};
use rand::Rng;

const KNOWN_RED: &[u32] = &[6];

const EPSILON: f64 = 0.06;
const ROUNDS: u64 = 500_000;
const BOOTSTRAP: u64 = 50_000;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Decomposition identity on one log: integer split sums, and the
/// recomposed mean within one rounding step.
fn decomposes(logs: &[LogRecord]) -> bool {
    let ((xs, xn), (gs, gn)) = split_counts(logs);
    let pos: u64 = logs.iter().map(|r| u64::from(r.reward)).sum();
    let Ok(r) = GenerationReport::from_logs(0, logs) else {
        return false;
    };
    let w = r.effective_exploration;
    let recomposed = w * r.exploration_round_mean_reward + (1.0 - w) * r.exploitation_round_mean_reward;
    xs + gs == pos && xn + gn == logs.len() as u64 && (recomposed - r.mean_reward).abs() < 1e-12
}

#[derive(Default)]
struct DecompositionTally {
    logs: usize,
    failures: usize,
}

impl DecompositionTally {
    fn check(&mut self, logs: &[LogRecord]) {
        self.logs += 1;
        if !decomposes(logs) {
            self.failures += 1;
        }
    }
}

fn random_preds(rng: &mut impl Rng) -> PredictionVector {
    let k = rng.random_range(2..=15u32);
    PredictionVector::new((0..k).map(|a| (ActionId(a), rng.random::<f64>())).collect()).unwrap()
}

fn c1() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(101, 0).rng();
    let mut worst_sum = 0.0f64;
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let preds = random_preds(&mut rng);
        let gamma = 10f64.powf(rng.random_range(-2.0..6.0));
        let d = squarecb_distribution(&preds, gamma).unwrap();
        let inv = 1.0 / preds.len() as f64;
        let total: f64 = d.probs().iter().map(|p| p.1).sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
        let g = d.greedy();
        if d.prob(g) < inv || d.probs().iter().any(|&(a, p)| a != g && p > inv) {
            violations += 1;
        }
        for &(a, ra) in preds.as_slice() {
            for &(b, rb) in preds.as_slice() {
                if a != g && b != g && ra >= rb && d.prob(a) < d.prob(b) {
                    violations += 1;
                }
            }
        }
        let dev = |gm: f64| {
            let d = squarecb_distribution(&preds, gm).unwrap();
            d.probs().iter().map(|p| (p.1 - inv).abs()).fold(0.0, f64::max)
        };
        let grid = [1.0, 1e-3, 1e-6, 1e-9];
        let devs: Vec<f64> = grid.iter().map(|&gm| dev(gm)).collect();
        if devs.windows(2).any(|w| w[1] > w[0]) || devs[3] > 1e-8 {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_sum <= 1e-9 && violations == 0 && elapsed < Duration::from_secs(5),
        format!("max |sum-1| {worst_sum:.2e}, violations {violations}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn c2() -> Outcome {
    let pv = |ps: &[f64]| {
        PredictionVector::new(ps.iter().enumerate().map(|(i, &p)| (ActionId(i as u32), p)).collect()).unwrap()
    };
    let a = squarecb_distribution(&pv(&[0.9, 0.7]), 10.0).unwrap();
    let b = squarecb_distribution(&pv(&[0.9, 0.8, 0.5]), 20.0).unwrap();
    // 1 / (mu + gamma * gap) for each non-greedy action
    let expect_a = [1.0 - 1.0 / 4.0, 1.0 / 4.0];
    let expect_b = [1.0 - 1.0 / 5.0 - 1.0 / 11.0, 1.0 / 5.0, 1.0 / 11.0];
    let err = |d: &banditlab_core::ActionDistribution, e: &[f64]| {
        e.iter()
            .enumerate()
            .map(|(i, &x)| (d.prob(ActionId(i as u32)) - x).abs())
            .fold(0.0, f64::max)
    };
    let (ea, eb) = (err(&a, &expect_a), err(&b, &expect_b));
    outcome(
        ea <= 1e-9 && eb <= 1e-9,
        format!(
            "({:.6}, {:.6}) and ({:.6}, {:.6}, {:.6}); max err {:.1e}",
            a.prob(ActionId(0)),
            a.prob(ActionId(1)),
            b.prob(ActionId(0)),
            b.prob(ActionId(1)),
            b.prob(ActionId(2)),
            ea.max(eb)
        ),
    )
}

fn logistic_gen1(env: &Environment, seed: u64, bootstrap: u64) -> (OracleArtifact, RiskStats, Vec<LogRecord>) {
    let mut stats = RiskStats::new();
    let gen0 = bootstrap_gen0(env, bootstrap, &mut stats, bootstrap_stream(seed)).unwrap();
    let spec = GenerationSpec {
        name: "probe".into(),
        rounds_per_generation: 1,
        generations: 1,
        policy: PolicyConfig::Greedy,
        oracle: TrainConfig::logistic(),
        training_window: TrainingWindow::Latest,
        seed: None,
        match_exploration_to: None,
    };
    let (oracle, _) = train_generation_oracle(env, &spec, seed, 1, &gen0).unwrap();
    (oracle, stats, gen0)
}

fn c3(tally: &mut DecompositionTally) -> Outcome {
    let start = Instant::now();
    let eps = PolicyConfig::EpsilonGreedy { epsilon: 0.01 };

    let pinned = Environment::new(EnvConfig::pinned_action_count(2)).unwrap();
    let (oracle, mut stats, gen0) = logistic_gen1(&pinned, 21, 5000);
    tally.check(&gen0);
    let logs = run_generation(&eps, &oracle, &pinned, &mut stats, 1_000_000, 1, RngStream::new(21, 1)).unwrap();
    tally.check(&logs);
    let pinned_rate = GenerationReport::from_logs(1, &logs).unwrap().effective_exploration;
    let sizes_ok = logs.iter().all(|r| r.eligible.len() == 2);
    drop(logs);

    let mixed = Environment::new(EnvConfig::default()).unwrap();
    let (oracle, mut stats, gen0) = logistic_gen1(&mixed, 22, 20_000);
    tally.check(&gen0);
    let logs = run_generation(&eps, &oracle, &mixed, &mut stats, 200_000, 1, RngStream::new(22, 1)).unwrap();
    tally.check(&logs);
    let mixed_rate = GenerationReport::from_logs(1, &logs).unwrap().effective_exploration;
    let elapsed = start.elapsed();
    outcome(
        sizes_ok && (pinned_rate - 0.005).abs() <= 0.0005 && mixed_rate < 0.01 && elapsed < Duration::from_secs(120),
        format!(
            "|A|=2: {:.4}% (target 0.5% +/- 0.05%); mixed: {:.4}% < 1%; {:.1}s",
            pinned_rate * 100.0,
            mixed_rate * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

struct SeedRun {
    arms: Vec<ArmResult>,
    gamma: f64,
    elapsed: Duration,
}

struct HeadToHead {
    eps_logs: Vec<LogRecord>,
    scb_logs: Vec<LogRecord>,
    gen1_oracle: OracleArtifact,
    env: Environment,
    stats: RiskStats,
}

fn arms() -> Vec<GenerationSpec> {
    let base = GenerationSpec {
        name: "epsilon_greedy".into(),
        rounds_per_generation: ROUNDS,
        generations: 2,
        policy: PolicyConfig::EpsilonGreedy { epsilon: EPSILON },
        oracle: TrainConfig::trees(),
        training_window: TrainingWindow::Latest,
        seed: None,
        match_exploration_to: None,
    };
    let scb = GenerationSpec {
        name: "squarecb".into(),
        policy: PolicyConfig::SquareCb { gamma: 1000.0 },
        match_exploration_to: Some("epsilon_greedy".into()),
        ..base.clone()
    };
    vec![base, scb]
}

fn run_seed(seed: u64, keep: bool, tally: &mut DecompositionTally) -> (SeedRun, Option<HeadToHead>) {
    let start = Instant::now();
    let prepared = prepare_experiment(&EnvConfig::default(), &arms(), seed, BOOTSTRAP).unwrap();
    tally.check(&prepared.gen0);
    let gamma = match prepared.arms[1].policy {
        PolicyConfig::SquareCb { gamma } => gamma,
        _ => unreachable!("matched arm is squarecb"),
    };
    let mut kept: Vec<Vec<LogRecord>> = Vec::new();
    let mut oracle = None;
    let mut results = Vec::new();
    for spec in &prepared.arms {
        let result = run_arm(
            &prepared.env,
            spec,
            seed,
            &prepared.gen0,
            &prepared.stats,
            |out: GenerationOutput<'_>| {
                tally.check(out.logs);
                if keep && out.generation == 1 {
                    kept.push(out.logs.to_vec());
                    if oracle.is_none() {
                        oracle = Some(out.oracle.clone());
                    }
                }
                Ok(())
            },
        )
        .unwrap();
        results.push(result);
    }
    let run = SeedRun {
        arms: results,
        gamma,
        elapsed: start.elapsed(),
    };
    let h2h = keep.then(|| {
        let scb_logs = kept.pop().unwrap();
        let eps_logs = kept.pop().unwrap();
        HeadToHead {
            eps_logs,
            scb_logs,
            gen1_oracle: oracle.unwrap(),
            env: prepared.env,
            stats: prepared.stats,
        }
    });
    (run, h2h)
}

fn rewards(logs: &[LogRecord], greedy: bool) -> Vec<u8> {
    logs.iter().filter(|r| r.was_greedy == greedy).map(|r| r.reward).collect()
}

fn c4(run: &SeedRun, h: &HeadToHead) -> Outcome {
    let e = GenerationReport::from_logs(1, &h.eps_logs).unwrap();
    let s = GenerationReport::from_logs(1, &h.scb_logs).unwrap();
    let gap = (s.effective_exploration - e.effective_exploration).abs();
    let up = uplift_rewards(&rewards(&h.scb_logs, false), &rewards(&h.eps_logs, false)).unwrap();
    outcome(
        gap <= 0.002
            && up.difference > 0.0
            && up.difference_ci95.0 > 0.0
            && h.eps_logs.len() as u64 >= ROUNDS
            && run.elapsed < Duration::from_secs(600),
        format!(
            "gamma {:.1}; effective exploration {:.3}% vs {:.3}%; exploration-round reward {:.4} vs {:.4}, diff CI95 [{:+.4}, {:+.4}]; {:.0}s",
            run.gamma,
            s.effective_exploration * 100.0,
            e.effective_exploration * 100.0,
            s.exploration_round_mean_reward,
            e.exploration_round_mean_reward,
            up.difference_ci95.0,
            up.difference_ci95.1,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn by_size_counts(logs: &[LogRecord]) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for r in logs {
        *m.entry(r.eligible.len()).or_insert(0) += 1;
    }
    m
}

fn c5(h: &HeadToHead) -> Outcome {
    let e = GenerationReport::from_logs(1, &h.eps_logs).unwrap().exploration_by_size;
    let s = GenerationReport::from_logs(1, &h.scb_logs).unwrap().exploration_by_size;
    let counts = by_size_counts(&h.scb_logs);
    let mut ok = true;
    let increasing: Vec<f64> = (2..=8).filter_map(|k| s.get(&k).copied()).collect();
    ok &= increasing.len() == 7 && increasing.windows(2).all(|w| w[1] > w[0]);
    ok &= e.values().all(|&r| r <= EPSILON);
    ok &= s.get(&2) < e.get(&2);
    for (&k, &rate) in &s {
        if k > 3 {
            ok &= e.get(&k).is_some_and(|&er| rate > er);
        }
    }
    let table: Vec<String> = s
        .iter()
        .map(|(k, r)| {
            format!(
                "{k}:{:.4}/{:.4}(n={})",
                r,
                e.get(k).copied().unwrap_or(f64::NAN),
                counts.get(k).copied().unwrap_or(0)
            )
        })
        .collect();
    outcome(ok, format!("size:squarecb/epsilon {}", table.join(" ")))
}

fn c6(h: &HeadToHead) -> Outcome {
    let ge = weighted_gini_of_logs(&h.eps_logs).unwrap();
    let gs = weighted_gini_of_logs(&h.scb_logs).unwrap();
    let sup = lorenz_for_size(&h.scb_logs, 2)
        .unwrap()
        .sup_distance(&lorenz_for_size(&h.eps_logs, 2).unwrap());
    outcome(
        gs <= ge && sup <= 0.02,
        format!("weighted Gini squarecb {gs:.5} vs epsilon {ge:.5}; size-2 Lorenz sup distance {sup:.4}"),
    )
}

fn c7(runs: &[SeedRun]) -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for (seed, run) in SEEDS.iter().zip(runs) {
        let (e, s) = (&run.arms[0], &run.arms[1]);
        let pos_gap = s.training_positive_rate[1] - e.training_positive_rate[1];
        let s_drop = s.reports[0].exploitation_round_mean_reward - s.reports[1].exploitation_round_mean_reward;
        let e_drop = e.reports[0].exploitation_round_mean_reward - e.reports[1].exploitation_round_mean_reward;
        let ok = pos_gap >= 0.01 && s_drop > 0.0 && e_drop <= s_drop;
        passes += usize::from(ok);
        lines.push(format!(
            "seed {seed}: pos gap {:+.2}pp, exploitation drop squarecb {:+.2}pp epsilon {:+.2}pp {}",
            pos_gap * 100.0,
            s_drop * 100.0,
            e_drop * 100.0,
            if ok { "ok" } else { "miss" }
        ));
    }
    outcome(passes * 2 > SEEDS.len(), format!("{passes}/3 seeds; {}", lines.join("; ")))
}

fn random_dataset(rng: &mut impl Rng, rows: usize, cols: usize) -> Dataset {
    let w: Vec<f64> = (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..rows {
        let x: Vec<f64> = (0..cols).map(|_| f64::from(rng.random_range(0..6u32)) / 5.0 - 0.3).collect();
        let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        ys.push(u8::from(rng.random::<f64>() < sigmoid(z)));
        xs.push(x);
    }
    Dataset::from_dense(&xs, &ys).unwrap()
}

fn c8() -> Outcome {
    let mut rng = RngStream::new(808, 0).rng();
    let mut worst_grad = 0.0f64;
    for _ in 0..20 {
        let data = random_dataset(&mut rng, 50, 6);
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let l2 = rng.random_range(0.0..0.3);
        let f = |w: &[f64], b: f64| logistic_objective(w, b, &data, 1e-6, l2).0;
        let (_, g, gb) = logistic_objective(&w, b, &data, 1e-6, l2);
        let h = 1e-5;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (f(&up, b) - f(&dn, b)) / (2.0 * h);
            num += (fd - g[j]).powi(2);
            den += g[j].powi(2);
        }
        let fdb = (f(&w, b + h) - f(&w, b - h)) / (2.0 * h);
        num += (fdb - gb).powi(2);
        den += gb.powi(2);
        worst_grad = worst_grad.max(num.sqrt() / den.sqrt());
    }

    let mut monotone = 0;
    for seed in 0..5u64 {
        let data = random_dataset(&mut rng, 400, 5);
        let cfg = TrainConfig {
            rounds: 10,
            seed,
            ..TrainConfig::trees()
        };
        let (_, trace) = train_trees_traced(&data, &cfg).unwrap();
        if trace.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }

    let (mut stumps, mut stump_ok) = (0, 0);
    while stumps < 200 {
        let n = rng.random_range(6..30);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| f64::from(rng.random_range(-2..=3i32))).collect())
            .collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(r[0] - 0.5 * r[2])))
            .collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        if pos == 0 || pos == n {
            continue;
        }
        let p = pos as f64 / n as f64;
        let (gt, ht) = (labels.iter().map(|&y| p - f64::from(y)).sum::<f64>(), n as f64 * p * (1.0 - p));
        let mut best = f64::NEG_INFINITY;
        for f in 0..3 {
            for v in -2..=2 {
                let left: Vec<usize> = (0..n).filter(|&i| rows[i][f] <= f64::from(v)).collect();
                if left.is_empty() || left.len() == n {
                    continue;
                }
                let gl: f64 = left.iter().map(|&i| p - f64::from(labels[i])).sum();
                let hl = left.len() as f64 * p * (1.0 - p);
                best = best.max(split_gain(gl, hl, gt, ht, 1.0));
            }
        }
        if best <= 1e-9 {
            continue;
        }
        stumps += 1;
        let data = Dataset::from_dense(&rows, &labels).unwrap();
        let cfg = TrainConfig {
            rounds: 1,
            max_depth: 1,
            step: 1.0,
            lambda: 1.0,
            min_child_weight: 0.0,
            ..TrainConfig::trees()
        };
        let model = train_trees(&data, &cfg).unwrap();
        if let Node::Split { gain, .. } = model.trees[0].nodes[0] {
            if (gain - best).abs() <= 1e-9 * best.max(1.0) {
                stump_ok += 1;
            }
        }
    }
    outcome(
        worst_grad < 1e-5 && monotone == 5 && stump_ok == stumps,
        format!(
            "gradient rel err {worst_grad:.1e}; boosting monotone {monotone}/5; stumps {stump_ok}/{stumps} match brute force"
        ),
    )
}

fn toy_record(x: u32, a: u32, propensity: f64, reward: u8, round: u64) -> LogRecord {
    LogRecord {
        generation: 0,
        round,
        context: Context {
            amount: 1.0,
            country: x,
            merchant: 0,
            merchant_category: 0,
            device_type: 0,
            extra_numeric: vec![],
        },
        eligible: vec![ActionId(0), ActionId(1)],
        chosen: ActionId(a),
        propensity,
        reward,
        was_greedy: a == 0,
    }
}

fn c9(h: &HeadToHead) -> Outcome {
    let mut identity = true;
    for logs in [&h.eps_logs, &h.scb_logs] {
        let mean = logs.iter().map(|r| f64::from(r.reward)).sum::<f64>() / logs.len() as f64;
        identity &= ips_value(logs, &LoggingPolicy, None).unwrap().value == mean;
        identity &= snips_value(logs, &LoggingPolicy, None).unwrap().value == mean;
    }

    let mut rng = RngStream::new(909, 0).rng();
    let mut worst_bias = 0.0f64;
    for _ in 0..500 {
        let q: f64 = rng.random();
        let mu: [f64; 2] = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
        let pi: [f64; 2] = [rng.random(), rng.random()];
        let r: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        let px = [1.0 - q, q];
        let logging = |x: usize, a: usize| if a == 0 { mu[x] } else { 1.0 - mu[x] };
        let target_p = |x: usize, a: usize| if a == 0 { pi[x] } else { 1.0 - pi[x] };
        let target = |rec: &LogRecord| target_p(rec.context.country as usize, rec.chosen.index());
        let truth: f64 = (0..2)
            .map(|x| px[x] * (0..2).map(|a| target_p(x, a) * r[2 * x + a]).sum::<f64>())
            .sum();
        let mut expected = 0.0;
        for x in 0..2 {
            for a in 0..2 {
                for y in 0..2u8 {
                    let py = if y == 1 { r[2 * x + a] } else { 1.0 - r[2 * x + a] };
                    let rec = toy_record(x as u32, a as u32, logging(x, a), y, 0);
                    expected += px[x] * logging(x, a) * py * ips_value(&[rec], &target, None).unwrap().value;
                }
            }
        }
        worst_bias = worst_bias.max((expected - truth).abs());
    }

    let mut bounded = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let logs: Vec<LogRecord> = (0..n)
            .map(|t| {
                toy_record(
                    rng.random_range(0..2),
                    rng.random_range(0..2),
                    rng.random_range(0.01..=1.0),
                    rng.random_range(0..=1),
                    t,
                )
            })
            .collect();
        let pis: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let target = |r: &LogRecord| pis[r.round as usize];
        match snips_value(&logs, &target, None) {
            Ok(e) if (0.0..=1.0).contains(&e.value) => bounded += 1,
            Err(banditlab_core::offline_eval::EvalError::ZeroWeights) => bounded += 1,
            _ => {}
        }
    }
    outcome(
        identity && worst_bias < 1e-12 && bounded == 1000,
        format!("logging-target identity {identity}; 2x2 IPS max bias {worst_bias:.1e}; SNIPS in [0,1] {bounded}/1000"),
    )
}

fn c10(tally: &DecompositionTally) -> Outcome {
    let g1 = gini(&[10, 0, 0, 0]).unwrap();
    let g2 = gini(&[7, 7, 7]).unwrap();
    let g3 = gini(&[3, 1]).unwrap();
    let (lo, hi) = wilson_interval(0, 10, ConfidenceLevel::P95).unwrap();
    // Wilson upper bound at k = 0: z^2 / (n + z^2)
    let z = ConfidenceLevel::P95.z();
    let hi_expected = z * z / (10.0 + z * z);
    let ok = g1 == 0.75
        && g2 == 0.0
        && g3 == 0.25
        && lo == 0.0
        && (hi - hi_expected).abs() < 1e-5
        && (hi - 0.27753).abs() < 1e-5
        && tally.failures == 0
        && tally.logs > 0;
    outcome(
        ok,
        format!(
            "gini {g1}, {g2}, {g3}; Wilson(0,10) = ({lo}, {hi:.5}); decomposition exact on {}/{} logs",
            tally.logs - tally.failures,
            tally.logs
        ),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn c11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = tmp.path().join("exp.toml");
    let text = format!(
        r#"seed = 11
output_dir = "{}"
bootstrap_n = 5000

[env]

[[arms]]
name = "epsilon_greedy"
rounds_per_generation = 20000
generations = 2
policy = {{ kind = "epsilon_greedy", epsilon = 0.06 }}

[[arms]]
name = "squarecb"
rounds_per_generation = 20000
generations = 2
policy = {{ kind = "squarecb", gamma = 100.0 }}
match_exploration_to = "epsilon_greedy"

[[arms]]
name = "greedy"
rounds_per_generation = 20000
generations = 2
policy = {{ kind = "greedy" }}
training_window = "all"
"#,
        out.display()
    );
    std::fs::write(&config, text).unwrap();
    let mut trees = Vec::new();
    for workers in [1, 1, 4] {
        cmd_simulate(&config, workers).unwrap();
        trees.push(tree_bytes(&out));
        std::fs::remove_dir_all(&out).unwrap();
    }
    let files = trees[0].len();
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    outcome(
        files > 0 && trees[0] == trees[1] && trees[0] == trees[2],
        format!(
            "{files} files, {bytes} bytes; repeat identical {}; workers 1 vs 4 identical {}",
            trees[0] == trees[1],
            trees[0] == trees[2]
        ),
    )
}

fn c12(h: &HeadToHead) -> Outcome {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let empty = RiskStats::new();
    let mut rng = RngStream::new(1212, 0).rng();
    let mut sizes: Vec<usize> = (0..100_000)
        .map(|_| {
            let ctx = env.gen_context(&mut rng);
            env.eligible_actions(&ctx, &empty).unwrap().len()
        })
        .collect();
    sizes.sort_unstable();
    let median = sizes[sizes.len() / 2];
    let (min, max) = (sizes[0], sizes[sizes.len() - 1]);

    let mut stats = h.stats.clone();
    let logs = run_generation(
        &PolicyConfig::Greedy,
        &h.gen1_oracle,
        &h.env,
        &mut stats,
        100_000,
        1,
        RngStream::new(1212, 1),
    )
    .unwrap();
    let rate = GenerationReport::from_logs(1, &logs).unwrap().positive_rate;
    outcome(
        (0.85..=0.95).contains(&rate) && median == 4 && min >= 2 && max <= 15,
        format!("greedy positive rate {rate:.4}; |A| median {median}, range [{min}, {max}]"),
    )
}

fn main() {
    let mut tally = DecompositionTally::default();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    report(1, c1());
    report(2, c2());
    report(3, c3(&mut tally));

    let mut runs = Vec::new();
    let mut h2h = None;
    for (i, &seed) in SEEDS.iter().enumerate() {
        let (run, h) = run_seed(seed, i == 0, &mut tally);
        if h.is_some() {
            h2h = h;
        }
        runs.push(run);
    }
    let h2h = h2h.expect("first seed keeps its logs");
    report(4, c4(&runs[0], &h2h));
    report(5, c5(&h2h));
    report(6, c6(&h2h));
    report(7, c7(&runs));
    report(8, c8());
    report(9, c9(&h2h));
    report(10, c10(&tally));
    report(11, c11());
    report(12, c12(&h2h));

    let unexpected: Vec<String> = results
        .iter()
        .filter(|(n, o)| o.pass == KNOWN_RED.contains(n))
        .map(|(n, o)| format!("{n} ({})", if o.pass { "passes but is listed red" } else { "fails" }))
        .collect();
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} PASS; known red: {KNOWN_RED:?}", results.len());
    if !unexpected.is_empty() {
        println!("unexpected: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
