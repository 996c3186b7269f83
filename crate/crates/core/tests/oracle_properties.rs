use banditlab_core::environment::{EnvConfig, Environment};
use banditlab_core::oracle::{
    logistic_objective, sigmoid, split_gain, train_logistic_traced, train_trees, train_trees_traced,
    Dataset, Node, Oracle,
};
use banditlab_core::simulation::{bootstrap_gen0, bootstrap_stream, training_set};
use banditlab_core::{featurize, ActionId, RiskStats, RngStream, TrainConfig};
use proptest::prelude::*;
use rand::Rng;

fn random_dataset(seed: u64, rows: usize, cols: usize, levels: u32) -> Dataset {
    let mut rng = RngStream::new(seed, 7).rng();
    let w: Vec<f64> = (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut xs = Vec::with_capacity(rows);
    let mut ys = Vec::with_capacity(rows);
    for _ in 0..rows {
        let x: Vec<f64> = (0..cols)
            .map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels.max(2) - 1) - 0.3)
            .collect();
        let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        ys.push(u8::from(rng.random::<f64>() < sigmoid(z)));
        xs.push(x);
    }
    Dataset::from_dense(&xs, &ys).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logistic_gradient_matches_finite_differences(
        seed in any::<u64>(),
        l2 in 0.0f64..0.5,
        w in proptest::collection::vec(-1.0f64..1.0, 5),
        b in -1.0f64..1.0,
    ) {
        let data = random_dataset(seed, 40, 5, 7);
        let clamp = 1e-6;
        let (_, grad, grad_b) = logistic_objective(&w, b, &data, clamp, l2);
        let h = 1e-5;
        let f = |w: &[f64], b: f64| logistic_objective(w, b, &data, clamp, l2).0;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..w.len() {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (f(&up, b) - f(&dn, b)) / (2.0 * h);
            num += (fd - grad[j]).powi(2);
            den += grad[j].powi(2);
        }
        let fd_b = (f(&w, b + h) - f(&w, b - h)) / (2.0 * h);
        num += (fd_b - grad_b).powi(2);
        den += grad_b.powi(2);
        prop_assert!(num.sqrt() / den.sqrt().max(1e-12) < 1e-5, "rel err {}", num.sqrt() / den.sqrt());
    }
}

#[test]
fn boosting_loss_never_increases() {
    for seed in 0..5u64 {
        let data = random_dataset(seed, 300, 4, 9);
        let cfg = TrainConfig {
            rounds: 10,
            subsample: if seed % 2 == 0 { 1.0 } else { 0.7 },
            seed,
            ..TrainConfig::trees()
        };
        let (_, trace) = train_trees_traced(&data, &cfg).unwrap();
        assert_eq!(trace.len(), 11);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "dataset {seed}: {trace:?}");
        }
    }
}

#[test]
fn logistic_training_improves_on_start() {
    for seed in 0..5u64 {
        let data = random_dataset(seed, 300, 4, 9);
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::logistic()
        };
        let (_, trace) = train_logistic_traced(&data, &cfg).unwrap();
        let best = trace.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(best < trace[0]);
    }
}

/// Best single split by enumeration: `(gain, feature, left-row mask)`.
fn brute_force_stump(rows: &[Vec<f64>], labels: &[u8], lambda: f64) -> (f64, usize, Vec<bool>) {
    let p = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64;
    let g: Vec<f64> = labels.iter().map(|&y| p - f64::from(y)).collect();
    let h = vec![p * (1.0 - p); labels.len()];
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best = (f64::NEG_INFINITY, 0, Vec::new());
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &v in &values[..values.len() - 1] {
            let mask: Vec<bool> = rows.iter().map(|r| r[f] <= v).collect();
            let gl: f64 = g.iter().zip(&mask).filter(|m| *m.1).map(|m| m.0).sum();
            let hl: f64 = h.iter().zip(&mask).filter(|m| *m.1).map(|m| m.0).sum();
            let gain = split_gain(gl, hl, gt, ht, lambda);
            if gain > best.0 {
                best = (gain, f, mask);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stump_matches_brute_force(
        rows in proptest::collection::vec(proptest::collection::vec(-2i8..=3, 3), 6..40),
        labels_seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let mut rng = RngStream::new(labels_seed, 0).rng();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(r[0] - 0.5 * r[2])))
            .collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let lambda = 1.0;
        let (gain, feature, mask) = brute_force_stump(&rows, &labels, lambda);
        prop_assume!(gain > 1e-9);

        let data = Dataset::from_dense(&rows, &labels).unwrap();
        let cfg = TrainConfig {
            rounds: 1,
            max_depth: 1,
            step: 1.0,
            lambda,
            min_child_weight: 0.0,
            ..TrainConfig::trees()
        };
        let model = train_trees(&data, &cfg).unwrap();
        let Node::Split { feature: f, threshold, gain: g, .. } = model.trees[0].nodes[0].clone() else {
            panic!("expected a split at the root");
        };
        prop_assert!((g - gain).abs() <= 1e-9 * gain.max(1.0), "gain {g} vs {gain}");
        let got: Vec<bool> = rows.iter().map(|r| r[f as usize] <= threshold).collect();
        if f as usize == feature {
            prop_assert_eq!(got, mask);
        }
    }
}

/// Mean absolute error of a logistic oracle trained on uniform logs against
/// the true success probability.
fn logistic_fit_error(misspecification: f64) -> f64 {
    let env = Environment::new(EnvConfig {
        misspecification,
        calibration_contexts: 2000,
        ..EnvConfig::default()
    })
    .unwrap();
    let mut stats = RiskStats::new();
    let logs = bootstrap_gen0(&env, 40_000, &mut stats, bootstrap_stream(11)).unwrap();
    let data = training_set(&env, &logs).unwrap();
    let oracle = Oracle::train(
        &data,
        &TrainConfig {
            rounds: 20,
            ..TrainConfig::logistic()
        },
    )
    .unwrap();
    let mut rng = RngStream::new(12, 0).rng();
    let mut err = 0.0;
    let n = 4000;
    for i in 0..n {
        let ctx = env.gen_context(&mut rng);
        let a = ActionId((i % env.config().n_actions) as u32);
        let p = oracle.predict(&featurize(&ctx, a, env.schema()).unwrap()).unwrap();
        err += (p - env.true_reward_prob(&ctx, a)).abs();
    }
    err / n as f64
}

#[test]
fn linear_world_is_realizable_for_logistic() {
    let realizable = logistic_fit_error(0.0);
    let misspecified = logistic_fit_error(1.0);
    assert!(realizable < misspecified, "{realizable} vs {misspecified}");
    assert!(realizable < 0.05, "{realizable}");
}
