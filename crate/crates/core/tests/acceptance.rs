//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! The criteria combine exact property checks (gradient, prox, metric
//! identities) with directional replications on planted synthetic data
//! (recovery, imbalance preprocessing, baseline ordering). Oracles are
//! straight-line re-implementations kept independent of the production paths
//! they check.

use std::time::Instant;

use careflow::baselines::MarkovModel;
use careflow::datagen::{generate, GeneratorConfig, PlantedParams};
use careflow::imbalance::{synthesize_balanced, BalanceMode, ClassCounts};
use careflow::learner::{
    admm_fit, class_probabilities, group_lasso_prox, loss, ParameterMatrix, SolverConfig,
    SparseMatrix, TrainSample,
};
use careflow::model::{FeatureVector, KernelConfig};
use careflow::predict::{
    accuracy_report, relative_sim_error, simulate_cohort, OccupancyMatrix, PointProcessModel,
    TransitionModel,
};
use careflow::samples::{extract_samples, TrainingSet};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

/// Straight-line re-implementation of the two-head cross entropy, independent
/// of the production evaluation path; the finite-difference oracle runs on it.
fn oracle_loss(values: &Array2<f64>, num_states: usize, samples: &[TrainSample]) -> f64 {
    let cols = values.ncols();
    let mut total = 0.0;
    for s in samples {
        let f = s.feature.values();
        let mut logits = vec![0.0; cols];
        for (col, logit) in logits.iter_mut().enumerate() {
            for (m, &x) in f.iter().enumerate() {
                *logit += values[[m, col]] * x;
            }
        }
        let state_max = logits[..num_states].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let state_lse = state_max
            + logits[..num_states]
                .iter()
                .map(|z| (z - state_max).exp())
                .sum::<f64>()
                .ln();
        total -= s.weight * (logits[s.state - 1] - state_lse);
        if let Some(d) = s.duration {
            let dur = &logits[num_states..];
            let dur_max = dur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dur_lse = dur_max + dur.iter().map(|z| (z - dur_max).exp()).sum::<f64>().ln();
            total -= s.weight * (dur[d - 1] - dur_lse);
        }
    }
    total
}

/// Criterion 1: analytic gradients match central finite differences of the
/// independent loss on randomized instances. The relative error uses a small
/// floor so near-zero entries are checked in absolute terms (the difference
/// quotient itself carries ~1e-8 of rounding noise at step 1e-6).
#[test]
fn criterion_1_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let m = rng.random_range(2..=30);
        let k = rng.random_range(2..=5);
        let n = rng.random_range(1..=10);
        let values = Array2::from_shape_simple_fn((m, 2 * k), || rng.random_range(-1.0..1.0));
        let params = ParameterMatrix::new(values.clone(), k, k).unwrap();
        let samples: Vec<TrainSample> = (0..n)
            .map(|_| {
                let feats: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                let state = rng.random_range(1..=k);
                let duration = if rng.random::<f64>() < 0.2 {
                    None
                } else {
                    Some(rng.random_range(1..=k))
                };
                TrainSample::new(FeatureVector::new(feats).unwrap(), state, duration)
                    .with_weight(rng.random_range(0.5..2.0))
            })
            .collect();
        let grad = careflow::learner::gradient(&params, &samples).unwrap();
        let h = 1e-6;
        for row in 0..m {
            for col in 0..2 * k {
                let mut plus = values.clone();
                plus[[row, col]] += h;
                let mut minus = values.clone();
                minus[[row, col]] -= h;
                let fd = (oracle_loss(&plus, k, &samples) - oracle_loss(&minus, k, &samples))
                    / (2.0 * h);
                let err = (grad[[row, col]] - fd).abs() / fd.abs().max(grad[[row, col]].abs()).max(1e-3);
                worst = worst.max(err);
                assert!(
                    err < 1e-5,
                    "instance {instance} entry ({row},{col}): grad {} fd {fd}",
                    grad[[row, col]]
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "1 gradient-correctness",
        worst < 1e-5 && elapsed < 10.0,
        &format!("worst relative error {worst:.2e}, {elapsed:.1}s"),
    );
}

/// Criterion 2: prox optimality conditions on random matrices, and agreement
/// with a golden-section minimizer of the one-row prox objective.
#[test]
fn criterion_2_prox_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=12);
        let k = rng.random_range(1..=8);
        let v = Array2::from_shape_simple_fn((m, k), || rng.random_range(-4.0..4.0));
        let tau = rng.random_range(0.0..5.0);
        let x = group_lasso_prox(&v, tau).unwrap();
        for row in 0..m {
            let norm_x: f64 = (0..k).map(|j| x[[row, j]] * x[[row, j]]).sum::<f64>().sqrt();
            if norm_x == 0.0 {
                let norm_v: f64 = (0..k).map(|j| v[[row, j]] * v[[row, j]]).sum::<f64>().sqrt();
                worst_kkt = worst_kkt.max(norm_v - tau);
                assert!(norm_v <= tau + 1e-10);
            } else {
                for j in 0..k {
                    let residual = v[[row, j]] - x[[row, j]] - tau * x[[row, j]] / norm_x;
                    worst_kkt = worst_kkt.max(residual.abs());
                    assert!(residual.abs() < 1e-10);
                }
            }
        }
    }

    // One-row instances against golden-section search along the ray through v
    // (the prox objective is spherically symmetric around that ray).
    let mut worst_gap: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=6);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tau = rng.random_range(0.0..3.0);
        let norm_v: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let objective = |s: f64| 0.5 * (norm_v - s) * (norm_v - s) + tau * s;
        let (mut lo, mut hi) = (0.0, norm_v.max(1e-9));
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if objective(a) < objective(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let s_star = 0.5 * (lo + hi);
        let matrix = Array2::from_shape_vec((1, k), v.clone()).unwrap();
        let x = group_lasso_prox(&matrix, tau).unwrap();
        for j in 0..k {
            let golden = if norm_v == 0.0 { 0.0 } else { s_star * v[j] / norm_v };
            worst_gap = worst_gap.max((x[[0, j]] - golden).abs());
            assert!(
                (x[[0, j]] - golden).abs() < 1e-6,
                "prox {} vs golden-section {golden}",
                x[[0, j]]
            );
        }
    }
    report(
        "2 prox-correctness",
        true,
        &format!("worst KKT residual {worst_kkt:.2e}, worst golden-section gap {worst_gap:.2e}"),
    );
}

/// Independent unregularized two-head multinomial regression oracle: gradient
/// descent with backtracking line search on a straight-line loss/gradient.
fn oracle_multinomial_fit(samples: &[TrainSample], m: usize, k: usize) -> (Array2<f64>, f64) {
    let cols = 2 * k;
    let grad_at = |values: &Array2<f64>| -> Array2<f64> {
        let mut grad = Array2::<f64>::zeros((m, cols));
        for s in samples {
            let f = s.feature.values();
            let mut logits = vec![0.0; cols];
            for (col, logit) in logits.iter_mut().enumerate() {
                for (row, &x) in f.iter().enumerate() {
                    *logit += values[[row, col]] * x;
                }
            }
            let state_max = logits[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let state_norm: f64 = logits[..k].iter().map(|z| (z - state_max).exp()).sum();
            for c in 0..k {
                let p = (logits[c] - state_max).exp() / state_norm;
                let indicator = if s.state - 1 == c { 1.0 } else { 0.0 };
                for (row, &x) in f.iter().enumerate() {
                    grad[[row, c]] += s.weight * (p - indicator) * x;
                }
            }
            if let Some(d) = s.duration {
                let dur_max = logits[k..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let dur_norm: f64 = logits[k..].iter().map(|z| (z - dur_max).exp()).sum();
                for c in 0..k {
                    let p = (logits[k + c] - dur_max).exp() / dur_norm;
                    let indicator = if d - 1 == c { 1.0 } else { 0.0 };
                    for (row, &x) in f.iter().enumerate() {
                        grad[[row, k + c]] += s.weight * (p - indicator) * x;
                    }
                }
            }
        }
        grad
    };

    let mut values = Array2::<f64>::zeros((m, cols));
    let mut current = oracle_loss(&values, k, samples);
    for _ in 0..20_000 {
        let grad = grad_at(&values);
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-9 {
            break;
        }
        let mut step = 1.0;
        loop {
            let mut candidate = values.clone();
            candidate.zip_mut_with(&grad, |v, &g| *v -= step * g);
            let next = oracle_loss(&candidate, k, samples);
            if next <= current - 0.5 * step * norm * norm || step < 1e-12 {
                values = candidate;
                current = next;
                break;
            }
            step *= 0.5;
        }
    }
    (values, current)
}

/// Criterion 3: with gamma = 0 and the LR kernel, the solver's final loss
/// matches the independent multinomial-regression oracle.
#[test]
fn criterion_3_lr_equivalence() {
    let start = Instant::now();
    // Small and noisy on purpose: the unregularized optimum is interior and
    // well-conditioned, so both solvers can reach it to high precision.
    let config = GeneratorConfig {
        num_subjects: 18,
        num_states: 3,
        num_durations: 3,
        static_dim: 2,
        event_dim: 3,
        planted: PlantedParams::Recipe {
            nonzero_rows: 3,
            magnitude: (0.2, 0.5),
        },
        profile_template: vec![0.5; 2],
        state_templates: vec![vec![0.5; 3]; 3],
        kernel: KernelConfig::lr(),
        label_profile: None,
        window: 12.0,
        seed: 33,
    };
    let (sequences, _) = generate(&config).unwrap();
    let training = extract_samples(&sequences, &KernelConfig::lr()).unwrap();
    let samples: Vec<TrainSample> = training.to_train_samples(None).unwrap()[..50.min(training.samples.len())].to_vec();
    assert!(samples.len() >= 50, "instance has {} samples", samples.len());

    // A stable constant step for the smooth term is 1/L with
    // L <= sum_i w_i ||f_i||^2 / 2 per head; the per-round decay divides it
    // further, so start just under that bound.
    let lipschitz: f64 = samples
        .iter()
        .map(|s| s.weight * s.feature.values().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / 2.0;
    let solver = SolverConfig {
        gamma: 0.0,
        rho: 0.01,
        beta0: 1.5 / lipschitz,
        epsilon: 1e-13,
        max_outer: 12,
        max_inner: 30_000,
        seed: 7,
        batch_size: None,
    };
    let outcome = admm_fit(&samples, 3, 3, &solver).unwrap();
    let m = samples[0].feature.len();
    let (_, oracle_optimum) = oracle_multinomial_fit(&samples, m, 3);
    let gap = (outcome.report.final_loss - oracle_optimum).abs();
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "3 lr-equivalence",
        gap < 1e-3 && elapsed < 30.0,
        &format!(
            "solver loss {:.6}, oracle loss {oracle_optimum:.6}, gap {gap:.2e}, {elapsed:.1}s",
            outcome.report.final_loss
        ),
    );
}

fn sparsity_instance() -> (Vec<TrainSample>, usize, usize) {
    let config = GeneratorConfig {
        num_subjects: 40,
        num_states: 3,
        num_durations: 3,
        static_dim: 6,
        event_dim: 10,
        planted: PlantedParams::Recipe {
            nonzero_rows: 6,
            magnitude: (1.0, 2.0),
        },
        profile_template: vec![0.5; 6],
        state_templates: vec![vec![0.35; 10]; 3],
        kernel: KernelConfig::mcp(2.0).unwrap(),
        label_profile: None,
        window: 14.0,
        seed: 44,
    };
    let (sequences, _) = generate(&config).unwrap();
    let training = extract_samples(&sequences, &KernelConfig::mcp(2.0).unwrap()).unwrap();
    let samples = training.to_train_samples(None).unwrap();
    (samples, 3, 3)
}

/// Criterion 4: nonzero-row counts are non-increasing in gamma, a huge gamma
/// zeroes everything, and zero rows span both heads jointly.
#[test]
fn criterion_4_sparsity_behavior() {
    let (samples, c, d) = sparsity_instance();
    let gammas = [0.0, 0.1, 1.0, 10.0, 1e6];
    let mut nonzero_counts = Vec::new();
    for &gamma in &gammas {
        let solver = SolverConfig {
            gamma,
            rho: 1.0,
            beta0: 0.1,
            epsilon: 1e-6,
            max_outer: 60,
            max_inner: 400,
            seed: 11,
            batch_size: None,
        };
        let outcome = admm_fit(&samples, c, d, &solver).unwrap();
        nonzero_counts.push(outcome.params.nonzero_rows().len());

        // Zero rows must span both heads jointly.
        for m in 0..outcome.params.num_features() {
            let state_zero = outcome.params.state_head().row(m).iter().all(|&v| v == 0.0);
            let dur_zero = outcome.params.duration_head().row(m).iter().all(|&v| v == 0.0);
            assert_eq!(
                state_zero, dur_zero,
                "gamma {gamma}: row {m} is zero in one head only"
            );
        }
    }
    let monotone = nonzero_counts.windows(2).all(|w| w[1] <= w[0]);
    let all_zero = *nonzero_counts.last().unwrap() == 0;
    report(
        "4 sparsity-behavior",
        monotone && all_zero,
        &format!("nonzero rows across gammas {nonzero_counts:?}"),
    );
}

/// On a run that hits the stopping rule, the primal residual is small relative
/// to the iterate's size (backing criterion 4's returned sparse iterate).
#[test]
fn primal_residual_is_small_on_converged_runs() {
    let (samples, c, d) = sparsity_instance();
    let solver = SolverConfig {
        gamma: 0.5,
        rho: 1.0,
        beta0: 0.05,
        epsilon: 1e-3,
        max_outer: 400,
        max_inner: 400,
        seed: 2,
        batch_size: None,
    };
    let outcome = admm_fit(&samples, c, d, &solver).unwrap();
    assert!(outcome.report.converged, "run did not hit the stopping rule");
    let bound = 10.0 * solver.epsilon * outcome.theta.frobenius_norm();
    assert!(
        outcome.report.primal_residual <= bound,
        "primal residual {} above 10*epsilon*|theta| = {bound}",
        outcome.report.primal_residual
    );
}

fn recovery_config() -> GeneratorConfig {
    GeneratorConfig {
        num_subjects: 2000,
        num_states: 4,
        num_durations: 4,
        static_dim: 10,
        event_dim: 30,
        planted: PlantedParams::Recipe {
            nonzero_rows: 12,
            magnitude: (3.0, 5.0),
        },
        profile_template: vec![0.5; 10],
        state_templates: (0..4)
            .map(|c| {
                (0..30)
                    .map(|j| if j % 4 == c { 0.8 } else { 0.1 })
                    .collect()
            })
            .collect(),
        kernel: KernelConfig::mcp(2.5).unwrap(),
        label_profile: None,
        window: 12.0,
        seed: 2024,
    }
}

/// Criterion 5: a model fit on planted data reproduces the planted model's
/// argmax predictions on held-out events.
#[test]
fn criterion_5_recovery() {
    let start = Instant::now();
    let config = recovery_config();
    let (sequences, planted) = generate(&config).unwrap();
    let kernel = config.kernel;
    let split = (sequences.len() * 4) / 5;
    let train = extract_samples(&sequences[..split], &kernel).unwrap();
    let test = extract_samples(&sequences[split..], &kernel).unwrap();
    assert!(!test.samples.is_empty());

    let solver = SolverConfig {
        gamma: 1.0,
        rho: 1.0,
        beta0: 1e-3,
        epsilon: 1e-5,
        max_outer: 30,
        max_inner: 200,
        seed: 5,
        batch_size: None,
    };
    let train_samples = train.to_train_samples(None).unwrap();
    let outcome = admm_fit(&train_samples, 4, 4, &solver).unwrap();

    let mut agree = 0usize;
    let mut total = 0usize;
    for sample in &test.samples {
        let fitted_state = argmax1(&class_probabilities(outcome.params.state_head(), &sample.feature).unwrap());
        let planted_state = argmax1(&class_probabilities(planted.state_head(), &sample.feature).unwrap());
        let fitted_dur = argmax1(&class_probabilities(outcome.params.duration_head(), &sample.feature).unwrap());
        let planted_dur = argmax1(&class_probabilities(planted.duration_head(), &sample.feature).unwrap());
        total += 1;
        if fitted_state == planted_state && fitted_dur == planted_dur {
            agree += 1;
        }
    }
    let agreement = agree as f64 / total as f64;
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "5 recovery",
        agreement >= 0.90 && elapsed < 300.0,
        &format!(
            "argmax agreement {agreement:.3} on {total} held-out events, {} nonzero rows, {elapsed:.0}s",
            outcome.params.nonzero_rows().len()
        ),
    );
}

fn argmax1(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best + 1
}

/// Planted scenario for the imbalance replication: a cyclic majority flow
/// driven by per-state feature blocks, plus a rare trigger bit in state 1's
/// template that sends the subject to state 4 with probability just below the
/// majority continuation, so the minority class is only recoverable once the
/// training set is balanced.
fn imbalance_config() -> GeneratorConfig {
    let static_dim = 6;
    let event_dim = 12;
    let c = 4;
    let d = 4;
    let m = static_dim + event_dim;
    let mut values = Array2::<f64>::zeros((m, c + d));
    // Event-feature rows start at static_dim. Blocks b1..b3 drive the cycle
    // 1 -> 2 -> 3 -> 1 and durations 1..3; state 4's block returns to state 1.
    // Weights are large so softmax tails stay empty: the observed joint
    // classes are exactly the designed ones.
    for (block, (next_state, duration)) in [(1usize, 1usize), (2, 2), (0, 3)].iter().enumerate() {
        for bit in 0..3 {
            let row = static_dim + 3 * block + bit;
            values[[row, *next_state]] = 4.0;
            values[[row, c + *duration - 1]] = 4.0;
        }
    }
    for bit in 9..11 {
        values[[static_dim + bit, 0]] = 6.0;
        values[[static_dim + bit, c]] = 6.0;
    }
    // Trigger bit 11: pushes toward state 4 / duration 4, but stays slightly
    // below the majority continuation logit (~12.0 from three block bits), so
    // the prior decides against the minority class until the data is balanced.
    values[[static_dim + 11, 3]] = 11.5;
    values[[static_dim + 11, c + 3]] = 11.5;

    let mut state_templates = Vec::new();
    for state in 0..c {
        let mut template = vec![0.0; event_dim];
        match state {
            0 => {
                template[0] = 1.0;
                template[1] = 1.0;
                template[2] = 1.0;
                template[11] = 0.08;
            }
            1 => {
                template[3] = 1.0;
                template[4] = 1.0;
                template[5] = 1.0;
            }
            2 => {
                template[6] = 1.0;
                template[7] = 1.0;
                template[8] = 1.0;
            }
            _ => {
                template[9] = 1.0;
                template[10] = 1.0;
            }
        }
        state_templates.push(template);
    }
    let planted = ParameterMatrix::new(values, c, d).unwrap();
    GeneratorConfig {
        num_subjects: 2200,
        num_states: c,
        num_durations: d,
        static_dim,
        event_dim,
        planted: PlantedParams::Explicit(SparseMatrix::from(&planted)),
        profile_template: vec![0.5; static_dim],
        state_templates,
        kernel: KernelConfig::mcp(0.8).unwrap(),
        label_profile: None,
        window: 14.0,
        seed: 777,
    }
}

struct EvalSplit {
    train: TrainingSet,
    test: TrainingSet,
}

fn imbalance_split() -> EvalSplit {
    let config = imbalance_config();
    let (sequences, _) = generate(&config).unwrap();
    let split = (sequences.len() * 4) / 5;
    let kernel = config.kernel;
    EvalSplit {
        train: extract_samples(&sequences[..split], &kernel).unwrap(),
        test: extract_samples(&sequences[split..], &kernel).unwrap(),
    }
}

fn fit_and_eval(train_samples: &[TrainSample], test: &TrainingSet) -> (Vec<Option<f64>>, f64, f64) {
    let solver = SolverConfig {
        gamma: 1.0,
        rho: 1.0,
        beta0: 0.01,
        epsilon: 1e-5,
        max_outer: 30,
        max_inner: 200,
        seed: 13,
        batch_size: None,
    };
    let outcome = admm_fit(train_samples, 4, 4, &solver).unwrap();
    let mut state_preds = Vec::new();
    let mut state_truths = Vec::new();
    let mut dur_preds = Vec::new();
    let mut dur_truths = Vec::new();
    for sample in &test.samples {
        state_preds.push(argmax1(
            &class_probabilities(outcome.params.state_head(), &sample.feature).unwrap(),
        ));
        state_truths.push(sample.state);
        if let Some(d) = sample.duration {
            dur_preds.push(argmax1(
                &class_probabilities(outcome.params.duration_head(), &sample.feature).unwrap(),
            ));
            dur_truths.push(d);
        }
    }
    let state_report = accuracy_report(&state_preds, &state_truths, 4).unwrap();
    let dur_report = accuracy_report(&dur_preds, &dur_truths, 4).unwrap();
    (state_report.per_class, state_report.overall, dur_report.overall)
}

/// Criterion 6: synthetic oversampling lifts the minority class without
/// hurting the overall accuracy.
#[test]
fn criterion_6_imbalance_directional_replication() {
    let split = imbalance_split();
    let counts = ClassCounts::from_labels(split.train.samples.iter().map(|s| s.labels()));
    let minor = counts.joint_count((4, Some(4)));
    let total: usize = counts.iter().map(|(_, &n)| n).sum();
    let minor_share = counts.state_total(4) as f64 / total as f64;
    assert!(
        minor > 10 && minor_share < 0.03,
        "minority state share {minor_share:.4} ({minor} samples in its top joint class) is not rare"
    );

    let plain = split.train.to_train_samples(None).unwrap();
    let (plain_per_class, plain_overall, plain_dur_overall) = fit_and_eval(&plain, &split.test);

    let balanced = synthesize_balanced(&split.train, 99, BalanceMode::Joint).unwrap();
    let balanced_counts = ClassCounts::from_labels(balanced.samples.iter().map(|s| s.labels()));
    assert_eq!(balanced_counts.max_count(), balanced_counts.min_count());
    let balanced_samples = balanced.to_train_samples(None).unwrap();
    let (bal_per_class, bal_overall, bal_dur_overall) = fit_and_eval(&balanced_samples, &split.test);

    let minor_before = plain_per_class[3].unwrap_or(0.0);
    let minor_after = bal_per_class[3].unwrap_or(0.0);
    let improvement = minor_after - minor_before;
    let state_degradation = plain_overall - bal_overall;
    let dur_degradation = plain_dur_overall - bal_dur_overall;
    report(
        "6 imbalance-replication",
        improvement >= 0.10 && state_degradation < 0.05 && dur_degradation < 0.05,
        &format!(
            "minor-class accuracy {minor_before:.3} -> {minor_after:.3} (+{improvement:.3}), \
             overall state {plain_overall:.3} -> {bal_overall:.3}, \
             overall duration {plain_dur_overall:.3} -> {bal_dur_overall:.3}, \
             minority share {minor_share:.4}"
        ),
    );
}

/// Feature-driven scenario for the baseline ordering: the destination from
/// each state is a coin decided by a noisy bit of the current event, which a
/// first-order chain on labels cannot see.
fn ordering_config() -> GeneratorConfig {
    let static_dim = 4;
    let event_dim = 8;
    let c = 4;
    let d = 3;
    let m = static_dim + event_dim;
    let mut values = Array2::<f64>::zeros((m, c + d));
    for state in 0..c {
        let base_row = static_dim + 2 * state;
        let flip_row = base_row + 1;
        let a = (state + 1) % c;
        let b = (state + 2) % c;
        values[[base_row, b]] = 3.0;
        values[[flip_row, a]] = 6.0;
        values[[flip_row, b]] = -1.0;
        values[[base_row, c + state % d]] = 3.0;
    }
    let planted = ParameterMatrix::new(values, c, d).unwrap();
    let mut state_templates = Vec::new();
    for state in 0..c {
        let mut template = vec![0.02; event_dim];
        template[2 * state] = 0.98;
        template[2 * state + 1] = 0.5;
        state_templates.push(template);
    }
    GeneratorConfig {
        num_subjects: 1500,
        num_states: c,
        num_durations: d,
        static_dim,
        event_dim,
        planted: PlantedParams::Explicit(SparseMatrix::from(&planted)),
        profile_template: vec![0.5; static_dim],
        state_templates,
        kernel: KernelConfig::mcp(0.8).unwrap(),
        label_profile: None,
        window: 12.0,
        seed: 555,
    }
}

/// Criterion 7: the discriminative model beats the Markov-chain baseline on
/// feature-driven data by a wide margin.
#[test]
fn criterion_7_baseline_ordering() {
    let config = ordering_config();
    let (sequences, _) = generate(&config).unwrap();
    let split = (sequences.len() * 4) / 5;
    let kernel = config.kernel;
    let train_seqs = &sequences[..split];
    let test_seqs = &sequences[split..];

    let train = extract_samples(train_seqs, &kernel).unwrap();
    let solver = SolverConfig {
        gamma: 1.0,
        rho: 1.0,
        beta0: 0.05,
        epsilon: 1e-5,
        max_outer: 30,
        max_inner: 200,
        seed: 3,
        batch_size: None,
    };
    let outcome = admm_fit(&train.to_train_samples(None).unwrap(), 4, 3, &solver).unwrap();
    let fitted = PointProcessModel {
        params: outcome.params,
        kernel,
    };
    let markov = MarkovModel::fit(train_seqs, 4, 3).unwrap();

    let mut fitted_preds = Vec::new();
    let mut markov_preds = Vec::new();
    let mut truths = Vec::new();
    for seq in test_seqs {
        for i in 1..seq.events.len() {
            let t = seq.events[i - 1].time;
            fitted_preds.push(fitted.predict_state(seq, i, t).unwrap());
            markov_preds.push(markov.predict_state(seq, i, t).unwrap());
            truths.push(seq.events[i].state);
        }
    }
    let fitted_ac = accuracy_report(&fitted_preds, &truths, 4).unwrap().overall;
    let markov_ac = accuracy_report(&markov_preds, &truths, 4).unwrap().overall;
    report(
        "7 baseline-ordering",
        fitted_ac - markov_ac >= 0.10,
        &format!("model overall AC {fitted_ac:.3} vs markov {markov_ac:.3} on {} events", truths.len()),
    );
}

/// Criterion 8: metric and simulation identities plus softmax normalization on
/// a million random evaluations.
#[test]
fn criterion_8_metric_and_simulation_identities() {
    // All-correct predictions give accuracy 1 everywhere.
    let truths: Vec<usize> = (0..60).map(|i| 1 + i % 3).collect();
    let all_correct = accuracy_report(&truths, &truths, 3).unwrap();
    assert!(all_correct.per_class.iter().all(|a| *a == Some(1.0)));
    assert_eq!(all_correct.overall, 1.0);

    // sim = real gives zero error.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC8);
    let counts = Array2::from_shape_simple_fn((5, 7), || rng.random_range(1.0..40.0));
    let occupancy = OccupancyMatrix::new(counts).unwrap();
    let err = relative_sim_error(&occupancy, &occupancy).unwrap();
    assert!(err.per_state.iter().all(|&e| e == 0.0));
    assert_eq!(err.overall, 0.0);

    // Simulated daily totals equal the cohort size.
    let model = PointProcessModel {
        params: ParameterMatrix::zeros(4, 3, 4).unwrap(),
        kernel: KernelConfig::mpp(),
    };
    let cohort: Vec<_> = (0..40)
        .map(|i| {
            careflow::model::EventSequence::new(
                format!("p{i}"),
                1,
                3,
                vec![0],
                vec![careflow::model::Event {
                    time: 1.0,
                    state: 1 + i % 3,
                    duration: None,
                    features: vec![i % 3],
                }],
                50.0,
            )
            .unwrap()
        })
        .collect();
    let occ = simulate_cohort(&model, &model, &cohort, 7, 3, 21).unwrap();
    for total in occ.daily_totals() {
        assert!((total - 40.0).abs() < 1e-9, "daily total {total}");
    }

    // Softmax outputs sum to 1 within 1e-12 over a million random evaluations.
    let mut worst: f64 = 0.0;
    let theta = Array2::from_shape_simple_fn((5, 7), || rng.random_range(-3.0..3.0));
    for _ in 0..1_000_000 {
        let f = FeatureVector::new((0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let p = class_probabilities(theta.view(), &f).unwrap();
        let sum: f64 = p.iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    report(
        "8 metric-and-simulation-identities",
        worst < 1e-12,
        &format!("worst softmax normalization gap {worst:.2e}"),
    );
}

/// The loss with gamma = 0 stays convex along random segments (solver-side
/// sanity backing criteria 3 and 5).
#[test]
fn loss_convexity_on_random_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let samples: Vec<TrainSample> = (0..10)
        .map(|i| {
            let feats: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            TrainSample::new(FeatureVector::new(feats).unwrap(), 1 + i % 3, Some(1 + i % 2))
        })
        .collect();
    for _ in 0..50 {
        let a = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-2.0..2.0));
        let b = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-2.0..2.0));
        let lambda: f64 = rng.random_range(0.0..1.0);
        let mix = &a * lambda + &b * (1.0 - lambda);
        let la = loss(&ParameterMatrix::new(a, 3, 2).unwrap(), &samples).unwrap();
        let lb = loss(&ParameterMatrix::new(b, 3, 2).unwrap(), &samples).unwrap();
        let lm = loss(&ParameterMatrix::new(mix, 3, 2).unwrap(), &samples).unwrap();
        assert!(lm <= lambda * la + (1.0 - lambda) * lb + 1e-9);
    }
}
