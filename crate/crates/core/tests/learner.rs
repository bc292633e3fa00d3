mod support;

use mtc_core::agent::Action;
use mtc_core::learner::net::argmax;
use mtc_core::learner::{categorical_projection, support as atoms, Learner, LearnerConfig, QNetwork, ReplayBuffer, SumTree, Transition};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_net(seed: u64, input: usize, atoms_n: usize) -> QNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QNetwork::new(input, &[8, 8], 2, atoms(-10.0, 10.0, atoms_n), &mut rng)
}

fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_matches_triangular_kernel(
        seed in any::<u64>(),
        n in 2usize..60,
        k in 1usize..60,
        lo in -100.0f64..0.0,
        width in 0.5f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = atoms(lo, lo + width, n);
        let values: Vec<f64> = (0..k).map(|_| rng.random_range(lo - width..lo + 2.0 * width)).collect();
        let probs = support::random_simplex(&mut rng, k);
        let got = categorical_projection(&values, &probs, &z);
        let want = support::brute_projection(&values, &probs, &z);
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(got.iter().all(|&p| p >= 0.0));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_tree_root_tracks_leaves(ops in prop::collection::vec((0usize..37, 0.0f64..50.0), 1..300)) {
        let mut tree = SumTree::new(37);
        let mut shadow = vec![0.0f64; 37];
        for (i, v) in ops {
            tree.set(i, v);
            shadow[i] = v;
            let want: f64 = shadow.iter().sum();
            prop_assert!((tree.total() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn replay_priorities_match_tree(ops in prop::collection::vec((any::<bool>(), 0usize..64, 0.0f64..20.0), 1..200)) {
        let mut buf = ReplayBuffer::new(16, 0.5);
        for (insert, i, p) in ops {
            if insert || buf.is_empty() {
                buf.insert_with_priority(transition(p));
            } else {
                buf.update_priority(i % buf.len(), p);
            }
            let want: f64 = buf.items().iter().map(|t| t.priority.powf(0.5)).sum();
            prop_assert!(buf.items().iter().all(|t| t.priority >= 0.0));
            prop_assert!(buf.len() <= buf.capacity());
            prop_assert!((buf.tree().total() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn advantage_shift_leaves_output_unchanged(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let net = small_net(seed, 6, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let per_atom: Vec<f64> = (0..net.atoms()).map(|_| rng.random_range(-1.0..1.0) * shift).collect();
        let mut shifted = net.clone();
        for a in 0..net.actions {
            for z in 0..net.atoms() {
                shifted.advantage.b[a * net.atoms() + z] += per_atom[z];
            }
        }
        let obs = random_obs(&mut rng, 6);
        let p = net.forward(&obs).unwrap();
        let q = shifted.forward(&obs).unwrap();
        for (x, y) in p.iter().zip(q.iter()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn argmax_survives_affine_support_change(seed in any::<u64>(), scale in 0.01f64..100.0, offset in -100.0f64..100.0) {
        let net = small_net(seed, 5, 21);
        let mut scaled = net.clone();
        scaled.support = net.support.iter().map(|z| scale * z + offset).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let obs = random_obs(&mut rng, 5);
        let q = net.q_values(&obs).unwrap();
        let q2 = scaled.q_values(&obs).unwrap();
        if (q[0] - q[1]).abs() > 1e-9 {
            prop_assert_eq!(argmax(&q), argmax(&q2));
        }
    }
}

fn transition(p: f64) -> Transition {
    Transition {
        obs: vec![0.0],
        action: Action::Go,
        reward: 0.0,
        next_obs: vec![0.0],
        terminal: false,
        priority: p,
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..5 {
        let net = small_net(100 + trial, 4, 7);
        let b = 5;
        let x = Array2::from_shape_fn((b, 4), |_| rng.random_range(-2.0..2.0));
        let actions: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        let mut targets = Array2::zeros((b, 7));
        for i in 0..b {
            let m = support::random_simplex(&mut rng, 7);
            targets.row_mut(i).assign(&ndarray::ArrayView1::from(&m));
        }
        let weights: Vec<f64> = (0..b).map(|_| rng.random_range(0.1..1.0)).collect();
        let err = support::gradient_check(&net, x.view(), &actions, &targets, &weights, 1e-5, 1e-6);
        assert!(err < 1e-4, "trial {trial}: relative error {err}");
    }
}

#[test]
fn training_is_bit_reproducible() {
    let cfg = LearnerConfig {
        hidden: vec![16, 16],
        batch_size: 8,
        learning_starts: 16,
        buffer_capacity: 64,
        target_sync: 10,
        train_every: 1,
        ..LearnerConfig::default()
    };
    let run = || {
        let mut l = Learner::new(cfg.clone(), 3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..120 {
            let t = Transition {
                obs: random_obs(&mut rng, 3),
                action: if rng.random() { Action::Go } else { Action::Stop },
                reward: rng.random_range(-5.0..0.0),
                next_obs: random_obs(&mut rng, 3),
                terminal: rng.random_bool(0.1),
                priority: 0.0,
            };
            l.observe(t).unwrap();
        }
        (l.online.flat(), l.target.flat(), l.train_steps)
    };
    let (a, b) = (run(), run());
    assert!(a.2 > 0);
    assert_eq!(a, b);
}

#[test]
fn expected_values_are_dot_products() {
    let net = small_net(3, 4, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let obs = random_obs(&mut rng, 4);
        let p = net.forward(&obs).unwrap();
        let q = net.q_values(&obs).unwrap();
        for a in 0..2 {
            let mut want = 0.0;
            for z in 0..net.atoms() {
                want += p[[a, z]] * net.support[z];
            }
            assert!((q[a] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn full_exploration_is_balanced() {
    let net = small_net(5, 3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    let go = (0..n)
        .filter(|_| mtc_core::learner::select_action(&net, &[0.0; 3], 1.0, &mut rng).unwrap() == Action::Go)
        .count() as f64;
    let sd = (n as f64 * 0.25).sqrt();
    assert!((go - n as f64 / 2.0).abs() <= 3.0 * sd, "{go} Go of {n}");
}

/// Network over one-hot states with no hidden layer whose per-action
/// distributions are exactly `dists[state][action]`.
fn tabular(dists: [[[f64; 3]; 2]; 2], support: Vec<f64>) -> QNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = QNetwork::new(2, &[], 2, support, &mut rng);
    net.value.b.fill(0.0);
    net.advantage.b.fill(0.0);
    for s in 0..2 {
        for z in 0..3 {
            let logits: Vec<f64> = (0..2).map(|a| dists[s][a][z].ln()).collect();
            net.value.w[[s, z]] = logits.iter().sum::<f64>() / 2.0;
            for a in 0..2 {
                net.advantage.w[[s, a * 3 + z]] = logits[a];
            }
        }
    }
    net
}

#[test]
fn double_q_target_on_a_tabular_problem() {
    let support = vec![-1.0, 0.0, 1.0];
    // Online: in state 1, action 1 looks better (mean 0.4 vs -0.2).
    let online = tabular(
        [[[0.2, 0.6, 0.2], [0.3, 0.4, 0.3]], [[0.5, 0.2, 0.3], [0.1, 0.4, 0.5]]],
        support.clone(),
    );
    // Target distributions differ so online/target roles are distinguishable.
    let target = tabular(
        [[[0.1, 0.8, 0.1], [0.4, 0.2, 0.4]], [[0.7, 0.2, 0.1], [0.2, 0.2, 0.6]]],
        support,
    );
    let q = online.q_values(&[0.0, 1.0]).unwrap();
    assert!(q[1] > q[0]);
    let next = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let got = mtc_core::learner::double_q_targets(&online, &target, next.view(), &[0.5, -0.25], &[false, true], 0.5)
        .unwrap();
    // r + 0.5 z with r = 0.5 lands on atoms (0, 0.5, 1): the target's action-1
    // masses (0.2, 0.2, 0.6) become (0, 0.2 + 0.1, 0.1 + 0.6).
    let want0 = [0.0, 0.3, 0.7];
    // Terminal reward -0.25 splits 1/4 to atom -1 and 3/4 to atom 0.
    let want1 = [0.25, 0.75, 0.0];
    for z in 0..3 {
        assert!((got[[0, z]] - want0[z]).abs() < 1e-9, "{:?}", got.row(0));
        assert!((got[[1, z]] - want1[z]).abs() < 1e-9, "{:?}", got.row(1));
    }
}

#[test]
fn repeated_steps_on_one_batch_reduce_the_loss() {
    let cfg = LearnerConfig {
        hidden: vec![32, 32],
        batch_size: 16,
        learning_starts: 16,
        target_sync: 1_000_000,
        ..LearnerConfig::default()
    };
    let mut l = Learner::new(cfg, 6, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..16 {
        l.buffer.push(Transition {
            obs: random_obs(&mut rng, 6),
            action: if rng.random() { Action::Go } else { Action::Stop },
            reward: rng.random_range(-20.0..20.0),
            next_obs: random_obs(&mut rng, 6),
            terminal: rng.random_bool(0.2),
            priority: 0.0,
        });
    }
    let batch = l.sample_batch().unwrap();
    let mut last = f64::INFINITY;
    for i in 0..20 {
        let loss = l.train_step(&batch).unwrap().loss;
        assert!(loss < last, "step {i}: {loss} >= {last}");
        last = loss;
    }
}
