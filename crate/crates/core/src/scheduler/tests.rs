use super::*;
use crate::agents::{GaussianPolicy, ReplayBuffer, Transition};
use crate::rng::stream;

fn const_q_net(obs_dim: usize, biases: &[f64]) -> Mlp {
    let mut net = Mlp::zeros(obs_dim, &[], biases.len());
    net.out_b.copy_from_slice(biases);
    net
}

fn ref_rows(rows: usize, obs_dim: usize) -> Matrix {
    Matrix::zeros(rows, obs_dim)
}

#[test]
fn divergence_zero_for_identical_nets() {
    let net = const_q_net(3, &[0.1, 0.7, 0.3]);
    let d = behavioral_divergence(&net, &net, &ref_rows(16, 3));
    assert_eq!(d, 0.0);
}

#[test]
fn divergence_one_when_every_argmax_flips() {
    let a = const_q_net(2, &[1.0, 0.0]);
    let b = const_q_net(2, &[0.0, 1.0]);
    assert_eq!(behavioral_divergence(&a, &b, &ref_rows(8, 2)), 1.0);
}

#[test]
fn divergence_ties_break_to_lowest_index_in_both() {
    // All-zero outputs in both nets: argmax is action 0 everywhere.
    let a = Mlp::zeros(2, &[], 3);
    let b = Mlp::zeros(2, &[], 3);
    assert_eq!(behavioral_divergence(&a, &b, &ref_rows(5, 2)), 0.0);
}

#[test]
fn divergence_is_a_mean_over_reference_states() {
    // New net: Q = [x, 0], so the greedy action depends on the sign of x.
    let mut new = Mlp::zeros(1, &[], 2);
    new.out_w.set(0, 0, 1.0);
    // Old net always picks action 0.
    let old = const_q_net(1, &[0.0, -100.0]);
    let mut obs = Matrix::zeros(10, 1);
    for i in 0..10 {
        obs.set(i, 0, if i < 5 { 1.0 } else { -1.0 });
    }
    assert_eq!(behavioral_divergence(&new, &old, &obs), 0.5);
}

#[test]
fn divergence_counts_one_mismatch_of_four() {
    // Greedy actions new = [1,2,0,3] vs old = [1,0,0,3] on one-hot states.
    let build = |greedy: [usize; 4]| {
        let mut net = Mlp::zeros(4, &[], 4);
        for (state, &a) in greedy.iter().enumerate() {
            net.out_w.set(a, state, 1.0);
        }
        net
    };
    let new = build([1, 2, 0, 3]);
    let old = build([1, 0, 0, 3]);
    let mut obs = Matrix::zeros(4, 4);
    for i in 0..4 {
        obs.set(i, i, 1.0);
    }
    assert_eq!(behavioral_divergence(&new, &old, &obs), 0.25);
}

#[test]
fn interp_factor_endpoints_and_clipping() {
    assert_eq!(interp_factor(0.05, 0.05, 0.95), 0.0);
    assert!((interp_factor(0.95, 0.05, 0.95) - 1.0).abs() < 1e-12);
    assert_eq!(interp_factor(0.001, 0.05, 0.95), 0.0);
    assert!((interp_factor(2.0, 0.05, 0.95) - 1.0).abs() < 1e-12);
}

#[test]
fn interp_factor_geometric_mean_is_half() {
    let mid = (0.05f64 * 0.95).sqrt(); // ≈ 0.2179
    assert!((mid - 0.2179).abs() < 1e-4);
    assert!((interp_factor(mid, 0.05, 0.95) - 0.5).abs() < 1e-12);
}

#[test]
fn interp_factor_is_monotone() {
    let mut prev = -1.0;
    for i in 0..100 {
        let d = 0.01 + i as f64 * 0.01;
        let a = interp_factor(d, 0.05, 0.95);
        assert!(a >= prev && (0.0..=1.0).contains(&a));
        prev = a;
    }
}

#[test]
fn target_length_hand_values() {
    assert_eq!(target_length(0.0, 16, 64), 64.0);
    assert_eq!(target_length(1.0, 16, 64), 16.0);
    assert_eq!(target_length(0.5, 16, 64), 40.0);
    // Gaussian-KL variant at its geometric midpoint.
    let mid = (0.01f64 * 0.1).sqrt();
    let l = target_length(interp_factor(mid, 0.01, 0.1), 1024, 8192);
    assert!((l - 4608.0).abs() < 1e-9);
    // Replay-batch variant at its geometric midpoint.
    let mid = (0.05f64 * 0.95).sqrt();
    let b = target_length(interp_factor(mid, 0.05, 0.95), 64, 1024);
    assert!((b - 544.0).abs() < 1e-9);
}

#[test]
fn ema_blend_and_step_bound() {
    assert_eq!(ema_rollout(32.0, 64.0, 0.5), 48.0);
    assert_eq!(ema_rollout(32.0, 64.0, 1.0), 64.0);
    for &(prev, target, beta) in &[(16.0, 64.0, 0.25), (64.0, 16.0, 0.5), (40.0, 40.0, 0.9)] {
        let next = ema_rollout(prev, target, beta);
        assert!((next - prev).abs() <= beta * (target - prev).abs() + 1e-12);
        let lo = prev.min(target);
        let hi = prev.max(target);
        assert!(next >= lo - 1e-12 && next <= hi + 1e-12);
    }
}

#[test]
fn compensated_epochs_scales_with_length() {
    assert_eq!(compensated_epochs(2, 16, 32), 1);
    assert_eq!(compensated_epochs(2, 32, 32), 2);
    assert_eq!(compensated_epochs(2, 64, 32), 4);
    // Never drops below one update pass.
    assert_eq!(compensated_epochs(1, 1, 64), 1);
}

fn const_policy(obs_dim: usize, means: &[f64], log_std: &[f64]) -> GaussianPolicy {
    let mut rng = stream(0, "test/policy");
    let mut p = GaussianPolicy::new(obs_dim, &[], means.len(), &mut rng);
    p.mean = Mlp::zeros(obs_dim, &[], means.len());
    p.mean.out_b.copy_from_slice(means);
    p.log_std.copy_from_slice(log_std);
    p
}

#[test]
fn kl_gaussian_hand_values() {
    let obs = ref_rows(7, 2);
    // Same distribution: zero.
    let p = const_policy(2, &[0.3], &[0.1]);
    assert!(kl_gaussian_divergence(&p, &p, &obs).abs() < 1e-12);
    // Unit-variance Gaussians one mean apart: KL = 0.5.
    let a = const_policy(2, &[1.0], &[0.0]);
    let b = const_policy(2, &[0.0], &[0.0]);
    assert!((kl_gaussian_divergence(&a, &b, &obs) - 0.5).abs() < 1e-12);
    // Equal means, sigma 2 vs 1: ln(1/2) + 4/2 - 1/2 ≈ 0.8069.
    let a = const_policy(2, &[0.0], &[2.0f64.ln()]);
    let b = const_policy(2, &[0.0], &[0.0]);
    let kl = kl_gaussian_divergence(&a, &b, &obs);
    assert!((kl - (-(2.0f64.ln()) + 2.0 - 0.5)).abs() < 1e-12);
    assert!((kl - 0.8069).abs() < 1e-4);
    // Sums over independent dimensions.
    let a = const_policy(2, &[1.0, 1.0], &[0.0, 0.0]);
    let b = const_policy(2, &[0.0, 0.0], &[0.0, 0.0]);
    assert!((kl_gaussian_divergence(&a, &b, &obs) - 1.0).abs() < 1e-12);
}

#[test]
fn gns_hand_example() {
    let est = gns_estimate(&[vec![2.0, 0.0], vec![1.0, 0.0]], 4, 8);
    assert!((est.noise - 2.0).abs() < 1e-12);
    assert!((est.signal - 2.0).abs() < 1e-12);
    assert!((est.b_simple.unwrap() - 1.0).abs() < 1e-12);
    assert!(!est.is_degenerate());
}

#[test]
fn gns_zero_noise_gives_zero_b_simple() {
    // Identical micro-gradients: N = 0, S = ‖g‖², b_simple = 0.
    let est = gns_estimate(&[vec![3.0, 4.0], vec![3.0, 4.0]], 2, 4);
    assert_eq!(est.noise, 0.0);
    assert!((est.signal - 25.0).abs() < 1e-12);
    assert_eq!(est.b_simple, Some(0.0));
}

#[test]
fn gns_exactly_zero_signal_is_degenerate() {
    // g₁=(1,0), g₂=(0,1), b=1, B=2: N = 1, S = 0.5 − 0.5 = 0.
    let est = gns_estimate(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1, 2);
    assert!((est.noise - 1.0).abs() < 1e-12);
    assert!(est.signal.abs() < 1e-12);
    assert!(est.is_degenerate());
}

#[test]
fn gns_degenerate_when_signal_nonpositive() {
    // Mean gradient is zero, so signal = -N/B < 0.
    let est = gns_estimate(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1, 2);
    assert!(est.is_degenerate());
    assert_eq!(gns_target_batch(&est, 64, 1024, 300), 300);
}

#[test]
fn gns_target_batch_clips_floor() {
    let est = GnsEstimate {
        noise: 1.0,
        signal: 1.0,
        b_simple: Some(1.0),
        micro_count: 2,
        micro_size: 1,
        batch: 2,
    };
    assert_eq!(gns_target_batch(&est, 100, 200, 150), 100);
    let mut big = est.clone();
    big.b_simple = Some(99999.9);
    assert_eq!(gns_target_batch(&big, 100, 200, 150), 200);
    let mut mid = est;
    mid.b_simple = Some(137.8);
    assert_eq!(gns_target_batch(&mid, 100, 200, 150), 137);
}

#[test]
fn gns_matches_naive_oracle_on_random_gradients() {
    use rand::Rng;
    let mut rng = stream(7, "test/gns-oracle");
    for _ in 0..50 {
        let m = rng.gen_range(2..8usize);
        let dim = rng.gen_range(1..12usize);
        let b = rng.gen_range(1..16usize);
        let grads: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let est = gns_estimate(&grads, b, m * b);
        // Naive recomputation with explicit loops.
        let g_bar: Vec<f64> = (0..dim)
            .map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / m as f64)
            .collect();
        let mut spread = 0.0;
        for g in &grads {
            for k in 0..dim {
                spread += (g[k] - g_bar[k]).powi(2);
            }
        }
        let noise = b as f64 / (m as f64 - 1.0) * spread;
        let signal = g_bar.iter().map(|v| v * v).sum::<f64>() - noise / (m * b) as f64;
        assert!((est.noise - noise).abs() <= 1e-9 * noise.abs().max(1.0));
        assert!((est.signal - signal).abs() <= 1e-9 * signal.abs().max(1.0));
    }
}

#[test]
fn abs_tick_burn_in_pins_minimum_length() {
    let net = const_q_net(2, &[0.5, 0.0]);
    let mut state = AbsState::new(16, 64, 0.05, 0.95, 1, 3, 0.5, 8, net.clone());
    let mut rng = stream(1, "test/scheduler");
    let obs = ref_rows(32, 2);
    for i in 0..2 {
        let (d, epochs) = abs_tick(&mut state, &net, &obs, 2, 32, &mut rng);
        assert_eq!(d.length, 16, "burn-in tick {i} must stay at L_min");
        assert_eq!(epochs, 1);
        assert!(d.raw.is_some() && d.smoothed.is_some());
    }
    // Window fills at the third measurement; δ = 0 drives toward L_max.
    let (d, _) = abs_tick(&mut state, &net, &obs, 2, 32, &mut rng);
    assert_eq!(d.smoothed, Some(0.0));
    assert_eq!(d.length, 40); // 0.5·16 + 0.5·64
}

#[test]
fn abs_tick_measures_only_every_k_iterations() {
    let net = const_q_net(2, &[0.5, 0.0]);
    let mut state = AbsState::new(16, 64, 0.05, 0.95, 3, 2, 0.5, 8, net.clone());
    let mut rng = stream(2, "test/scheduler");
    let obs = ref_rows(32, 2);
    for i in 1..=9 {
        let (d, _) = abs_tick(&mut state, &net, &obs, 2, 32, &mut rng);
        assert_eq!(d.raw.is_some(), i % 3 == 0, "iteration {i}");
    }
    assert_eq!(state.window_len(), 2);
}

#[test]
fn abs_tick_converges_to_fixed_point_under_constant_divergence() {
    // The live net never changes, so every measured δ is exactly zero and
    // the length must converge geometrically to L_max.
    let net = const_q_net(2, &[0.5, 0.0]);
    let mut state = AbsState::new(16, 64, 0.05, 0.95, 1, 1, 0.5, 8, net.clone());
    let mut rng = stream(3, "test/scheduler");
    let obs = ref_rows(32, 2);
    let mut gap_prev = f64::INFINITY;
    for _ in 0..40 {
        abs_tick(&mut state, &net, &obs, 2, 32, &mut rng);
        let gap = (64.0 - state.l_curr).abs();
        assert!(gap <= gap_prev + 1e-12);
        gap_prev = gap;
    }
    assert_eq!(state.current_length(), 64);
    assert!(gap_prev < 1e-4);

    // Constant δ above the upper threshold pins L_min: alternate between
    // two nets that disagree on every state.
    let a = const_q_net(2, &[1.0, 0.0]);
    let b = const_q_net(2, &[0.0, 1.0]);
    let mut state = AbsState::new(16, 64, 0.05, 0.95, 1, 1, 0.5, 8, a.clone());
    for i in 0..40 {
        let live = if i % 2 == 0 { &b } else { &a };
        let (d, _) = abs_tick(&mut state, live, &obs, 2, 32, &mut rng);
        assert_eq!(d.raw, Some(1.0));
    }
    assert_eq!(state.current_length(), 16);
}

#[test]
fn abs_tick_refreshes_snapshot_after_measuring() {
    let a = const_q_net(2, &[1.0, 0.0]);
    let b = const_q_net(2, &[0.0, 1.0]);
    let mut state = AbsState::new(16, 64, 0.05, 0.95, 1, 10, 0.5, 8, a);
    let mut rng = stream(4, "test/scheduler");
    let obs = ref_rows(32, 2);
    // First tick measures against the original snapshot (full flip), then
    // stores `b`; the second tick with the same net sees zero divergence.
    let (d1, _) = abs_tick(&mut state, &b, &obs, 2, 32, &mut rng);
    assert_eq!(d1.raw, Some(1.0));
    let (d2, _) = abs_tick(&mut state, &b, &obs, 2, 32, &mut rng);
    assert_eq!(d2.raw, Some(0.0));
}

#[test]
fn ars_tick_smoke() {
    let p = const_policy(3, &[0.2, -0.1], &[0.0, 0.0]);
    let mut state = AbsState::new(1024, 8192, 0.01, 0.1, 1, 1, 0.5, 16, p.clone());
    let mut rng = stream(5, "test/scheduler");
    let obs = ref_rows(64, 3);
    // Zero KL ⇒ target is the max rollout; one EMA step from 1024.
    let d = ars_tick(&mut state, &p, &obs, &mut rng);
    assert_eq!(d.raw, Some(0.0));
    assert_eq!(d.length, 4608); // 0.5·1024 + 0.5·8192
}

#[test]
fn adapt_replay_batch_smoke() {
    let net = const_q_net(3, &[0.4, 0.0]);
    let mut rb = ReplayBuffer::new(256);
    let mut rng = stream(6, "test/scheduler");
    for i in 0..200 {
        rb.push(Transition {
            obs: vec![i as f64 / 200.0; 3],
            action: 0,
            reward: 0.0,
            next_obs: vec![0.0; 3],
            done: false,
        });
    }
    let mut state = AbsState::new(64, 1024, 0.05, 0.95, 1, 1, 0.5, 128, net.clone());
    let d = adapt_replay_batch(&mut state, &net, &rb, &mut rng);
    assert_eq!(d.raw, Some(0.0));
    assert_eq!(d.length, 544); // 0.5·64 + 0.5·1024
}
