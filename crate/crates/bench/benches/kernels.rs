//! Criterion benchmarks for the hot numeric kernels: network forward and
//! backward passes, lockstep environment stepping, divergence measurement,
//! and the Q(λ) return recursion.

use abslab_core::agents::{collect_q_rollout, q_lambda_returns};
use abslab_core::env::{make_env, Action};
use abslab_core::math::Matrix;
use abslab_core::net::Mlp;
use abslab_core::rng::stream;
use abslab_core::scheduler::behavioral_divergence;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use std::hint::black_box;

fn random_obs(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, "bench/obs");
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, rng.gen_range(-1.0..1.0));
        }
    }
    m
}

fn bench_forward(c: &mut Criterion) {
    let mut rng = stream(1, "bench/init");
    let net = Mlp::init(4, &[128, 128], 2, &mut rng);
    let obs = random_obs(2048, 4, 2);
    c.bench_function("mlp_forward_2048x4_128x128", |b| {
        b.iter(|| black_box(net.forward(black_box(&obs))))
    });
}

fn bench_backward(c: &mut Criterion) {
    let mut rng = stream(3, "bench/init");
    let net = Mlp::init(4, &[128, 128], 2, &mut rng);
    let obs = random_obs(512, 4, 4);
    let upstream = random_obs(512, 2, 5);
    c.bench_function("mlp_backward_512x4_128x128", |b| {
        b.iter(|| black_box(net.backward(black_box(&obs), black_box(&upstream))))
    });
}

fn bench_env_step(c: &mut Criterion) {
    c.bench_function("gridroom_step_all_128", |b| {
        let mut env = make_env("gridroom", 128, 7).unwrap();
        let actions = vec![Action::Discrete(1); 128];
        b.iter(|| black_box(env.step_all(&actions).unwrap()))
    });
}

fn bench_divergence(c: &mut Criterion) {
    let mut rng = stream(9, "bench/init");
    let a = Mlp::init(4, &[128, 128], 4, &mut rng);
    let b_net = Mlp::init(4, &[128, 128], 4, &mut rng);
    let obs = random_obs(2048, 4, 10);
    c.bench_function("behavioral_divergence_m2048", |b| {
        b.iter(|| black_box(behavioral_divergence(&a, &b_net, black_box(&obs))))
    });
}

fn bench_q_lambda(c: &mut Criterion) {
    let mut rng = stream(11, "bench/init");
    let net = Mlp::init(2, &[64], 4, &mut rng);
    let mut env = make_env("gridroom", 128, 13).unwrap();
    let mut policy_rng = stream(13, "bench/policy");
    let mut buf = collect_q_rollout(&net, &mut env, 64, 0.5, &mut policy_rng).unwrap();
    // The recursion only writes `targets`, so rerunning it on the same
    // buffer is idempotent and safe to time in place.
    c.bench_function("q_lambda_returns_128x64", |b| {
        b.iter(|| q_lambda_returns(black_box(&mut buf), 0.99, 0.65))
    });
}

criterion_group!(
    benches,
    bench_forward,
    bench_backward,
    bench_env_step,
    bench_divergence,
    bench_q_lambda
);
criterion_main!(benches);
