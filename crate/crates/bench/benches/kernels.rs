use criterion::{criterion_group, criterion_main, Criterion};
use dipg_core::diversity::{mmd2, traj_kernel, KernelConfig, MmdEstimator};
use dipg_core::env::{make_env, rollout, EnvKind, EnvSpec};
use dipg_core::policy::{grad_log_prob, init_params, PolicySpec};
use dipg_core::types::{Action, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample_trajectories(n: usize) -> Vec<Trajectory> {
    let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
    let spec = env.default_policy_spec(vec![32]);
    let params = init_params(&spec, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| rollout(&env, &spec, &params, &mut rng, 50).unwrap())
        .collect()
}

fn bench_traj_kernel(c: &mut Criterion) {
    let trajs = sample_trajectories(2);
    let cfg = KernelConfig::default();
    c.bench_function("traj_kernel_50_steps", |b| {
        b.iter(|| traj_kernel(&trajs[0], &trajs[1], &cfg).unwrap())
    });
}

fn bench_mmd2(c: &mut Criterion) {
    let trajs = sample_trajectories(16);
    let (a, b_set) = trajs.split_at(8);
    let cfg = KernelConfig::default();
    c.bench_function("mmd2_biased_8x8", |b| {
        b.iter(|| mmd2(a, b_set, &cfg, MmdEstimator::Biased).unwrap())
    });
}

fn bench_grad_log_prob(c: &mut Criterion) {
    let spec = PolicySpec::gaussian(2, vec![32], 2);
    let params = init_params(&spec, 0);
    let state = [0.3, -0.7];
    let action = Action::Continuous(vec![0.1, 0.2]);
    c.bench_function("grad_log_prob_2x32x2", |b| {
        b.iter(|| grad_log_prob(&spec, &params, &state, &action).unwrap())
    });
}

fn bench_rollout(c: &mut Criterion) {
    let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
    let spec = env.default_policy_spec(vec![32]);
    let params = init_params(&spec, 0);
    c.bench_function("rollout_multi_goal_50", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| rollout(&env, &spec, &params, &mut rng, 50).unwrap())
    });
}

criterion_group!(benches, bench_traj_kernel, bench_mmd2, bench_grad_log_prob, bench_rollout);
criterion_main!(benches);
