//! Policy-gradient training: REINFORCE and PPO-clip, the diversity-augmented
//! update, and the iterative multi-policy loop.

use crate::diversity::{d_mmd, grad_d_mmd, DiversitySet, KernelConfig};
use crate::env::{rollout, Environment};
use crate::optim::Adam;
use crate::policy::{accumulate_grad_log_prob, init_params, log_prob, PolicySpec};
use crate::types::{Action, Trajectory};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Reinforce,
    Ppo,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algo: Algo,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Environment-step budget per policy.
    pub steps_per_policy: usize,
    /// Rollouts collected per update (m).
    pub rollouts_per_update: usize,
    /// Trajectories stored per known policy (n).
    pub stored_trajectories: usize,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::Reinforce,
            learning_rate: 3e-4,
            gamma: 0.99,
            steps_per_policy: 30_000,
            rollouts_per_update: 8,
            stored_trajectories: 16,
            clip_eps: 0.2,
            ppo_epochs: 4,
            minibatch_size: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidSpec("learning_rate must be > 0".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::InvalidSpec("clip_eps must be in (0, 1)".into()));
        }
        if self.rollouts_per_update < 2 {
            return Err(Error::InvalidSpec("rollouts_per_update must be >= 2".into()));
        }
        if self.steps_per_policy == 0 || self.ppo_epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::InvalidSpec("budgets must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidSpec("gamma must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One trained policy plus its stored evaluation trajectories and metrics.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub spec: PolicySpec,
    pub params: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub metrics: Vec<UpdateMetrics>,
}

/// Ordered collection of known policies.
#[derive(Debug, Clone, Default)]
pub struct PolicyCollection {
    pub policies: Vec<TrainedPolicy>,
}

/// Per-update training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub d_mmd: Option<f64>,
    pub argmin_q: Option<usize>,
    pub grad_norm: f64,
}

/// Discounted suffix sums g_t = sum_{t' >= t} gamma^(t'-t) r_t'.
pub fn returns_to_go(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (i, step) in traj.steps.iter().enumerate().rev() {
        acc = step.reward + gamma * acc;
        out[i] = acc;
    }
    out
}

/// REINFORCE gradient with a batch-mean return baseline: the mean over
/// rollouts of sum_t grad_log_prob(s_t, a_t) (g_t - b), where b is the mean
/// of all returns-to-go in the batch.
pub fn pg_gradient(
    spec: &PolicySpec,
    params: &[f64],
    rollouts: &[Trajectory],
    gamma: f64,
) -> Result<Vec<f64>> {
    if rollouts.is_empty() {
        return Err(Error::InsufficientSamples("pg_gradient needs rollouts".into()));
    }
    let rtgs: Vec<Vec<f64>> = rollouts.iter().map(|t| returns_to_go(t, gamma)).collect();
    let total: f64 = rtgs.iter().flatten().sum();
    let count: usize = rtgs.iter().map(|r| r.len()).sum();
    if count == 0 {
        return Err(Error::EmptyTrajectory);
    }
    let baseline = total / count as f64;
    let mut grad = vec![0.0; spec.param_count()];
    let scale = 1.0 / rollouts.len() as f64;
    for (traj, rtg) in rollouts.iter().zip(rtgs.iter()) {
        for (step, g) in traj.steps.iter().zip(rtg.iter()) {
            accumulate_grad_log_prob(spec, params, &step.state, &step.action, scale * (g - baseline), &mut grad)?;
        }
    }
    Ok(grad)
}

struct FlatStep {
    state: Vec<f64>,
    action: Action,
    advantage: f64,
    old_log_prob: f64,
}

/// Gradient of the clipped surrogate, averaged over `steps`.
fn clipped_surrogate_gradient(
    spec: &PolicySpec,
    params: &[f64],
    steps: &[&FlatStep],
    clip_eps: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; spec.param_count()];
    let scale = 1.0 / steps.len() as f64;
    for s in steps {
        let lp = log_prob(spec, params, &s.state, &s.action)?;
        let ratio = (lp - s.old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        // min(r A, clip(r) A): the unclipped branch carries the gradient
        // whenever it attains the min; the clipped branch is constant in theta.
        if ratio * s.advantage <= clipped * s.advantage {
            accumulate_grad_log_prob(
                spec,
                params,
                &s.state,
                &s.action,
                scale * s.advantage * ratio,
                &mut grad,
            )?;
        }
    }
    Ok(grad)
}

/// One PPO-clip update over a rollout batch: several epochs of minibatch
/// ascent on the clipped surrogate, with batch-normalized returns-to-go as
/// advantages. When present, the diversity gradient (computed once at the
/// pre-update parameters) is added to every minibatch gradient.
///
/// Returns the new parameters and the norm of the first applied gradient.
pub fn ppo_update<R: Rng>(
    spec: &PolicySpec,
    params: &[f64],
    rollouts: &[Trajectory],
    cfg: &TrainConfig,
    diversity_grad: Option<(f64, &[f64])>,
    opt: &mut Adam,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let mut steps = Vec::new();
    for traj in rollouts {
        let rtg = returns_to_go(traj, cfg.gamma);
        for (step, g) in traj.steps.iter().zip(rtg.iter()) {
            let old = log_prob(spec, params, &step.state, &step.action)?;
            steps.push(FlatStep {
                state: step.state.clone(),
                action: step.action.clone(),
                advantage: *g,
                old_log_prob: old,
            });
        }
    }
    if steps.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = steps.len() as f64;
    let mean = steps.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = steps.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for s in &mut steps {
        s.advantage -= mean;
        if std >= 1e-8 {
            s.advantage /= std;
        }
    }

    let mut new_params = params.to_vec();
    let mut first_grad_norm = 0.0;
    let mut first = true;
    for _ in 0..cfg.ppo_epochs {
        let mut order: Vec<usize> = (0..steps.len()).collect();
        // Fisher-Yates with the caller's stream for determinism.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb: Vec<&FlatStep> = chunk.iter().map(|&i| &steps[i]).collect();
            let mut grad = clipped_surrogate_gradient(spec, &new_params, &mb, cfg.clip_eps)?;
            if let Some((alpha, div)) = diversity_grad {
                for (g, d) in grad.iter_mut().zip(div.iter()) {
                    *g += alpha * d;
                }
            }
            if first {
                first_grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                first = false;
            }
            opt.step(&mut new_params, &grad);
        }
    }
    Ok((new_params, first_grad_norm))
}

fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 on the combined value
    let mut z = base
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(stream)
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sample `count` trajectories from a policy with a dedicated RNG stream.
pub fn sample_trajectories(
    env: &Environment,
    spec: &PolicySpec,
    params: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| rollout(env, spec, params, &mut rng, env.horizon))
        .collect()
}

/// Train one policy with the diversity-augmented objective (plain policy
/// gradient when `known` is empty or `alpha` is zero).
pub fn train_diverse_policy(
    env: &Environment,
    spec: &PolicySpec,
    known: &PolicyCollection,
    cfg: &TrainConfig,
    kcfg: &KernelConfig,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<UpdateMetrics>)> {
    cfg.validate()?;
    kcfg.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(spec, rng.gen());

    // Q is sampled on a separate stream so that an empty/ignored diversity
    // set leaves the main stream (and hence the parameter sequence) intact.
    let diversity_set = if known.policies.is_empty() {
        DiversitySet::default()
    } else {
        let q_seed = derive_seed(seed, 0x5144); // "QD"
        let mut entries = Vec::with_capacity(known.policies.len());
        for (i, kp) in known.policies.iter().enumerate() {
            entries.push(sample_trajectories(
                env,
                &kp.spec,
                &kp.params,
                cfg.stored_trajectories,
                derive_seed(q_seed, i as u64),
            )?);
        }
        DiversitySet { entries }
    };

    let mut opt = Adam::with_coefficients(
        spec.param_count(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut metrics = Vec::new();
    let mut env_steps = 0usize;
    let mut update = 0usize;
    while env_steps < cfg.steps_per_policy {
        let rollouts: Vec<Trajectory> = (0..cfg.rollouts_per_update)
            .map(|_| rollout(env, spec, &params, &mut rng, env.horizon))
            .collect::<Result<_>>()?;
        env_steps += rollouts.iter().map(|t| t.len()).sum::<usize>();

        let diversity = if diversity_set.is_empty() {
            None
        } else {
            d_mmd(&rollouts, &diversity_set, kcfg)?
        };
        let div_grad = if alpha != 0.0 && !diversity_set.is_empty() {
            Some(grad_d_mmd(spec, &params, &rollouts, &diversity_set, kcfg)?)
        } else {
            None
        };

        let grad_norm = match cfg.algo {
            Algo::Reinforce => {
                let mut grad = pg_gradient(spec, &params, &rollouts, cfg.gamma)?;
                if let Some(dg) = &div_grad {
                    for (g, d) in grad.iter_mut().zip(dg.iter()) {
                        *g += alpha * d;
                    }
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                opt.step(&mut params, &grad);
                norm
            }
            Algo::Ppo => {
                let dg = div_grad.as_ref().map(|d| (alpha, d.as_slice()));
                let (next, norm) = ppo_update(spec, &params, &rollouts, cfg, dg, &mut opt, &mut rng)?;
                params = next;
                norm
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameters after update {update}")));
        }

        let mean_return =
            rollouts.iter().map(|t| t.total_reward()).sum::<f64>() / rollouts.len() as f64;
        metrics.push(UpdateMetrics {
            update,
            env_steps,
            mean_return,
            d_mmd: diversity.map(|(v, _)| v),
            argmin_q: diversity.map(|(_, i)| i),
            grad_norm,
        });
        update += 1;
    }
    Ok((params, metrics))
}

/// The iterative multi-policy loop: train `n` policies in sequence, each
/// diverse with respect to all previously found ones, storing sample
/// trajectories after each run. The first policy trains without a diversity
/// term (the known set starts empty).
pub fn dipg(
    env: &Environment,
    spec: &PolicySpec,
    n: usize,
    cfg: &TrainConfig,
    kcfg: &KernelConfig,
    alphas: &[f64],
) -> Result<PolicyCollection> {
    if n == 0 {
        return Err(Error::InvalidSpec("dipg needs n >= 1".into()));
    }
    let mut collection = PolicyCollection::default();
    for i in 0..n {
        let alpha = alphas
            .get(i)
            .or_else(|| alphas.last())
            .copied()
            .unwrap_or(1.0);
        let run_seed = derive_seed(cfg.seed, i as u64);
        let (params, metrics) =
            train_diverse_policy(env, spec, &collection, cfg, kcfg, alpha, run_seed)?;
        let trajectories = sample_trajectories(
            env,
            spec,
            &params,
            cfg.stored_trajectories,
            derive_seed(run_seed, 0x53), // "S"
        )?;
        collection.policies.push(TrainedPolicy {
            spec: spec.clone(),
            params,
            trajectories,
            metrics,
        });
    }
    Ok(collection)
}

/// Roll out `episodes` evaluation episodes and report the mean undiscounted
/// return with the trajectories.
pub fn evaluate(
    env: &Environment,
    spec: &PolicySpec,
    params: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<(f64, Vec<Trajectory>)> {
    let trajs = sample_trajectories(env, spec, params, episodes, seed)?;
    let mean = trajs.iter().map(|t| t.total_reward()).sum::<f64>() / episodes as f64;
    Ok((mean, trajs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, EnvKind, EnvSpec};
    use crate::types::Step;

    fn traj_with_rewards(rewards: &[f64]) -> Trajectory {
        let mut t = Trajectory::new();
        for &r in rewards {
            t.steps.push(Step {
                state: vec![0.0, 0.0],
                action: Action::Continuous(vec![0.0, 0.0]),
                reward: r,
                behavior_prob: None,
            });
        }
        t
    }

    #[test]
    fn returns_to_go_undiscounted() {
        let t = traj_with_rewards(&[1.0, 1.0, 1.0]);
        assert_eq!(returns_to_go(&t, 1.0), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn returns_to_go_discounted_hand_values() {
        let t = traj_with_rewards(&[0.0, 0.0, 5.0]);
        let rtg = returns_to_go(&t, 0.5);
        assert_eq!(rtg, vec![1.25, 2.5, 5.0]);
    }

    #[test]
    fn returns_to_go_single_step() {
        let t = traj_with_rewards(&[-2.5]);
        assert_eq!(returns_to_go(&t, 0.9), vec![-2.5]);
    }

    #[test]
    fn zero_rewards_give_zero_gradient() {
        let spec = PolicySpec::gaussian(2, vec![4], 2);
        let params = init_params(&spec, 0);
        let rollouts = vec![traj_with_rewards(&[0.0; 3]), traj_with_rewards(&[0.0; 5])];
        let g = pg_gradient(&spec, &params, &rollouts, 0.99).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn training_is_deterministic_and_alpha_zero_matches_plain_pg() {
        let mut espec = EnvSpec::new(EnvKind::MultiGoal);
        espec.horizon = Some(10);
        let env = make_env(&espec).unwrap();
        let spec = env.default_policy_spec(vec![8]);
        let cfg = TrainConfig {
            steps_per_policy: 200,
            rollouts_per_update: 2,
            stored_trajectories: 2,
            ..Default::default()
        };
        let kcfg = KernelConfig::default();
        let empty = PolicyCollection::default();
        let (plain, _) = train_diverse_policy(&env, &spec, &empty, &cfg, &kcfg, 1.0, 42).unwrap();

        // a non-empty known set with alpha = 0 must not perturb the stream
        let known = PolicyCollection {
            policies: vec![TrainedPolicy {
                spec: spec.clone(),
                params: init_params(&spec, 9),
                trajectories: vec![],
                metrics: vec![],
            }],
        };
        let (with_known, _) = train_diverse_policy(&env, &spec, &known, &cfg, &kcfg, 0.0, 42).unwrap();
        assert_eq!(plain, with_known);

        let (repeat, _) = train_diverse_policy(&env, &spec, &empty, &cfg, &kcfg, 1.0, 42).unwrap();
        assert_eq!(plain, repeat);
    }

    #[test]
    fn dipg_runs_n_policies_and_stores_n_times_stored_trajectories() {
        let mut espec = EnvSpec::new(EnvKind::MultiGoal);
        espec.horizon = Some(8);
        let env = make_env(&espec).unwrap();
        let spec = env.default_policy_spec(vec![4]);
        let cfg = TrainConfig {
            steps_per_policy: 100,
            rollouts_per_update: 2,
            stored_trajectories: 3,
            ..Default::default()
        };
        let col = dipg(&env, &spec, 2, &cfg, &KernelConfig::default(), &[1.0]).unwrap();
        assert_eq!(col.policies.len(), 2);
        let stored: usize = col.policies.iter().map(|p| p.trajectories.len()).sum();
        assert_eq!(stored, 2 * 3);
    }

    #[test]
    fn ppo_ratio_is_one_at_old_parameters() {
        // surrogate value at the old parameters equals the mean advantage:
        // with ratio exactly 1 the clipped and unclipped branches coincide.
        let mut espec = EnvSpec::new(EnvKind::Cartpole);
        espec.horizon = Some(20);
        let env = make_env(&espec).unwrap();
        let spec = env.default_policy_spec(vec![8]);
        let params = init_params(&spec, 1);
        let rollouts = sample_trajectories(&env, &spec, &params, 3, 0).unwrap();
        let cfg = TrainConfig { gamma: 1.0, ..Default::default() };
        for traj in &rollouts {
            let rtg = returns_to_go(traj, cfg.gamma);
            for (step, g) in traj.steps.iter().zip(rtg.iter()) {
                let old = log_prob(&spec, &params, &step.state, &step.action).unwrap();
                let lp = log_prob(&spec, &params, &step.state, &step.action).unwrap();
                let ratio = (lp - old).exp();
                assert_eq!(ratio, 1.0);
                let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
                assert_eq!((ratio * g).min(clipped * g), ratio * g);
            }
        }
    }

    #[test]
    fn ppo_first_minibatch_direction_matches_pg_gradient() {
        // With huge clip range, one epoch, and one full-batch minibatch, the
        // first PPO gradient is a positive multiple of the REINFORCE gradient
        // (the baseline used by pg_gradient equals the normalization mean).
        let mut espec = EnvSpec::new(EnvKind::MultiGoal);
        espec.horizon = Some(10);
        let env = make_env(&espec).unwrap();
        let spec = env.default_policy_spec(vec![6]);
        let params = init_params(&spec, 3);
        let rollouts = sample_trajectories(&env, &spec, &params, 4, 7).unwrap();
        let gamma = 0.99;

        let pg = pg_gradient(&spec, &params, &rollouts, gamma).unwrap();

        let cfg = TrainConfig {
            gamma,
            clip_eps: 0.999_999,
            ppo_epochs: 1,
            minibatch_size: usize::MAX,
            learning_rate: 1e-9,
            ..Default::default()
        };
        let mut opt = Adam::new(spec.param_count(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, norm) = ppo_update(&spec, &params, &rollouts, &cfg, None, &mut opt, &mut rng).unwrap();
        assert!(norm > 0.0);

        // recompute the ppo full-batch gradient directly for the comparison
        let mut steps = Vec::new();
        for traj in &rollouts {
            let rtg = returns_to_go(traj, gamma);
            for (step, g) in traj.steps.iter().zip(rtg.iter()) {
                let old = log_prob(&spec, &params, &step.state, &step.action).unwrap();
                steps.push(FlatStep {
                    state: step.state.clone(),
                    action: step.action.clone(),
                    advantage: *g,
                    old_log_prob: old,
                });
            }
        }
        let n = steps.len() as f64;
        let mean = steps.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = steps.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        for s in &mut steps {
            s.advantage = (s.advantage - mean) / var.sqrt();
        }
        let refs: Vec<&FlatStep> = steps.iter().collect();
        let ppo_grad = clipped_surrogate_gradient(&spec, &params, &refs, cfg.clip_eps).unwrap();

        // cosine similarity of the two directions
        let dot: f64 = pg.iter().zip(ppo_grad.iter()).map(|(a, b)| a * b).sum();
        let na: f64 = pg.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = ppo_grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 1.0 - 1e-9, "cosine {}", dot / (na * nb));
    }

    #[test]
    fn zero_advantages_leave_parameters_unchanged() {
        let mut espec = EnvSpec::new(EnvKind::MultiGoal);
        espec.horizon = Some(5);
        espec.start_noise_std = Some(0.0);
        let env = make_env(&espec).unwrap();
        let spec = env.default_policy_spec(vec![4]);
        let params = init_params(&spec, 0);
        let mut rollouts = sample_trajectories(&env, &spec, &params, 2, 1).unwrap();
        for t in &mut rollouts {
            for s in &mut t.steps {
                s.reward = 0.0;
            }
        }
        let cfg = TrainConfig::default();
        let mut opt = Adam::new(spec.param_count(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, norm) = ppo_update(&spec, &params, &rollouts, &cfg, None, &mut opt, &mut rng).unwrap();
        assert_eq!(next, params);
        assert_eq!(norm, 0.0);
    }
}
