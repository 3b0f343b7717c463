//! Off-policy batch extension: trajectory likelihood vectors, the
//! likelihood-sum surrogate, the batch diversity term, batch training, and
//! CWPDIS off-policy evaluation.

use crate::diversity::{feature_kernel, KernelConfig};
use crate::optim::Adam;
use crate::policy::{init_params, log_prob, traj_score, PolicySpec};
use crate::types::Trajectory;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Floor applied when a raw trajectory likelihood underflows (for example a
/// categorical head assigning vanishing probability to a recorded action).
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// How per-trajectory likelihoods are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// prod_t pi(a_t | s_t), computed in log space.
    RawProduct,
    /// exp((1/T) sum_t log pi(a_t | s_t)); robust to long trajectories.
    GeometricMean,
}

/// A fixed set of trajectories with recorded behavior-policy action
/// probabilities.
#[derive(Debug, Clone)]
pub struct BatchDataset {
    pub trajectories: Vec<Trajectory>,
    pub gamma: f64,
}

impl BatchDataset {
    pub fn new(trajectories: Vec<Trajectory>, gamma: f64) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidSpec("batch dataset needs at least one trajectory".into()));
        }
        let dims = {
            let first = &trajectories[0].steps;
            if first.is_empty() {
                return Err(Error::EmptyTrajectory);
            }
            (first[0].state.len(), first[0].action.feature_dim())
        };
        for t in &trajectories {
            if t.is_empty() {
                return Err(Error::EmptyTrajectory);
            }
            for s in &t.steps {
                if s.state.len() != dims.0 || s.action.feature_dim() != dims.1 {
                    return Err(Error::DimensionMismatch(
                        "batch trajectories must share state/action dimensions".into(),
                    ));
                }
                match s.behavior_prob {
                    Some(p) if p > 0.0 && p <= 1.0 => {}
                    _ => {
                        return Err(Error::InvalidSpec(
                            "every step needs a behavior probability in (0, 1]".into(),
                        ))
                    }
                }
            }
        }
        Ok(BatchDataset { trajectories, gamma })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Mean discounted return of the batch.
    pub fn empirical_value(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| t.discounted_return(self.gamma))
            .sum::<f64>()
            / self.trajectories.len() as f64
    }
}

/// CWPDIS value estimate with per-timestep effective sample sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpeEstimate {
    pub value: f64,
    pub effective_sample_sizes: Vec<f64>,
}

fn sum_log_prob(spec: &PolicySpec, params: &[f64], traj: &Trajectory) -> Result<f64> {
    let mut acc = 0.0;
    for step in &traj.steps {
        acc += log_prob(spec, params, &step.state, &step.action)?;
    }
    Ok(acc)
}

/// Probability of a trajectory's action sequence under the policy; dynamics
/// factors are policy-independent and excluded.
pub fn traj_likelihood(
    spec: &PolicySpec,
    params: &[f64],
    traj: &Trajectory,
    mode: LikelihoodMode,
) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let log_sum = sum_log_prob(spec, params, traj)?;
    let value = match mode {
        LikelihoodMode::RawProduct => log_sum.exp(),
        LikelihoodMode::GeometricMean => (log_sum / traj.len() as f64).exp(),
    };
    Ok(value.max(LIKELIHOOD_FLOOR))
}

/// Likelihood of every trajectory in the batch.
pub fn likelihood_vector(
    spec: &PolicySpec,
    params: &[f64],
    data: &BatchDataset,
    mode: LikelihoodMode,
) -> Result<Vec<f64>> {
    data.trajectories
        .iter()
        .map(|t| traj_likelihood(spec, params, t, mode))
        .collect()
}

/// Sum of trajectory likelihoods over the batch.
pub fn surrogate(
    spec: &PolicySpec,
    params: &[f64],
    data: &BatchDataset,
    mode: LikelihoodMode,
) -> Result<f64> {
    Ok(likelihood_vector(spec, params, data, mode)?.iter().sum())
}

/// Analytic gradient of the surrogate: sum_i w_i * score(tau_i), with
/// w_i the likelihood itself (raw) or the 1/T_i-scaled geometric mean.
pub fn surrogate_gradient(
    spec: &PolicySpec,
    params: &[f64],
    data: &BatchDataset,
    mode: LikelihoodMode,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; spec.param_count()];
    for traj in &data.trajectories {
        let p = traj_likelihood(spec, params, traj, mode)?;
        let w = match mode {
            LikelihoodMode::RawProduct => p,
            LikelihoodMode::GeometricMean => p / traj.len() as f64,
        };
        let score = traj_score(spec, params, traj)?;
        for (g, s) in grad.iter_mut().zip(score.iter()) {
            *g += w * s;
        }
    }
    Ok(grad)
}

/// Kernel similarity between the policy's likelihood vector and the nearest
/// known policy's: s* = max_m k(p(T|pi), p(T|q_m)), with the attaining index.
/// `None` when no known policies exist.
pub fn d_batch(
    spec: &PolicySpec,
    params: &[f64],
    known: &[Vec<f64>],
    data: &BatchDataset,
    kcfg: &KernelConfig,
    mode: LikelihoodMode,
) -> Result<Option<(f64, usize)>> {
    if known.is_empty() {
        return Ok(None);
    }
    let u = likelihood_vector(spec, params, data, mode)?;
    let mut best: Option<(f64, usize)> = None;
    for (idx, q) in known.iter().enumerate() {
        let v = likelihood_vector(spec, q, data, mode)?;
        let k = feature_kernel(&u, &v, kcfg);
        if best.map_or(true, |(bk, _)| k > bk) {
            best = Some((k, idx));
        }
    }
    Ok(best)
}

/// Gradient of the nearest-known-policy similarity s* with respect to theta.
fn d_batch_gradient(
    spec: &PolicySpec,
    params: &[f64],
    known: &[Vec<f64>],
    data: &BatchDataset,
    kcfg: &KernelConfig,
    mode: LikelihoodMode,
) -> Result<Option<Vec<f64>>> {
    let Some((k_star, idx)) = d_batch(spec, params, known, data, kcfg, mode)? else {
        return Ok(None);
    };
    let u = likelihood_vector(spec, params, data, mode)?;
    let v = likelihood_vector(spec, &known[idx], data, mode)?;
    let d_norm = if kcfg.normalize { u.len().max(1) as f64 } else { 1.0 };
    let scale = -k_star / (kcfg.bandwidth * kcfg.bandwidth * d_norm);
    let mut grad = vec![0.0; spec.param_count()];
    for (i, traj) in data.trajectories.iter().enumerate() {
        let w = match mode {
            LikelihoodMode::RawProduct => u[i],
            LikelihoodMode::GeometricMean => u[i] / traj.len() as f64,
        };
        let coeff = scale * (u[i] - v[i]) * w;
        if coeff == 0.0 {
            continue;
        }
        let score = traj_score(spec, params, traj)?;
        for (g, s) in grad.iter_mut().zip(score.iter()) {
            *g += coeff * s;
        }
    }
    Ok(Some(grad))
}

/// The maximized batch objective: surrogate(theta) - alpha * s*(theta),
/// where s* is the nearest-known-policy similarity (zero without known
/// policies).
pub fn batch_objective(
    spec: &PolicySpec,
    params: &[f64],
    known: &[Vec<f64>],
    data: &BatchDataset,
    kcfg: &KernelConfig,
    mode: LikelihoodMode,
    alpha: f64,
) -> Result<f64> {
    let mut value = surrogate(spec, params, data, mode)?;
    if alpha != 0.0 {
        if let Some((s_star, _)) = d_batch(spec, params, known, data, kcfg, mode)? {
            value -= alpha * s_star;
        }
    }
    Ok(value)
}

/// Analytic gradient of [`batch_objective`].
pub fn batch_objective_gradient(
    spec: &PolicySpec,
    params: &[f64],
    known: &[Vec<f64>],
    data: &BatchDataset,
    kcfg: &KernelConfig,
    mode: LikelihoodMode,
    alpha: f64,
) -> Result<Vec<f64>> {
    let mut grad = surrogate_gradient(spec, params, data, mode)?;
    if alpha != 0.0 {
        if let Some(dg) = d_batch_gradient(spec, params, known, data, kcfg, mode)? {
            for (g, d) in grad.iter_mut().zip(dg.iter()) {
                *g -= alpha * d;
            }
        }
    }
    Ok(grad)
}

/// Hyperparameters for batch training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchTrainConfig {
    pub learning_rate: f64,
    /// Number of full-batch gradient steps.
    pub iterations: usize,
    pub mode: LikelihoodMode,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for BatchTrainConfig {
    fn default() -> Self {
        BatchTrainConfig {
            learning_rate: 0.02,
            iterations: 400,
            mode: LikelihoodMode::GeometricMean,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

/// Gradient ascent on surrogate(theta) - alpha * s*(theta): maximize batch
/// likelihood while pushing the likelihood vector away from the most similar
/// known policy's.
pub fn batch_train(
    spec: &PolicySpec,
    data: &BatchDataset,
    known: &[Vec<f64>],
    cfg: &BatchTrainConfig,
    kcfg: &KernelConfig,
    alpha: f64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    kcfg.validate()?;
    let mut params = init_params(spec, cfg.seed);
    let mut opt = Adam::with_coefficients(
        spec.param_count(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    for i in 0..cfg.iterations {
        let grad = batch_objective_gradient(spec, &params, known, data, kcfg, cfg.mode, alpha)?;
        opt.step(&mut params, &grad);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("batch parameters after step {i}")));
        }
    }
    Ok(params)
}

/// Consistent weighted per-decision importance sampling.
///
/// V = sum_t gamma^t (sum_i rho_{i,1:t} r_{i,t}) / (sum_i rho_{i,1:t}).
/// Finished trajectories contribute zero reward and keep their final
/// cumulative ratio in the denominator (absorbing-state convention), which
/// makes the behavior-equals-evaluation estimate coincide with the batch's
/// empirical mean discounted return.
pub fn cwpdis(
    spec: &PolicySpec,
    params: &[f64],
    data: &BatchDataset,
    gamma: f64,
) -> Result<OpeEstimate> {
    let n = data.len();
    let t_max = data.trajectories.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut rho = vec![1.0f64; n];
    let mut value = 0.0;
    let mut discount = 1.0;
    let mut ess = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut num = 0.0;
        for (i, traj) in data.trajectories.iter().enumerate() {
            if t < traj.len() {
                let step = &traj.steps[t];
                let behavior = step.behavior_prob.ok_or_else(|| {
                    Error::InvalidSpec("cwpdis needs behavior probabilities".into())
                })?;
                let lp = log_prob(spec, params, &step.state, &step.action)?;
                rho[i] *= lp.exp() / behavior;
                num += rho[i] * step.reward;
            }
        }
        let den: f64 = rho.iter().sum();
        let den_sq: f64 = rho.iter().map(|r| r * r).sum();
        if den > 0.0 {
            value += discount * num / den;
            ess.push(den * den / den_sq);
        } else {
            // all weights collapsed; this timestep contributes nothing
            ess.push(0.0);
        }
        discount *= gamma;
    }
    Ok(OpeEstimate { value, effective_sample_sizes: ess })
}
