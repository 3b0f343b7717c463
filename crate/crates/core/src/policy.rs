//! Stochastic MLP policies with exact analytic log-probability gradients.
//!
//! Parameters live in a single flat `Vec<f64>` so the optimizer and all
//! gradient estimators work on plain vectors. Layout: for each layer in
//! order, weights (row-major, `fan_out x fan_in`) then biases; for a
//! Gaussian head, the state-independent per-dimension log-std values come
//! last. Hidden activations are tanh.

use crate::types::{Action, Trajectory};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Output distribution of the policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Softmax over `n` discrete actions.
    Categorical { n: usize },
    /// Diagonal Gaussian over `dim` continuous action dimensions with
    /// state-independent log-std.
    Gaussian { dim: usize },
}

/// Architecture of a policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub head: Head,
}

impl PolicySpec {
    pub fn categorical(input_dim: usize, hidden_sizes: Vec<usize>, n_actions: usize) -> Self {
        PolicySpec { input_dim, hidden_sizes, head: Head::Categorical { n: n_actions } }
    }

    pub fn gaussian(input_dim: usize, hidden_sizes: Vec<usize>, action_dim: usize) -> Self {
        PolicySpec { input_dim, hidden_sizes, head: Head::Gaussian { dim: action_dim } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::InvalidSpec("hidden sizes must be >= 1".into()));
        }
        match self.head {
            Head::Categorical { n } if n < 2 => {
                Err(Error::InvalidSpec("categorical head needs >= 2 actions".into()))
            }
            Head::Gaussian { dim } if dim == 0 => {
                Err(Error::InvalidSpec("gaussian head needs >= 1 dimension".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::Categorical { n } => n,
            Head::Gaussian { dim } => dim,
        }
    }

    /// Layer sizes including input and output.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.output_dim());
        dims
    }

    /// Total number of parameters in the flat vector.
    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        let mut n = 0;
        for w in dims.windows(2) {
            n += w[0] * w[1] + w[1];
        }
        if let Head::Gaussian { dim } = self.head {
            n += dim;
        }
        n
    }

    /// Offset of the log-std block for Gaussian heads.
    fn log_std_offset(&self) -> usize {
        match self.head {
            Head::Gaussian { dim } => self.param_count() - dim,
            Head::Categorical { .. } => self.param_count(),
        }
    }
}

/// Draw initial parameters: weights N(0, 1/fan_in), biases zero,
/// Gaussian log-std ln(0.5).
pub fn init_params(spec: &PolicySpec, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.layer_dims();
    let mut params = Vec::with_capacity(spec.param_count());
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.push(z * std);
        }
        params.extend(std::iter::repeat(0.0).take(fan_out));
    }
    if let Head::Gaussian { dim } = spec.head {
        params.extend(std::iter::repeat(0.5f64.ln()).take(dim));
    }
    params
}

/// Forward-pass cache: `activations[0]` is the input, subsequent entries are
/// tanh outputs of each hidden layer; `output` is the pre-head linear output.
struct ForwardCache {
    activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn forward(spec: &PolicySpec, params: &[f64], state: &[f64]) -> ForwardCache {
    debug_assert_eq!(state.len(), spec.input_dim);
    let dims = spec.layer_dims();
    let mut activations = vec![state.to_vec()];
    let mut offset = 0;
    let n_layers = dims.len() - 1;
    let mut output = Vec::new();
    for l in 0..n_layers {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let input = activations.last().unwrap();
        let mut z = vec![0.0; fan_out];
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input.iter()) {
                acc += wi * xi;
            }
            z[o] = acc;
        }
        if l + 1 == n_layers {
            output = z;
        } else {
            activations.push(z.into_iter().map(f64::tanh).collect());
        }
    }
    ForwardCache { activations, output }
}

/// Backpropagate `delta_out` (gradient at the linear output) through the
/// network, accumulating weight/bias gradients into `grad`.
fn backward(spec: &PolicySpec, params: &[f64], cache: &ForwardCache, delta_out: &[f64], grad: &mut [f64]) {
    let dims = spec.layer_dims();
    let n_layers = dims.len() - 1;
    // Layer offsets into the flat vector.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += dims[l] * dims[l + 1] + dims[l + 1];
    }
    let mut delta = delta_out.to_vec();
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let off = offsets[l];
        let input = &cache.activations[l];
        // dL/dW[o][i] = delta[o] * input[i]; dL/db[o] = delta[o]
        for o in 0..fan_out {
            let d = delta[o];
            let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
            for (g, xi) in row.iter_mut().zip(input.iter()) {
                *g += d * xi;
            }
            grad[off + fan_in * fan_out + o] += d;
        }
        if l > 0 {
            let w = &params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, wi) in prev.iter_mut().zip(row.iter()) {
                    *p += d * wi;
                }
            }
            // tanh'(z) = 1 - tanh(z)^2, and activations store tanh(z).
            for (p, h) in prev.iter_mut().zip(input.iter()) {
                *p *= 1.0 - h * h;
            }
            delta = prev;
        }
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Sample an action and its exact log-probability.
pub fn act<R: Rng>(
    spec: &PolicySpec,
    params: &[f64],
    state: &[f64],
    rng: &mut R,
) -> Result<(Action, f64)> {
    let cache = forward(spec, params, state);
    if cache.output.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("policy network output".into()));
    }
    match spec.head {
        Head::Categorical { n } => {
            let logp = log_softmax(&cache.output);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, lp) in logp.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            Ok((Action::Discrete(chosen), logp[chosen]))
        }
        Head::Gaussian { dim } => {
            let log_std = &params[spec.log_std_offset()..];
            let mut a = Vec::with_capacity(dim);
            let mut lp = 0.0;
            for d in 0..dim {
                let sigma = log_std[d].exp();
                let z: f64 = StandardNormal.sample(rng);
                a.push(cache.output[d] + sigma * z);
                lp += -0.5 * z * z - log_std[d] - 0.5 * LN_2PI;
            }
            Ok((Action::Continuous(a), lp))
        }
    }
}

/// Exact log pi_theta(a | s).
pub fn log_prob(spec: &PolicySpec, params: &[f64], state: &[f64], action: &Action) -> Result<f64> {
    let cache = forward(spec, params, state);
    match (&spec.head, action) {
        (Head::Categorical { n }, Action::Discrete(a)) => {
            if a >= n {
                return Err(Error::InvalidAction(format!("index {a} out of range {n}")));
            }
            Ok(log_softmax(&cache.output)[*a])
        }
        (Head::Gaussian { dim }, Action::Continuous(a)) => {
            if a.len() != *dim {
                return Err(Error::InvalidAction(format!(
                    "action dim {} != head dim {dim}",
                    a.len()
                )));
            }
            let log_std = &params[spec.log_std_offset()..];
            let mut lp = 0.0;
            for d in 0..*dim {
                let sigma = log_std[d].exp();
                let z = (a[d] - cache.output[d]) / sigma;
                lp += -0.5 * z * z - log_std[d] - 0.5 * LN_2PI;
            }
            Ok(lp)
        }
        _ => Err(Error::InvalidAction("action kind does not match policy head".into())),
    }
}

/// Exact gradient of `log_prob` with respect to every parameter.
pub fn grad_log_prob(
    spec: &PolicySpec,
    params: &[f64],
    state: &[f64],
    action: &Action,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; spec.param_count()];
    accumulate_grad_log_prob(spec, params, state, action, 1.0, &mut grad)?;
    Ok(grad)
}

/// Add `scale * d(log pi(a|s))/d(theta)` into `grad`. Shared by the batched
/// estimators so they avoid allocating one vector per step.
pub fn accumulate_grad_log_prob(
    spec: &PolicySpec,
    params: &[f64],
    state: &[f64],
    action: &Action,
    scale: f64,
    grad: &mut [f64],
) -> Result<()> {
    let cache = forward(spec, params, state);
    match (&spec.head, action) {
        (Head::Categorical { n }, Action::Discrete(a)) => {
            if a >= n {
                return Err(Error::InvalidAction(format!("index {a} out of range {n}")));
            }
            let probs = softmax(&cache.output);
            let mut delta: Vec<f64> = probs.iter().map(|p| -p * scale).collect();
            delta[*a] += scale;
            backward(spec, params, &cache, &delta, grad);
        }
        (Head::Gaussian { dim }, Action::Continuous(a)) => {
            if a.len() != *dim {
                return Err(Error::InvalidAction(format!(
                    "action dim {} != head dim {dim}",
                    a.len()
                )));
            }
            let ls_off = spec.log_std_offset();
            let log_std = &params[ls_off..];
            let mut delta = vec![0.0; *dim];
            let mut ls_grad = vec![0.0; *dim];
            for d in 0..*dim {
                let sigma = log_std[d].exp();
                let z = (a[d] - cache.output[d]) / sigma;
                delta[d] = scale * z / sigma;
                ls_grad[d] = scale * (z * z - 1.0);
            }
            backward(spec, params, &cache, &delta, grad);
            for d in 0..*dim {
                grad[ls_off + d] += ls_grad[d];
            }
        }
        _ => return Err(Error::InvalidAction("action kind does not match policy head".into())),
    }
    Ok(())
}

/// Score function of a whole trajectory: the sum over steps of
/// `grad_log_prob` at the recorded (state, action) pairs.
pub fn traj_score(spec: &PolicySpec, params: &[f64], traj: &Trajectory) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; spec.param_count()];
    for step in &traj.steps {
        accumulate_grad_log_prob(spec, params, &step.state, &step.action, 1.0, &mut grad)?;
    }
    Ok(grad)
}
