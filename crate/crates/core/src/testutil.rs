//! Test-support oracles: finite differences and a fully enumerable MDP.
//!
//! Everything here is independent of the sampling estimators it is used to
//! check: quantities are computed by direct enumeration of all trajectories
//! with their exact probabilities. Intended for test code only.

use crate::diversity::{traj_kernel, KernelConfig};
use crate::policy::{grad_log_prob, log_prob, PolicySpec};
use crate::types::{Action, Step, Trajectory};
use rand::Rng;

/// Central finite differences of `f` at `params` with step `h`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; params.len()];
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = f(&p);
        p[i] = params[i] - h;
        let dn = f(&p);
        p[i] = params[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    g
}

/// A 2-state, 2-action, horizon-2 MDP with deterministic transitions
/// (the next state index equals the chosen action) and a reward table.
/// With a linear softmax policy over one-hot states this is a tabular
/// softmax policy, and all four trajectories can be enumerated.
#[derive(Debug, Clone)]
pub struct EnumerableMdp {
    /// rewards[s][a]
    pub rewards: [[f64; 2]; 2],
    pub gamma: f64,
}

impl Default for EnumerableMdp {
    fn default() -> Self {
        EnumerableMdp { rewards: [[1.0, 0.0], [0.0, 2.0]], gamma: 0.9 }
    }
}

fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0, 0.0];
    v[s] = 1.0;
    v
}

impl EnumerableMdp {
    /// The matching policy architecture: linear softmax on one-hot states.
    pub fn policy_spec(&self) -> PolicySpec {
        PolicySpec::categorical(2, vec![], 2)
    }

    /// All four trajectories (a0, a1) in lexicographic order.
    pub fn trajectories(&self) -> Vec<Trajectory> {
        let mut out = Vec::with_capacity(4);
        for a0 in 0..2usize {
            for a1 in 0..2usize {
                let s1 = a0; // deterministic transition
                let mut t = Trajectory::new();
                t.steps.push(Step {
                    state: one_hot(0),
                    action: Action::Discrete(a0),
                    reward: self.rewards[0][a0],
                    behavior_prob: None,
                });
                t.steps.push(Step {
                    state: one_hot(s1),
                    action: Action::Discrete(a1),
                    reward: self.rewards[s1][a1],
                    behavior_prob: None,
                });
                out.push(t);
            }
        }
        out
    }

    /// Exact probability of a trajectory under the policy.
    pub fn traj_prob(&self, spec: &PolicySpec, params: &[f64], traj: &Trajectory) -> f64 {
        traj.steps
            .iter()
            .map(|s| log_prob(spec, params, &s.state, &s.action).unwrap())
            .sum::<f64>()
            .exp()
    }

    /// Exact expected discounted return.
    pub fn exact_return(&self, spec: &PolicySpec, params: &[f64]) -> f64 {
        self.trajectories()
            .iter()
            .map(|t| self.traj_prob(spec, params, t) * t.discounted_return(self.gamma))
            .sum()
    }

    /// Exact expectation of the REINFORCE estimator with constant baseline b:
    /// sum_tau p(tau) sum_t grad log pi(a_t|s_t) (g_t - b).
    pub fn exact_pg_gradient(&self, spec: &PolicySpec, params: &[f64], baseline: f64) -> Vec<f64> {
        let mut grad = vec![0.0; spec.param_count()];
        for traj in self.trajectories() {
            let p = self.traj_prob(spec, params, &traj);
            let rtg = crate::pg::returns_to_go(&traj, self.gamma);
            for (step, g) in traj.steps.iter().zip(rtg.iter()) {
                let glp = grad_log_prob(spec, params, &step.state, &step.action).unwrap();
                for (acc, x) in grad.iter_mut().zip(glp.iter()) {
                    *acc += p * (g - baseline) * x;
                }
            }
        }
        grad
    }

    /// Exact D_MMD between the policy's trajectory distribution and a fixed
    /// weighted trajectory set (weights must sum to 1).
    pub fn exact_d_mmd(
        &self,
        spec: &PolicySpec,
        params: &[f64],
        q: &[(Trajectory, f64)],
        kcfg: &KernelConfig,
    ) -> f64 {
        let trajs = self.trajectories();
        let probs: Vec<f64> = trajs.iter().map(|t| self.traj_prob(spec, params, t)).collect();
        let mut within_p = 0.0;
        for (ti, pi) in trajs.iter().zip(probs.iter()) {
            for (tj, pj) in trajs.iter().zip(probs.iter()) {
                within_p += pi * pj * traj_kernel(ti, tj, kcfg).unwrap();
            }
        }
        let mut cross = 0.0;
        for (ti, pi) in trajs.iter().zip(probs.iter()) {
            for (tq, w) in q {
                cross += pi * w * traj_kernel(ti, tq, kcfg).unwrap();
            }
        }
        let mut within_q = 0.0;
        for (ta, wa) in q {
            for (tb, wb) in q {
                within_q += wa * wb * traj_kernel(ta, tb, kcfg).unwrap();
            }
        }
        within_p - 2.0 * cross + within_q
    }

    /// Exact expectation of the score-function gradient expansion of D_MMD
    /// against a fixed weighted trajectory set.
    pub fn exact_grad_d_mmd(
        &self,
        spec: &PolicySpec,
        params: &[f64],
        q: &[(Trajectory, f64)],
        kcfg: &KernelConfig,
    ) -> Vec<f64> {
        let trajs = self.trajectories();
        let probs: Vec<f64> = trajs.iter().map(|t| self.traj_prob(spec, params, t)).collect();
        let scores: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| crate::policy::traj_score(spec, params, t).unwrap())
            .collect();
        let mut grad = vec![0.0; spec.param_count()];
        // E[k(t, t') (score(t) + score(t'))] = 2 E[k(t, t') score(t)]
        for i in 0..trajs.len() {
            let mut coeff = 0.0;
            for j in 0..trajs.len() {
                let k = traj_kernel(&trajs[i], &trajs[j], kcfg).unwrap();
                coeff += 2.0 * probs[i] * probs[j] * k;
            }
            for (tq, w) in q {
                let k = traj_kernel(&trajs[i], tq, kcfg).unwrap();
                coeff -= 2.0 * probs[i] * w * k;
            }
            for (g, s) in grad.iter_mut().zip(scores[i].iter()) {
                *g += coeff * s;
            }
        }
        grad
    }

    /// The policy's exact trajectory distribution as a weighted set, usable
    /// as a q argument above.
    pub fn exact_distribution(&self, spec: &PolicySpec, params: &[f64]) -> Vec<(Trajectory, f64)> {
        self.trajectories()
            .into_iter()
            .map(|t| {
                let p = self.traj_prob(spec, params, &t);
                (t, p)
            })
            .collect()
    }

    /// Sample one trajectory from the policy.
    pub fn sample<R: Rng>(&self, spec: &PolicySpec, params: &[f64], rng: &mut R) -> Trajectory {
        let mut t = Trajectory::new();
        let mut s = 0usize;
        for _ in 0..2 {
            let state = one_hot(s);
            let (action, _) = crate::policy::act(spec, params, &state, rng).unwrap();
            let a = match action {
                Action::Discrete(a) => a,
                _ => unreachable!(),
            };
            t.steps.push(Step {
                state,
                action: Action::Discrete(a),
                reward: self.rewards[s][a],
                behavior_prob: None,
            });
            s = a;
        }
        t
    }
}
