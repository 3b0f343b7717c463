//! Episodic environments: three 2-D navigation tasks and cartpole, all
//! exposed as pure transition functions plus an explicit RNG.

use crate::policy::{act, PolicySpec};
use crate::types::{Action, Step, Trajectory};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Which built-in environment to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    MultiGoal,
    AsymmetricGoals,
    Obstacle,
    Cartpole,
}

/// Declarative environment description. Geometry defaults are filled in per
/// kind by [`make_env`]; the optional fields override desk defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Std of the Gaussian noise added to the start position (navigation).
    #[serde(default)]
    pub start_noise_std: Option<f64>,
    /// Std of the per-step transition noise (navigation).
    #[serde(default)]
    pub transition_noise_std: Option<f64>,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        EnvSpec { kind, horizon: None, gamma: None, start_noise_std: None, transition_noise_std: None }
    }
}

/// Axis-aligned impassable region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x_min && x < self.x_max && y > self.y_min && y < self.y_max
    }
}

#[derive(Debug, Clone)]
pub struct NavGeometry {
    pub goals: Vec<(f64, f64)>,
    pub goal_radius: f64,
    pub start: (f64, f64),
    pub start_noise_std: f64,
    pub transition_noise_std: f64,
    pub action_bound: f64,
    pub barrier: Option<Rect>,
    pub goal_bonus: f64,
    pub blocked_penalty: f64,
}

#[derive(Debug, Clone)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * std::f64::consts::PI / 180.0,
        }
    }
}

impl CartpoleParams {
    /// One explicit-Euler step of the pole-on-cart dynamics.
    pub fn euler_step(&self, state: &[f64], force: f64) -> [f64; 4] {
        let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
        let total_mass = self.mass_cart + self.mass_pole;
        let pole_mass_length = self.mass_pole * self.half_length;
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        [
            x + self.dt * x_dot,
            x_dot + self.dt * x_acc,
            theta + self.dt * theta_dot,
            theta_dot + self.dt * theta_acc,
        ]
    }
}

#[derive(Debug, Clone)]
enum Dynamics {
    Nav(NavGeometry),
    Cartpole(CartpoleParams),
}

/// A constructed environment: fixed geometry plus horizon and discount.
#[derive(Debug, Clone)]
pub struct Environment {
    pub kind: EnvKind,
    pub horizon: usize,
    pub gamma: f64,
    dynamics: Dynamics,
}

/// The action interface an environment expects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, bound: f64 },
}

pub fn make_env(spec: &EnvSpec) -> Result<Environment> {
    if let Some(h) = spec.horizon {
        if h == 0 {
            return Err(Error::InvalidSpec("horizon must be >= 1".into()));
        }
    }
    if let Some(g) = spec.gamma {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::InvalidSpec("gamma must be in (0, 1]".into()));
        }
    }
    let nav = |goals: Vec<(f64, f64)>, start: (f64, f64), barrier: Option<Rect>| NavGeometry {
        goals,
        goal_radius: 0.5,
        start,
        start_noise_std: spec.start_noise_std.unwrap_or(0.1),
        transition_noise_std: spec.transition_noise_std.unwrap_or(0.01),
        action_bound: 0.5,
        barrier,
        goal_bonus: 10.0,
        blocked_penalty: 1.0,
    };
    let (dynamics, horizon, gamma) = match spec.kind {
        EnvKind::MultiGoal => (
            Dynamics::Nav(nav(
                vec![(5.0, 0.0), (-5.0, 0.0), (0.0, 5.0), (0.0, -5.0)],
                (0.0, 0.0),
                None,
            )),
            50,
            0.99,
        ),
        EnvKind::AsymmetricGoals => (
            Dynamics::Nav(nav(vec![(2.0, 0.0), (-6.0, 0.0)], (0.0, 0.0), None)),
            60,
            0.99,
        ),
        EnvKind::Obstacle => (
            Dynamics::Nav(nav(
                vec![(0.0, 4.0)],
                (0.0, -4.0),
                Some(Rect { x_min: -2.0, x_max: 2.0, y_min: -0.5, y_max: 0.5 }),
            )),
            80,
            0.99,
        ),
        EnvKind::Cartpole => (Dynamics::Cartpole(CartpoleParams::default()), 200, 1.0),
    };
    Ok(Environment {
        kind: spec.kind,
        horizon: spec.horizon.unwrap_or(horizon),
        gamma: spec.gamma.unwrap_or(gamma),
        dynamics,
    })
}

impl Environment {
    pub fn state_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::Nav(_) => 2,
            Dynamics::Cartpole(_) => 4,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.dynamics {
            Dynamics::Nav(g) => ActionSpace::Continuous { dim: 2, bound: g.action_bound },
            Dynamics::Cartpole(_) => ActionSpace::Discrete(2),
        }
    }

    /// Default policy architecture matching this environment's spaces.
    pub fn default_policy_spec(&self, hidden_sizes: Vec<usize>) -> PolicySpec {
        match self.action_space() {
            ActionSpace::Discrete(n) => PolicySpec::categorical(self.state_dim(), hidden_sizes, n),
            ActionSpace::Continuous { dim, .. } => {
                PolicySpec::gaussian(self.state_dim(), hidden_sizes, dim)
            }
        }
    }

    pub fn nav_geometry(&self) -> Option<&NavGeometry> {
        match &self.dynamics {
            Dynamics::Nav(g) => Some(g),
            Dynamics::Cartpole(_) => None,
        }
    }

    pub fn reset<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Nav(g) => {
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                vec![g.start.0 + g.start_noise_std * nx, g.start.1 + g.start_noise_std * ny]
            }
            Dynamics::Cartpole(_) => (0..4).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        }
    }

    /// One transition. Returns (next state, reward, done).
    pub fn step<R: Rng>(
        &self,
        state: &[f64],
        action: &Action,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64, bool)> {
        if state.len() != self.state_dim() || state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state".into()));
        }
        if !action.is_finite() {
            return Err(Error::NonFinite("action".into()));
        }
        match &self.dynamics {
            Dynamics::Nav(g) => {
                let a = match action {
                    Action::Continuous(v) if v.len() == 2 => v,
                    _ => return Err(Error::InvalidAction("navigation expects a 2-D continuous action".into())),
                };
                let dx = a[0].clamp(-g.action_bound, g.action_bound);
                let dy = a[1].clamp(-g.action_bound, g.action_bound);
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                let mut next = [
                    state[0] + dx + g.transition_noise_std * nx,
                    state[1] + dy + g.transition_noise_std * ny,
                ];
                let mut reward = 0.0;
                if let Some(barrier) = &g.barrier {
                    if barrier.contains(next[0], next[1]) {
                        next = [state[0], state[1]];
                        reward -= g.blocked_penalty;
                    }
                }
                let d = g
                    .goals
                    .iter()
                    .map(|&(gx, gy)| ((next[0] - gx).powi(2) + (next[1] - gy).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                reward -= d / 10.0;
                let done = d <= g.goal_radius;
                if done {
                    reward += g.goal_bonus;
                }
                Ok((next.to_vec(), reward, done))
            }
            Dynamics::Cartpole(p) => {
                let force = match action {
                    Action::Discrete(0) => -p.force_mag,
                    Action::Discrete(1) => p.force_mag,
                    _ => return Err(Error::InvalidAction("cartpole expects a discrete action in {0, 1}".into())),
                };
                let next = p.euler_step(state, force).to_vec();
                let done = next[0].abs() > p.x_threshold || next[2].abs() > p.theta_threshold;
                Ok((next, 1.0, done))
            }
        }
    }

    /// Index of the goal reached by a terminated trajectory: the goal nearest
    /// to the final recorded state. Goals are far apart relative to one step,
    /// so nearest-goal attribution is unambiguous.
    pub fn goal_reached(&self, traj: &Trajectory) -> Option<usize> {
        let g = self.nav_geometry()?;
        if !traj.terminated {
            return None;
        }
        let last = &traj.steps.last()?.state;
        g.goals
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (last[0] - a.0).powi(2) + (last[1] - a.1).powi(2);
                let db = (last[0] - b.0).powi(2) + (last[1] - b.1).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
    }
}

/// Run one episode of at most `horizon` steps, recording the behavior
/// probability of each chosen action.
pub fn rollout<R: Rng>(
    env: &Environment,
    spec: &PolicySpec,
    params: &[f64],
    rng: &mut R,
    horizon: usize,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    let mut state = env.reset(rng);
    for _ in 0..horizon.min(env.horizon) {
        let (action, log_prob) = act(spec, params, &state, rng)?;
        let (next, reward, done) = env.step(&state, &action, rng)?;
        traj.steps.push(Step {
            state,
            action,
            reward,
            behavior_prob: Some(log_prob.exp()),
        });
        state = next;
        if done {
            traj.terminated = true;
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_noise(kind: EnvKind) -> EnvSpec {
        let mut s = EnvSpec::new(kind);
        s.start_noise_std = Some(0.0);
        s.transition_noise_std = Some(0.0);
        s
    }

    #[test]
    fn multi_goal_has_four_goals_on_axes() {
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let g = env.nav_geometry().unwrap();
        assert_eq!(g.goals, vec![(5.0, 0.0), (-5.0, 0.0), (0.0, 5.0), (0.0, -5.0)]);
    }

    #[test]
    fn asymmetric_goals_near_and_far() {
        let env = make_env(&EnvSpec::new(EnvKind::AsymmetricGoals)).unwrap();
        let g = env.nav_geometry().unwrap();
        assert_eq!(g.goals, vec![(2.0, 0.0), (-6.0, 0.0)]);
    }

    #[test]
    fn rejects_zero_horizon() {
        let mut s = EnvSpec::new(EnvKind::MultiGoal);
        s.horizon = Some(0);
        assert!(make_env(&s).is_err());
    }

    #[test]
    fn zero_noise_reset_is_configured_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let env = make_env(&zero_noise(EnvKind::MultiGoal)).unwrap();
        assert_eq!(env.reset(&mut rng), vec![0.0, 0.0]);
        let env = make_env(&zero_noise(EnvKind::Obstacle)).unwrap();
        assert_eq!(env.reset(&mut rng), vec![0.0, -4.0]);
    }

    #[test]
    fn cartpole_reset_reproducible() {
        let env = make_env(&EnvSpec::new(EnvKind::Cartpole)).unwrap();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(5));
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.abs() < 0.05));
    }

    #[test]
    fn zero_action_zero_noise_leaves_state_and_pays_distance() {
        let env = make_env(&zero_noise(EnvKind::MultiGoal)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = vec![1.0, 1.0];
        let (next, r, done) = env
            .step(&s, &Action::Continuous(vec![0.0, 0.0]), &mut rng)
            .unwrap();
        assert_eq!(next, s);
        let d_min = ((1.0f64 - 5.0).powi(2) + 1.0).sqrt().min((1.0f64 + (1.0 - 5.0f64).powi(2)).sqrt());
        assert!((r - (-d_min / 10.0)).abs() < 1e-12);
        assert!(!done);
    }

    #[test]
    fn obstacle_blocks_moves_into_barrier() {
        let env = make_env(&zero_noise(EnvKind::Obstacle)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = vec![0.0, -0.9];
        // moving up by 0.5 would land at (0, -0.4), inside the barrier
        let (next, r, _) = env
            .step(&s, &Action::Continuous(vec![0.0, 0.5]), &mut rng)
            .unwrap();
        assert_eq!(next, s);
        let d = (0.0f64.powi(2) + (-0.9f64 - 4.0).powi(2)).sqrt();
        assert!((r - (-1.0 - d / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn cartpole_one_euler_step_matches_hand_integration() {
        let env = make_env(&EnvSpec::new(EnvKind::Cartpole)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, r, done) = env
            .step(&[0.0, 0.0, 0.0, 0.0], &Action::Discrete(1), &mut rng)
            .unwrap();
        // By hand, from rest with force +10 N:
        //   temp      = 10 / 1.1
        //   theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1))
        //   x_acc     = temp - 0.05 * theta_acc / 1.1
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert_eq!(next[0], 0.0);
        assert!((next[1] - 0.02 * x_acc).abs() < 1e-12);
        assert_eq!(next[2], 0.0);
        assert!((next[3] - 0.02 * theta_acc).abs() < 1e-12);
        assert_eq!(r, 1.0);
        assert!(!done);
    }

    #[test]
    fn cartpole_equilibrium_is_fixed_point_under_zero_force() {
        // The unstable equilibrium with zero perturbation and zero applied
        // force stays put.
        let p = CartpoleParams::default();
        let mut state = [0.0; 4];
        for _ in 0..100 {
            state = p.euler_step(&state, 0.0);
        }
        assert_eq!(state, [0.0; 4]);
    }

    #[test]
    fn rollout_horizon_one_has_one_step() {
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let spec = env.default_policy_spec(vec![8]);
        let params = init_params(&spec, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = rollout(&env, &spec, &params, &mut rng, 1).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn rollouts_are_bitwise_identical_given_equal_seeds() {
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let spec = env.default_policy_spec(vec![8]);
        let params = init_params(&spec, 0);
        let a = rollout(&env, &spec, &params, &mut ChaCha8Rng::seed_from_u64(7), 50).unwrap();
        let b = rollout(&env, &spec, &params, &mut ChaCha8Rng::seed_from_u64(7), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_straight_line_policy_reaches_goal() {
        // A policy whose mean pushes hard right: with tiny log-std it walks
        // straight to the goal at (5, 0) and terminates within 50 steps.
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let spec = PolicySpec::gaussian(2, vec![], 2);
        let mut params = vec![0.0; spec.param_count()];
        params[4] = 5.0; // x bias, clipped to +0.5 by the env
        params[6] = -6.0; // log-std, effectively deterministic
        params[7] = -6.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = rollout(&env, &spec, &params, &mut rng, 50).unwrap();
        assert!(traj.terminated, "should reach the goal");
        assert!(traj.len() <= 50);
        assert_eq!(env.goal_reached(&traj), Some(0));
    }

    #[test]
    fn no_trajectory_state_is_inside_the_barrier() {
        let env = make_env(&EnvSpec::new(EnvKind::Obstacle)).unwrap();
        let spec = env.default_policy_spec(vec![8]);
        let barrier = env.nav_geometry().unwrap().barrier.unwrap();
        for seed in 0..10 {
            let params = init_params(&spec, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = rollout(&env, &spec, &params, &mut rng, 80).unwrap();
            for step in &traj.steps {
                assert!(!barrier.contains(step.state[0], step.state[1]));
                assert!(step.state.iter().all(|x| x.is_finite()));
                assert!(step.reward.is_finite());
            }
        }
    }
}
