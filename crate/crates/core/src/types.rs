//! Shared trajectory types consumed by every other module.

use serde::{Deserialize, Serialize};

/// A single agent action: discrete index or continuous vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Real-vector encoding used by the trajectory kernel: discrete actions
    /// become a single coordinate holding the index.
    pub fn features(&self) -> Vec<f64> {
        match self {
            Action::Discrete(i) => vec![*i as f64],
            Action::Continuous(v) => v.clone(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Action::Discrete(_) => 1,
            Action::Continuous(v) => v.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Action::Discrete(_) => true,
            Action::Continuous(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// One transition: the state an action was taken in, the action, the reward
/// received, and (when known) the probability the behavior policy assigned
/// to that action at collection time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub behavior_prob: Option<f64>,
}

/// One episode's ordered sequence of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// True when the final step triggered the environment's termination
    /// predicate (as opposed to hitting the horizon).
    pub terminated: bool,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory { steps: Vec::new(), terminated: false }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted episode reward.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Discounted return from the first step.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.steps
            .iter()
            .rev()
            .fold(0.0, |acc, s| s.reward + gamma * acc)
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}
