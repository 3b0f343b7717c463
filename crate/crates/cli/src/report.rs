//! Quality / similarity comparison across a set of policies.

use crate::error::{CliError, CliResult};
use dipg_core::diversity::{traj_kernel, KernelConfig};
use dipg_core::env::Environment;
use dipg_core::types::Trajectory;
use serde::{Deserialize, Serialize};

/// How per-pair kernel values are aggregated into one similarity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityAgg {
    Mean,
    Min,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Mean undiscounted return per policy over its evaluation rollouts.
    pub mean_returns: Vec<f64>,
    /// Population standard deviation of the same returns.
    pub std_returns: Vec<f64>,
    /// Pairwise similarity: entry (i, j) aggregates traj_kernel over all
    /// cross pairs of the two evaluation sets; the diagonal aggregates the
    /// distinct within-set pairs.
    pub similarity: Vec<Vec<f64>>,
    /// Distinct goal indices each policy's rollouts reached (navigation).
    pub goals_per_policy: Option<Vec<Vec<usize>>>,
    /// Number of distinct goals reached across all policies (navigation).
    pub distinct_goals: Option<usize>,
}

fn aggregate(values: impl Iterator<Item = f64>, agg: SimilarityAgg) -> Option<f64> {
    match agg {
        SimilarityAgg::Mean => {
            let mut sum = 0.0;
            let mut n = 0usize;
            for v in values {
                sum += v;
                n += 1;
            }
            (n > 0).then(|| sum / n as f64)
        }
        SimilarityAgg::Min => values.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v)))),
    }
}

fn cross_similarity(
    a: &[Trajectory],
    b: &[Trajectory],
    kcfg: &KernelConfig,
    agg: SimilarityAgg,
) -> CliResult<f64> {
    let mut vals = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            vals.push(traj_kernel(x, y, kcfg)?);
        }
    }
    aggregate(vals.into_iter(), agg)
        .ok_or_else(|| CliError::runtime("similarity needs non-empty trajectory sets"))
}

fn within_similarity(a: &[Trajectory], kcfg: &KernelConfig, agg: SimilarityAgg) -> CliResult<f64> {
    if a.is_empty() {
        return Err(CliError::runtime("similarity needs non-empty trajectory sets"));
    }
    if a.len() == 1 {
        // a single trajectory is identical to itself
        return Ok(1.0);
    }
    let mut vals = Vec::new();
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            vals.push(traj_kernel(&a[i], &a[j], kcfg)?);
        }
    }
    Ok(aggregate(vals.into_iter(), agg).unwrap())
}

/// Build the report from each policy's evaluation rollouts.
pub fn comparison_report(
    env: &Environment,
    eval_sets: &[Vec<Trajectory>],
    kcfg: &KernelConfig,
    agg: SimilarityAgg,
) -> CliResult<ComparisonReport> {
    if eval_sets.is_empty() {
        return Err(CliError::runtime("comparison needs at least one policy"));
    }
    let m = eval_sets.len();
    let mut mean_returns = Vec::with_capacity(m);
    let mut std_returns = Vec::with_capacity(m);
    for set in eval_sets {
        if set.is_empty() {
            return Err(CliError::runtime("comparison needs non-empty evaluation sets"));
        }
        let returns: Vec<f64> = set.iter().map(|t| t.total_reward()).collect();
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let var =
            returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / returns.len() as f64;
        mean_returns.push(mean);
        std_returns.push(var.sqrt());
    }

    let mut similarity = vec![vec![0.0; m]; m];
    for i in 0..m {
        similarity[i][i] = within_similarity(&eval_sets[i], kcfg, agg)?;
        for j in (i + 1)..m {
            let s = cross_similarity(&eval_sets[i], &eval_sets[j], kcfg, agg)?;
            similarity[i][j] = s;
            similarity[j][i] = s;
        }
    }

    let (goals_per_policy, distinct_goals) = if env.nav_geometry().is_some() {
        let mut per = Vec::with_capacity(m);
        let mut union = std::collections::BTreeSet::new();
        for set in eval_sets {
            let mut goals = std::collections::BTreeSet::new();
            for t in set {
                if let Some(g) = env.goal_reached(t) {
                    goals.insert(g);
                    union.insert(g);
                }
            }
            per.push(goals.into_iter().collect::<Vec<_>>());
        }
        (Some(per), Some(union.len()))
    } else {
        (None, None)
    };

    Ok(ComparisonReport {
        mean_returns,
        std_returns,
        similarity,
        goals_per_policy,
        distinct_goals,
    })
}

impl ComparisonReport {
    /// Mean of the off-diagonal similarity entries.
    pub fn mean_cross_similarity(&self) -> f64 {
        let m = self.similarity.len();
        if m < 2 {
            return f64::NAN;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    sum += self.similarity[i][j];
                    n += 1;
                }
            }
        }
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dipg_core::env::{make_env, EnvKind, EnvSpec};
    use dipg_core::types::{Action, Step};

    /// Straight-line trajectory toward a fixed direction.
    fn scripted(dir: (f64, f64), steps: usize) -> Trajectory {
        let mut t = Trajectory::new();
        let mut pos = (0.0, 0.0);
        for _ in 0..steps {
            t.steps.push(Step {
                state: vec![pos.0, pos.1],
                action: Action::Continuous(vec![dir.0 * 0.5, dir.1 * 0.5]),
                reward: 0.0,
                behavior_prob: None,
            });
            pos = (pos.0 + dir.0 * 0.5, pos.1 + dir.1 * 0.5);
        }
        t
    }

    #[test]
    fn scripted_opposite_policies_have_low_cross_similarity() {
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let east: Vec<Trajectory> = (0..4).map(|_| scripted((1.0, 0.0), 10)).collect();
        let west: Vec<Trajectory> = (0..4).map(|_| scripted((-1.0, 0.0), 10)).collect();
        let report = comparison_report(
            &env,
            &[east, west],
            &KernelConfig::default(),
            SimilarityAgg::Mean,
        )
        .unwrap();
        assert!(report.similarity[0][1] < report.similarity[0][0]);
        assert!(report.similarity[0][1] < report.similarity[1][1]);
        assert!((report.similarity[0][1] - report.similarity[1][0]).abs() < 1e-12);
        // identical scripted rollouts within each set
        assert_eq!(report.similarity[0][0], 1.0);
    }

    #[test]
    fn goal_attribution_counts_distinct_goals() {
        let env = make_env(&EnvSpec::new(EnvKind::MultiGoal)).unwrap();
        let mut east = scripted((1.0, 0.0), 10);
        east.terminated = true;
        let mut north = scripted((0.0, 1.0), 10);
        north.terminated = true;
        let report = comparison_report(
            &env,
            &[vec![east], vec![north]],
            &KernelConfig::default(),
            SimilarityAgg::Mean,
        )
        .unwrap();
        assert_eq!(report.goals_per_policy, Some(vec![vec![0], vec![2]]));
        assert_eq!(report.distinct_goals, Some(2));
    }

    #[test]
    fn cartpole_report_has_no_goal_fields() {
        let env = make_env(&EnvSpec::new(EnvKind::Cartpole)).unwrap();
        let mut t = Trajectory::new();
        t.steps.push(Step {
            state: vec![0.0; 4],
            action: Action::Discrete(0),
            reward: 1.0,
            behavior_prob: None,
        });
        let report =
            comparison_report(&env, &[vec![t]], &KernelConfig::default(), SimilarityAgg::Mean)
                .unwrap();
        assert!(report.distinct_goals.is_none());
        assert_eq!(report.similarity[0][0], 1.0);
    }
}
