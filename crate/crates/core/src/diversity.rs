//! Trajectory kernel, MMD² estimators, the min-over-known-policies diversity
//! measure, and its likelihood-ratio gradient estimator.

use crate::policy::{traj_score, PolicySpec};
use crate::types::Trajectory;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which trajectory components the kernel compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    StatesOnly,
    ActionsOnly,
    StatesAndActions,
}

/// Configuration of the Gaussian trajectory kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Gaussian bandwidth h.
    pub bandwidth: f64,
    pub selector: SelectorMode,
    /// Optional cap on the number of steps compared.
    pub max_steps: Option<usize>,
    /// Divide squared distances by the feature dimension, keeping bandwidth 1
    /// meaningful across trajectory lengths.
    pub normalize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: 1.0,
            selector: SelectorMode::StatesAndActions,
            max_steps: None,
            normalize: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidSpec("kernel bandwidth must be > 0".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidSpec("kernel max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which MMD² estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdEstimator {
    /// V-statistic: includes diagonal terms, always >= 0.
    Biased,
    /// U-statistic: excludes diagonals of the within-set terms.
    Unbiased,
}

/// Stored sample trajectories of each known policy.
#[derive(Debug, Clone, Default)]
pub struct DiversitySet {
    pub entries: Vec<Vec<Trajectory>>,
}

impl DiversitySet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Stack the first N steps of both trajectories (N the shorter length,
/// capped at `max_steps`) into equal-dimension feature vectors.
pub fn featurize(
    a: &Trajectory,
    b: &Trajectory,
    cfg: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = a.len().min(b.len()).min(cfg.max_steps.unwrap_or(usize::MAX));
    let features = |t: &Trajectory| {
        let mut v = Vec::new();
        for step in t.steps.iter().take(n) {
            match cfg.selector {
                SelectorMode::StatesOnly => v.extend_from_slice(&step.state),
                SelectorMode::ActionsOnly => v.extend(step.action.features()),
                SelectorMode::StatesAndActions => {
                    v.extend_from_slice(&step.state);
                    v.extend(step.action.features());
                }
            }
        }
        v
    };
    let fa = features(a);
    let fb = features(b);
    if fa.len() != fb.len() {
        return Err(Error::DimensionMismatch(
            "trajectories have differing state/action dimensions".into(),
        ));
    }
    Ok((fa, fb))
}

/// Gaussian kernel between two trajectories:
/// exp(-||x - x'||^2 / (2 h^2 d)), d the feature dimension when normalizing.
pub fn traj_kernel(a: &Trajectory, b: &Trajectory, cfg: &KernelConfig) -> Result<f64> {
    let (fa, fb) = featurize(a, b, cfg)?;
    Ok(feature_kernel(&fa, &fb, cfg))
}

/// Gaussian kernel between two equal-length feature vectors. Also used by
/// the batch module on likelihood vectors.
pub fn feature_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    let d_norm = if cfg.normalize { a.len().max(1) as f64 } else { 1.0 };
    (-sq / (2.0 * cfg.bandwidth * cfg.bandwidth * d_norm)).exp()
}

/// Sample MMD² between two trajectory sets.
pub fn mmd2(
    a: &[Trajectory],
    b: &[Trajectory],
    cfg: &KernelConfig,
    estimator: MmdEstimator,
) -> Result<f64> {
    let (m, n) = (a.len(), b.len());
    let min_size = match estimator {
        MmdEstimator::Biased => 1,
        MmdEstimator::Unbiased => 2,
    };
    if m < min_size || n < min_size {
        return Err(Error::InsufficientSamples(format!(
            "mmd2 needs sets of size >= {min_size}, got {m} and {n}"
        )));
    }
    let mut within_a = 0.0;
    for i in 0..m {
        for j in 0..m {
            if estimator == MmdEstimator::Unbiased && i == j {
                continue;
            }
            within_a += traj_kernel(&a[i], &a[j], cfg)?;
        }
    }
    let mut within_b = 0.0;
    for i in 0..n {
        for j in 0..n {
            if estimator == MmdEstimator::Unbiased && i == j {
                continue;
            }
            within_b += traj_kernel(&b[i], &b[j], cfg)?;
        }
    }
    let mut cross = 0.0;
    for ta in a {
        for tb in b {
            cross += traj_kernel(ta, tb, cfg)?;
        }
    }
    let value = match estimator {
        MmdEstimator::Biased => {
            within_a / (m * m) as f64 - 2.0 * cross / (m * n) as f64 + within_b / (n * n) as f64
        }
        MmdEstimator::Unbiased => {
            within_a / (m * (m - 1)) as f64 - 2.0 * cross / (m * n) as f64
                + within_b / (n * (n - 1)) as f64
        }
    };
    Ok(value)
}

/// Minimum biased MMD² between `p` and the entries of `q`, with the index of
/// the nearest entry (ties broken by lowest index). `None` when `q` is empty:
/// no diversity constraint.
pub fn d_mmd(
    p: &[Trajectory],
    q: &DiversitySet,
    cfg: &KernelConfig,
) -> Result<Option<(f64, usize)>> {
    if q.is_empty() {
        return Ok(None);
    }
    let mut best: Option<(f64, usize)> = None;
    for (idx, entry) in q.entries.iter().enumerate() {
        let v = mmd2(p, entry, cfg, MmdEstimator::Biased)?;
        if best.map_or(true, |(bv, _)| v < bv) {
            best = Some((v, idx));
        }
    }
    Ok(best)
}

/// Likelihood-ratio gradient estimator of D_MMD at `params`, using the
/// rollout batch `p` (sampled from the policy) and the stored sets in `q`.
///
/// With q* the nearest entry and score(tau) the trajectory score function:
///
///   (1/(m(m-1))) sum_{i != j} k(t_i, t_j) [score(t_i) + score(t_j)]
///   - (2/(m n)) sum_{i,j} k(t_i, t^q_j) score(t_i)
pub fn grad_d_mmd(
    spec: &PolicySpec,
    params: &[f64],
    p: &[Trajectory],
    q: &DiversitySet,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    let m = p.len();
    if m < 2 {
        return Err(Error::InsufficientSamples(
            "grad_d_mmd needs at least 2 rollouts".to_string(),
        ));
    }
    let (_, argmin) = d_mmd(p, q, cfg)?.ok_or_else(|| {
        Error::InsufficientSamples("grad_d_mmd needs a non-empty diversity set".to_string())
    })?;
    let q_star = &q.entries[argmin];
    let n = q_star.len();

    let scores: Vec<Vec<f64>> = p
        .iter()
        .map(|t| traj_score(spec, params, t))
        .collect::<Result<_>>()?;

    // Per-score coefficients: the within-set term contributes
    // sum_{j != i} k(t_i, t_j) twice (symmetry of score(i)+score(j)),
    // the cross term -2/(mn) sum_j k(t_i, t^q_j).
    let mut coeff = vec![0.0; m];
    let within_scale = 1.0 / (m * (m - 1)) as f64;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let k = traj_kernel(&p[i], &p[j], cfg)?;
            coeff[i] += 2.0 * within_scale * k;
        }
    }
    let cross_scale = 2.0 / (m * n) as f64;
    for i in 0..m {
        for tq in q_star {
            let k = traj_kernel(&p[i], tq, cfg)?;
            coeff[i] -= cross_scale * k;
        }
    }

    let mut grad = vec![0.0; spec.param_count()];
    for (c, s) in coeff.iter().zip(scores.iter()) {
        for (g, si) in grad.iter_mut().zip(s.iter()) {
            *g += c * si;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Action, Step};

    fn nav_traj(points: &[(f64, f64)]) -> Trajectory {
        let mut t = Trajectory::new();
        for &(x, y) in points {
            t.steps.push(Step {
                state: vec![x, y],
                action: Action::Continuous(vec![0.1, 0.1]),
                reward: 0.0,
                behavior_prob: None,
            });
        }
        t
    }

    #[test]
    fn featurize_uses_shorter_length() {
        let cfg = KernelConfig { selector: SelectorMode::StatesOnly, ..Default::default() };
        let a = nav_traj(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let b = nav_traj(&[(0.0, 0.0); 7]);
        let (fa, fb) = featurize(&a, &b, &cfg).unwrap();
        assert_eq!(fa.len(), 6);
        assert_eq!(fb.len(), 6);
    }

    #[test]
    fn featurize_dimensions() {
        let a = nav_traj(&[(0.0, 0.0); 5]);
        let b = nav_traj(&[(1.0, 1.0); 5]);
        let states = KernelConfig { selector: SelectorMode::StatesOnly, ..Default::default() };
        let (fa, _) = featurize(&a, &b, &states).unwrap();
        assert_eq!(fa.len(), 10);
        let both = KernelConfig {
            selector: SelectorMode::StatesAndActions,
            max_steps: Some(4),
            ..Default::default()
        };
        let (fa, _) = featurize(&a, &b, &both).unwrap();
        assert_eq!(fa.len(), 16);
        let acts = KernelConfig { selector: SelectorMode::ActionsOnly, ..Default::default() };
        let (fa, _) = featurize(&a, &b, &acts).unwrap();
        assert_eq!(fa.len(), 10);
    }

    #[test]
    fn featurize_rejects_empty() {
        let cfg = KernelConfig::default();
        let a = Trajectory::new();
        let b = nav_traj(&[(0.0, 0.0)]);
        assert!(featurize(&a, &b, &cfg).is_err());
    }

    #[test]
    fn kernel_is_one_at_zero_distance_and_symmetric() {
        let cfg = KernelConfig::default();
        let a = nav_traj(&[(0.3, -0.2), (0.5, 0.1)]);
        let b = nav_traj(&[(1.3, 0.8), (-0.5, 2.1)]);
        assert_eq!(traj_kernel(&a, &a, &cfg).unwrap(), 1.0);
        let kab = traj_kernel(&a, &b, &cfg).unwrap();
        let kba = traj_kernel(&b, &a, &cfg).unwrap();
        assert_eq!(kab, kba);
        assert!(kab > 0.0 && kab < 1.0);
    }

    #[test]
    fn kernel_hand_value_at_unit_exponent() {
        // squared distance 2 h^2 d_norm => exp(-1)
        let cfg = KernelConfig { selector: SelectorMode::StatesOnly, ..Default::default() };
        // one step, 2-D states, d_norm = 2: need ||x - x'||^2 = 4
        let a = nav_traj(&[(0.0, 0.0)]);
        let b = nav_traj(&[(2.0, 0.0)]);
        let k = traj_kernel(&a, &b, &cfg).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn biased_mmd_of_identical_sets_is_zero() {
        let cfg = KernelConfig::default();
        let set = vec![
            nav_traj(&[(0.0, 0.0), (1.0, 1.0)]),
            nav_traj(&[(0.5, -0.5), (2.0, 0.0)]),
        ];
        let v = mmd2(&set, &set, &cfg, MmdEstimator::Biased).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn singleton_biased_mmd_closed_form() {
        let cfg = KernelConfig::default();
        let a = vec![nav_traj(&[(0.0, 0.0)])];
        let b = vec![nav_traj(&[(1.0, 2.0)])];
        let k = traj_kernel(&a[0], &b[0], &cfg).unwrap();
        let v = mmd2(&a, &b, &cfg, MmdEstimator::Biased).unwrap();
        assert!((v - (2.0 - 2.0 * k)).abs() < 1e-12);
    }

    #[test]
    fn mmd_matches_brute_force_pair_sums() {
        let cfg = KernelConfig::default();
        let a = vec![
            nav_traj(&[(0.0, 0.0), (0.5, 0.5)]),
            nav_traj(&[(1.0, 0.0), (1.5, 0.5)]),
            nav_traj(&[(0.0, 1.0), (0.2, 1.5)]),
        ];
        let b = vec![
            nav_traj(&[(3.0, 0.0), (3.5, 0.5)]),
            nav_traj(&[(0.0, 3.0), (0.5, 3.5)]),
            nav_traj(&[(2.0, 2.0), (2.5, 2.5)]),
        ];
        let k = |x: &Trajectory, y: &Trajectory| traj_kernel(x, y, &cfg).unwrap();
        let mut aa = 0.0;
        let mut bb = 0.0;
        let mut ab = 0.0;
        let mut aa_u = 0.0;
        let mut bb_u = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                aa += k(&a[i], &a[j]);
                bb += k(&b[i], &b[j]);
                ab += k(&a[i], &b[j]);
                if i != j {
                    aa_u += k(&a[i], &a[j]);
                    bb_u += k(&b[i], &b[j]);
                }
            }
        }
        let biased = aa / 9.0 - 2.0 * ab / 9.0 + bb / 9.0;
        let unbiased = aa_u / 6.0 - 2.0 * ab / 9.0 + bb_u / 6.0;
        assert!((mmd2(&a, &b, &cfg, MmdEstimator::Biased).unwrap() - biased).abs() < 1e-12);
        assert!((mmd2(&a, &b, &cfg, MmdEstimator::Unbiased).unwrap() - unbiased).abs() < 1e-12);
    }

    #[test]
    fn unbiased_estimator_requires_two_samples() {
        let cfg = KernelConfig::default();
        let a = vec![nav_traj(&[(0.0, 0.0)])];
        let b = vec![nav_traj(&[(1.0, 1.0)]), nav_traj(&[(2.0, 2.0)])];
        assert!(mmd2(&a, &b, &cfg, MmdEstimator::Unbiased).is_err());
        assert!(mmd2(&a, &b, &cfg, MmdEstimator::Biased).is_ok());
    }

    #[test]
    fn d_mmd_minimum_and_argmin() {
        let cfg = KernelConfig::default();
        let p = vec![nav_traj(&[(0.0, 0.0)]), nav_traj(&[(0.1, 0.1)])];
        let far = vec![nav_traj(&[(5.0, 5.0)]), nav_traj(&[(5.1, 5.1)])];
        let near = vec![nav_traj(&[(0.5, 0.5)]), nav_traj(&[(0.4, 0.4)])];
        let q = DiversitySet { entries: vec![far.clone(), near.clone(), p.clone()] };
        let (v, idx) = d_mmd(&p, &q, &cfg).unwrap().unwrap();
        assert_eq!(idx, 2, "the set containing p itself is nearest");
        assert!(v.abs() < 1e-12);

        let q2 = DiversitySet { entries: vec![far.clone(), near.clone()] };
        let (v2, idx2) = d_mmd(&p, &q2, &cfg).unwrap().unwrap();
        let mmd_near = mmd2(&p, &near, &cfg, MmdEstimator::Biased).unwrap();
        let mmd_far = mmd2(&p, &far, &cfg, MmdEstimator::Biased).unwrap();
        assert_eq!(idx2, 1);
        assert!((v2 - mmd_near.min(mmd_far)).abs() < 1e-12);

        // singleton Q
        let q1 = DiversitySet { entries: vec![far.clone()] };
        let (v1, i1) = d_mmd(&p, &q1, &cfg).unwrap().unwrap();
        assert_eq!(i1, 0);
        assert!((v1 - mmd_far).abs() < 1e-12);
    }

    #[test]
    fn empty_diversity_set_means_no_constraint() {
        let cfg = KernelConfig::default();
        let p = vec![nav_traj(&[(0.0, 0.0)])];
        assert!(d_mmd(&p, &DiversitySet::default(), &cfg).unwrap().is_none());
    }

    #[test]
    fn grad_d_mmd_has_parameter_length() {
        use crate::policy::{init_params, PolicySpec};
        let spec = PolicySpec::gaussian(2, vec![4], 2);
        let params = init_params(&spec, 0);
        let p = vec![
            nav_traj(&[(0.0, 0.0), (0.5, 0.0)]),
            nav_traj(&[(0.0, 0.1), (0.4, 0.2)]),
        ];
        let q = DiversitySet { entries: vec![vec![nav_traj(&[(2.0, 2.0), (2.5, 2.0)])]] };
        let g = grad_d_mmd(&spec, &params, &p, &q, &KernelConfig::default()).unwrap();
        assert_eq!(g.len(), spec.param_count());
        assert!(g.iter().all(|x| x.is_finite()));
    }
}
