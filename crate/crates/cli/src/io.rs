//! Artifact formats: trajectory CSV, policy JSON, and metrics JSON-lines.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! parse(serialize(t)) reproduces every value bit-exactly.

use crate::error::{CliError, CliResult};
use dipg_core::pg::UpdateMetrics;
use dipg_core::policy::PolicySpec;
use dipg_core::types::{Action, Step, Trajectory};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// How action columns are encoded in a trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionLayout {
    /// One integer column `a0`.
    Discrete,
    /// `dim` float columns `a0..a{dim-1}`.
    Continuous { dim: usize },
}

impl ActionLayout {
    pub fn of(action: &Action) -> ActionLayout {
        match action {
            Action::Discrete(_) => ActionLayout::Discrete,
            Action::Continuous(v) => ActionLayout::Continuous { dim: v.len() },
        }
    }

    pub fn for_spec(spec: &PolicySpec) -> ActionLayout {
        match spec.head {
            dipg_core::policy::Head::Categorical { .. } => ActionLayout::Discrete,
            dipg_core::policy::Head::Gaussian { dim } => ActionLayout::Continuous { dim },
        }
    }

    fn columns(&self) -> usize {
        match self {
            ActionLayout::Discrete => 1,
            ActionLayout::Continuous { dim } => *dim,
        }
    }
}

/// Serialize trajectories to the step-per-row CSV layout
/// `traj_id,t,s0..s{d-1},a0..a{k-1},reward,behavior_prob`.
pub fn trajectories_to_csv(trajs: &[Trajectory]) -> CliResult<String> {
    let first = trajs
        .iter()
        .flat_map(|t| t.steps.first())
        .next()
        .ok_or_else(|| CliError::runtime("cannot serialize an empty trajectory set"))?;
    let d = first.state.len();
    let layout = ActionLayout::of(&first.action);

    let mut out = String::new();
    out.push_str("traj_id,t");
    for i in 0..d {
        let _ = write!(out, ",s{i}");
    }
    for i in 0..layout.columns() {
        let _ = write!(out, ",a{i}");
    }
    out.push_str(",reward,behavior_prob\n");

    for (id, traj) in trajs.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            if step.state.len() != d || ActionLayout::of(&step.action) != layout {
                return Err(CliError::runtime(format!(
                    "trajectory {id} step {t}: inconsistent state/action dimensions"
                )));
            }
            let _ = write!(out, "{id},{t}");
            for x in &step.state {
                let _ = write!(out, ",{x}");
            }
            match &step.action {
                Action::Discrete(a) => {
                    let _ = write!(out, ",{a}");
                }
                Action::Continuous(v) => {
                    for x in v {
                        let _ = write!(out, ",{x}");
                    }
                }
            }
            let _ = write!(out, ",{}", step.reward);
            match step.behavior_prob {
                Some(p) => {
                    let _ = writeln!(out, ",{p}");
                }
                None => out.push_str(",\n"),
            }
        }
    }
    Ok(out)
}

pub fn write_trajectories_csv(path: &Path, trajs: &[Trajectory]) -> CliResult<()> {
    std::fs::write(path, trajectories_to_csv(trajs)?)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn parse_header(header: &str) -> CliResult<(usize, usize)> {
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 5 || cols[0] != "traj_id" || cols[1] != "t" {
        return Err(CliError::runtime(
            "line 1: header must start with traj_id,t and end with reward,behavior_prob",
        ));
    }
    let d = cols[2..].iter().take_while(|c| c.starts_with('s')).count();
    let k = cols[2 + d..].iter().take_while(|c| c.starts_with('a')).count();
    let expected = 2 + d + k + 2;
    if d == 0
        || k == 0
        || cols.len() != expected
        || cols[expected - 2] != "reward"
        || cols[expected - 1] != "behavior_prob"
    {
        return Err(CliError::runtime("line 1: malformed trajectory CSV header"));
    }
    for (i, c) in cols[2..2 + d].iter().enumerate() {
        if **c != format!("s{i}") {
            return Err(CliError::runtime(format!("line 1: expected column s{i}, found {c}")));
        }
    }
    for (i, c) in cols[2 + d..2 + d + k].iter().enumerate() {
        if **c != format!("a{i}") {
            return Err(CliError::runtime(format!("line 1: expected column a{i}, found {c}")));
        }
    }
    Ok((d, k))
}

/// Parse the CSV layout back into trajectories. The caller states whether
/// the action columns hold a discrete index or continuous components, since
/// a single numeric column is ambiguous on its own.
pub fn trajectories_from_csv(text: &str, layout: ActionLayout) -> CliResult<Vec<Trajectory>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::runtime("empty trajectory file"))?;
    let (d, k) = parse_header(header)?;
    if layout.columns() != k {
        return Err(CliError::runtime(format!(
            "header has {k} action columns but the expected layout needs {}",
            layout.columns()
        )));
    }

    let mut trajs: Vec<Trajectory> = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based line number
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + d + k + 2 {
            return Err(CliError::runtime(format!(
                "line {row}: expected {} fields, found {}",
                2 + d + k + 2,
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> CliResult<f64> {
            s.parse::<f64>()
                .map_err(|_| CliError::runtime(format!("line {row}: invalid {what} `{s}`")))
        };
        let traj_id: usize = fields[0]
            .parse()
            .map_err(|_| CliError::runtime(format!("line {row}: invalid traj_id `{}`", fields[0])))?;
        let t: usize = fields[1]
            .parse()
            .map_err(|_| CliError::runtime(format!("line {row}: invalid t `{}`", fields[1])))?;
        if traj_id == trajs.len() && t == 0 {
            trajs.push(Trajectory::new());
        }
        if traj_id + 1 != trajs.len() || t != trajs[traj_id].len() {
            return Err(CliError::runtime(format!(
                "line {row}: rows must be grouped by traj_id with consecutive t from 0"
            )));
        }
        let mut state = Vec::with_capacity(d);
        for (i, f) in fields[2..2 + d].iter().enumerate() {
            state.push(num(f, &format!("s{i}"))?);
        }
        let action = match layout {
            ActionLayout::Discrete => Action::Discrete(fields[2 + d].parse().map_err(|_| {
                CliError::runtime(format!("line {row}: invalid action index `{}`", fields[2 + d]))
            })?),
            ActionLayout::Continuous { dim } => {
                let mut v = Vec::with_capacity(dim);
                for (i, f) in fields[2 + d..2 + d + k].iter().enumerate() {
                    v.push(num(f, &format!("a{i}"))?);
                }
                Action::Continuous(v)
            }
        };
        let reward = num(fields[2 + d + k], "reward")?;
        let bp = fields[2 + d + k + 1];
        let behavior_prob = if bp.is_empty() {
            None
        } else {
            Some(num(bp, "behavior_prob")?)
        };
        trajs[traj_id].steps.push(Step { state, action, reward, behavior_prob });
    }
    if trajs.is_empty() {
        return Err(CliError::runtime("trajectory file contains no rows"));
    }
    Ok(trajs)
}

pub fn read_trajectories_csv(path: &Path, layout: ActionLayout) -> CliResult<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    trajectories_from_csv(&text, layout)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// On-disk policy: architecture descriptor plus the flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub spec: PolicySpec,
    pub params: Vec<f64>,
}

pub fn write_policy(path: &Path, policy: &PolicyFile) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(policy)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_policy(path: &Path) -> CliResult<PolicyFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let policy: PolicyFile = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    policy
        .spec
        .validate()
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    if policy.params.len() != policy.spec.param_count() {
        return Err(CliError::runtime(format!(
            "{}: expected {} parameters, found {}",
            path.display(),
            policy.spec.param_count(),
            policy.params.len()
        )));
    }
    Ok(policy)
}

/// One JSON object per update, in training order.
pub fn write_metrics_jsonl(path: &Path, metrics: &[UpdateMetrics]) -> CliResult<()> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).map_err(|e| CliError::runtime(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
