//! The subcommand implementations. Every command is a pure function of the
//! resolved config plus its file arguments, and writes deterministic artifact
//! bytes for a fixed seed.

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{
    read_policy, read_trajectories_csv, write_metrics_jsonl, write_policy, write_trajectories_csv,
    ActionLayout, PolicyFile,
};
use crate::report::{comparison_report, ComparisonReport, SimilarityAgg};
use dipg_core::batch::{batch_train, cwpdis, BatchDataset};
use dipg_core::env::{make_env, ActionSpace, Environment};
use dipg_core::pg::{dipg, evaluate, train_diverse_policy, PolicyCollection};
use dipg_core::policy::{log_prob, Head, PolicySpec};
use dipg_core::types::{Action, Step, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

// Stream constants for deriving independent seeds from the run seed.
const STREAM_EVAL: u64 = 0x4556_0000;
const STREAM_GENERATE: u64 = 0x4745;

/// splitmix64 of (base, stream): cheap independent seed derivation.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(stream)
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn ensure_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))
}

fn check_compatible(env: &Environment, spec: &PolicySpec) -> CliResult<()> {
    let ok = spec.input_dim == env.state_dim()
        && match (env.action_space(), &spec.head) {
            (ActionSpace::Discrete(n), Head::Categorical { n: m }) => n == *m,
            (ActionSpace::Continuous { dim, .. }, Head::Gaussian { dim: m }) => dim == *m,
            _ => false,
        };
    if ok {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "policy spec {spec:?} does not match the {:?} environment interface",
            env.kind
        )))
    }
}

fn csv_layout(env: &Environment) -> ActionLayout {
    match env.action_space() {
        ActionSpace::Discrete(_) => ActionLayout::Discrete,
        ActionSpace::Continuous { dim, .. } => ActionLayout::Continuous { dim },
    }
}

/// Train a single policy without a diversity term.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let spec = env.default_policy_spec(cfg.hidden_sizes.clone());
    let (params, metrics) = train_diverse_policy(
        &env,
        &spec,
        &PolicyCollection::default(),
        &cfg.train,
        &cfg.kernel,
        0.0,
        cfg.train.seed,
    )?;
    write_policy(&out.join("policy.json"), &PolicyFile { spec: spec.clone(), params: params.clone() })?;
    write_metrics_jsonl(&out.join("metrics.jsonl"), &metrics)?;
    let (mean, trajs) = evaluate(
        &env,
        &spec,
        &params,
        cfg.eval_episodes,
        derive_seed(cfg.train.seed, STREAM_EVAL),
    )?;
    write_trajectories_csv(&out.join("eval_trajectories.csv"), &trajs)?;
    println!("trained 1 policy; eval mean return {mean:.3} over {} episodes", cfg.eval_episodes);
    Ok(())
}

fn eval_collection(
    env: &Environment,
    collection: &PolicyCollection,
    episodes: usize,
    seed: u64,
) -> CliResult<Vec<Vec<Trajectory>>> {
    let mut sets = Vec::with_capacity(collection.policies.len());
    for (i, p) in collection.policies.iter().enumerate() {
        let (_, trajs) = evaluate(
            env,
            &p.spec,
            &p.params,
            episodes,
            derive_seed(seed, STREAM_EVAL + i as u64),
        )?;
        sets.push(trajs);
    }
    Ok(sets)
}

fn write_report(out: &Path, report: &ComparisonReport) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    let path = out.join("report.json");
    std::fs::write(&path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_report(report: &ComparisonReport) {
    for (i, (m, s)) in report.mean_returns.iter().zip(report.std_returns.iter()).enumerate() {
        match report.goals_per_policy.as_ref().map(|g| &g[i]) {
            Some(goals) => {
                println!("policy {i}: return {m:.3} +- {s:.3}, goals reached {goals:?}")
            }
            None => println!("policy {i}: return {m:.3} +- {s:.3}"),
        }
    }
    for (i, row) in report.similarity.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("similarity[{i}]: [{}]", cells.join(", "));
    }
    if let Some(d) = report.distinct_goals {
        println!("distinct goals reached: {d}");
    }
}

/// The iterative diverse-collection trainer.
pub fn cmd_dipg(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let spec = env.default_policy_spec(cfg.hidden_sizes.clone());
    let collection = dipg(&env, &spec, cfg.n_policies, &cfg.train, &cfg.kernel, &cfg.alphas)?;
    for (i, p) in collection.policies.iter().enumerate() {
        write_policy(
            &out.join(format!("policy_{i}.json")),
            &PolicyFile { spec: p.spec.clone(), params: p.params.clone() },
        )?;
        write_metrics_jsonl(&out.join(format!("metrics_{i}.jsonl")), &p.metrics)?;
        write_trajectories_csv(&out.join(format!("trajectories_{i}.csv")), &p.trajectories)?;
    }
    let sets = eval_collection(&env, &collection, cfg.eval_episodes, cfg.train.seed)?;
    let report = comparison_report(&env, &sets, &cfg.kernel, SimilarityAgg::Mean)?;
    write_report(out, &report)?;
    print_report(&report);
    Ok(())
}

fn load_policies(env: &Environment, paths: &[std::path::PathBuf]) -> CliResult<Vec<PolicyFile>> {
    if paths.is_empty() {
        return Err(CliError::config("at least one --policies file is required"));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let policy = read_policy(p)?;
        check_compatible(env, &policy.spec)?;
        out.push(policy);
    }
    Ok(out)
}

/// Evaluate stored policies in the configured environment.
pub fn cmd_eval(cfg: &ExperimentConfig, policies: &[std::path::PathBuf], out: &Path) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    for (i, policy) in load_policies(&env, policies)?.iter().enumerate() {
        let (mean, trajs) = evaluate(
            &env,
            &policy.spec,
            &policy.params,
            cfg.eval_episodes,
            derive_seed(cfg.train.seed, STREAM_EVAL + i as u64),
        )?;
        write_trajectories_csv(&out.join(format!("eval_{i}.csv")), &trajs)?;
        println!("policy {i} ({}): mean return {mean:.3}", policies[i].display());
    }
    Ok(())
}

/// Quality / similarity comparison of stored policies.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    policies: &[std::path::PathBuf],
    agg: SimilarityAgg,
    out: &Path,
) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let loaded = load_policies(&env, policies)?;
    let mut sets = Vec::with_capacity(loaded.len());
    for (i, policy) in loaded.iter().enumerate() {
        let (_, trajs) = evaluate(
            &env,
            &policy.spec,
            &policy.params,
            cfg.eval_episodes,
            derive_seed(cfg.train.seed, STREAM_EVAL + i as u64),
        )?;
        sets.push(trajs);
    }
    let report = comparison_report(&env, &sets, &cfg.kernel, agg)?;
    write_report(out, &report)?;
    print_report(&report);
    Ok(())
}

/// One episode under the epsilon-mixed behavior policy, recording the
/// mixture probability of each chosen action.
fn mixture_rollout<R: Rng>(
    env: &Environment,
    spec: &PolicySpec,
    params: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> CliResult<Trajectory> {
    let n = match spec.head {
        Head::Categorical { n } => n,
        Head::Gaussian { .. } => {
            return Err(CliError::runtime(
                "batch generation needs a discrete-action behavior policy",
            ))
        }
    };
    let mut traj = Trajectory::new();
    let mut state = env.reset(rng);
    for _ in 0..env.horizon {
        let mut probs = Vec::with_capacity(n);
        for a in 0..n {
            let p = log_prob(spec, params, &state, &Action::Discrete(a))?.exp();
            probs.push((1.0 - epsilon) * p + epsilon / n as f64);
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = n - 1;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = a;
                break;
            }
        }
        let action = Action::Discrete(chosen);
        let (next, reward, done) = env.step(&state, &action, rng)?;
        traj.steps.push(Step {
            state,
            action,
            reward,
            behavior_prob: Some(probs[chosen]),
        });
        state = next;
        if done {
            traj.terminated = true;
            break;
        }
    }
    Ok(traj)
}

/// Generate an offline dataset from a behavior policy file.
pub fn cmd_batch_generate(
    cfg: &ExperimentConfig,
    behavior: &Path,
    out: &Path,
) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let policy = read_policy(behavior)?;
    check_compatible(&env, &policy.spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.train.seed, STREAM_GENERATE));
    let mut trajs = Vec::with_capacity(cfg.batch.episodes);
    for _ in 0..cfg.batch.episodes {
        trajs.push(mixture_rollout(
            &env,
            &policy.spec,
            &policy.params,
            cfg.batch.exploration,
            &mut rng,
        )?);
    }
    let path = out.join("dataset.csv");
    write_trajectories_csv(&path, &trajs)?;
    let steps: usize = trajs.iter().map(|t| t.len()).sum();
    println!(
        "wrote {} trajectories ({steps} steps) to {}",
        trajs.len(),
        path.display()
    );
    Ok(())
}

fn load_dataset(env: &Environment, data: &Path) -> CliResult<BatchDataset> {
    let trajs = read_trajectories_csv(data, csv_layout(env))?;
    BatchDataset::new(trajs, env.gamma).map_err(|e| CliError::runtime(format!("{}: {e}", data.display())))
}

#[derive(Serialize)]
struct BatchTrainSummary {
    simulated_return: f64,
    cwpdis_estimate: f64,
    min_effective_sample_size: f64,
}

/// Train a policy offline against a dataset file, then report both its
/// simulated return and its CWPDIS estimate on the dataset.
pub fn cmd_batch_train(
    cfg: &ExperimentConfig,
    data: &Path,
    known: &[std::path::PathBuf],
    out: &Path,
) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let spec = env.default_policy_spec(cfg.hidden_sizes.clone());
    let dataset = load_dataset(&env, data)?;
    let known_params: Vec<Vec<f64>> = load_known(&env, &spec, known)?;
    let params = batch_train(
        &spec,
        &dataset,
        &known_params,
        &cfg.batch.train,
        &cfg.kernel,
        cfg.batch.alpha,
    )?;
    write_policy(&out.join("policy.json"), &PolicyFile { spec: spec.clone(), params: params.clone() })?;
    let (mean, _) = evaluate(
        &env,
        &spec,
        &params,
        cfg.eval_episodes,
        derive_seed(cfg.batch.train.seed, STREAM_EVAL),
    )?;
    let est = cwpdis(&spec, &params, &dataset, env.gamma)?;
    let min_ess = est
        .effective_sample_sizes
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let summary = BatchTrainSummary {
        simulated_return: mean,
        cwpdis_estimate: est.value,
        min_effective_sample_size: min_ess,
    };
    let mut text =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(out.join("batch_summary.json"), text)?;
    println!(
        "batch-trained policy: simulated return {mean:.3}, cwpdis {:.3} (min ESS {min_ess:.1})",
        est.value
    );
    Ok(())
}

fn load_known(
    env: &Environment,
    spec: &PolicySpec,
    paths: &[std::path::PathBuf],
) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let policy = read_policy(p)?;
        check_compatible(env, &policy.spec)?;
        if policy.spec != *spec {
            return Err(CliError::runtime(format!(
                "{}: known policies must share the configured architecture",
                p.display()
            )));
        }
        out.push(policy.params);
    }
    Ok(out)
}

/// CWPDIS off-policy evaluation of stored policies against a dataset file.
pub fn cmd_batch_eval(
    cfg: &ExperimentConfig,
    data: &Path,
    policies: &[std::path::PathBuf],
    out: &Path,
) -> CliResult<()> {
    ensure_out(out)?;
    let env = make_env(&cfg.env)?;
    let dataset = load_dataset(&env, data)?;
    let loaded = load_policies(&env, policies)?;
    let mut lines = String::new();
    for (i, policy) in loaded.iter().enumerate() {
        let est = cwpdis(&policy.spec, &policy.params, &dataset, env.gamma)?;
        let min_ess = est
            .effective_sample_sizes
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let mean_ess = est.effective_sample_sizes.iter().sum::<f64>()
            / est.effective_sample_sizes.len().max(1) as f64;
        let record = serde_json::json!({
            "policy": policies[i].display().to_string(),
            "cwpdis": est.value,
            "min_ess": min_ess,
            "mean_ess": mean_ess,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
        println!(
            "policy {i} ({}): cwpdis {:.3}, ESS min {min_ess:.1} mean {mean_ess:.1}",
            policies[i].display(),
            est.value
        );
    }
    std::fs::write(out.join("ope.jsonl"), lines)?;
    Ok(())
}
