use clap::{Args, Parser, Subcommand};
use dipg_cli::commands;
use dipg_cli::config::ExperimentConfig;
use dipg_cli::report::SimilarityAgg;
use dipg_cli::CliResult;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dipg",
    version,
    about = "Train, evaluate, and compare collections of mutually diverse policies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    /// Stored policy files.
    #[arg(long, num_args = 1.., required = true)]
    policies: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a single policy (no diversity term).
    Train(CommonArgs),
    /// Train N policies in sequence, each diverse from the previous ones.
    Dipg(CommonArgs),
    /// Evaluate stored policies in the configured environment.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        policies: PolicyArgs,
    },
    /// Quality and similarity comparison of stored policies.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        policies: PolicyArgs,
        /// Aggregation of pairwise kernel values into one similarity score.
        #[arg(long, value_enum, default_value = "mean")]
        similarity: SimilarityFlag,
    },
    /// Offline pipeline: dataset generation, batch training, and CWPDIS.
    Batch {
        #[command(subcommand)]
        sub: BatchCmd,
    },
}

#[derive(Subcommand)]
enum BatchCmd {
    /// Roll out a behavior policy (with exploration mixing) into a dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Behavior policy file.
        #[arg(long, num_args = 1.., required = true)]
        policies: Vec<PathBuf>,
    },
    /// Maximize the batch likelihood surrogate over a dataset file.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV (defaults to <out>/dataset.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Known policy files for the batch diversity term.
        #[arg(long, num_args = 0..)]
        policies: Vec<PathBuf>,
    },
    /// CWPDIS off-policy evaluation of stored policies against a dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        policies: PolicyArgs,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SimilarityFlag {
    Mean,
    Min,
}

impl From<SimilarityFlag> for SimilarityAgg {
    fn from(f: SimilarityFlag) -> Self {
        match f {
            SimilarityFlag::Mean => SimilarityAgg::Mean,
            SimilarityFlag::Min => SimilarityAgg::Min,
        }
    }
}

fn resolve(common: &CommonArgs) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Train(common) => {
            let (cfg, out) = resolve(&common)?;
            commands::cmd_train(&cfg, &out)
        }
        Cmd::Dipg(common) => {
            let (cfg, out) = resolve(&common)?;
            commands::cmd_dipg(&cfg, &out)
        }
        Cmd::Eval { common, policies } => {
            let (cfg, out) = resolve(&common)?;
            commands::cmd_eval(&cfg, &policies.policies, &out)
        }
        Cmd::Compare { common, policies, similarity } => {
            let (cfg, out) = resolve(&common)?;
            commands::cmd_compare(&cfg, &policies.policies, similarity.into(), &out)
        }
        Cmd::Batch { sub } => match sub {
            BatchCmd::Generate { common, policies } => {
                let (cfg, out) = resolve(&common)?;
                commands::cmd_batch_generate(&cfg, &policies[0], &out)
            }
            BatchCmd::Train { common, data, policies } => {
                let (cfg, out) = resolve(&common)?;
                let data = data.unwrap_or_else(|| out.join("dataset.csv"));
                commands::cmd_batch_train(&cfg, &data, &policies, &out)
            }
            BatchCmd::Eval { common, data, policies } => {
                let (cfg, out) = resolve(&common)?;
                let data = data.unwrap_or_else(|| out.join("dataset.csv"));
                commands::cmd_batch_eval(&cfg, &data, &policies.policies, &out)
            }
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
