use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpntk_cli::commands::{self, Ctx};
use lpntk_cli::{CliError, CliResult};

/// Reproducible labelled-kernel experiments over small classifiers.
#[derive(Parser)]
#[command(name = "lpntk", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool cap for kernel computation.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a classifier; writes checkpoint.lpw, losses.csv,
    /// accuracy.csv and dataset.json.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Compute the kernel matrix of the config's dataset at a checkpoint.
    Kernel {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker pool cap for kernel computation.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Checkpoint file to differentiate at.
        #[arg(long)]
        ckpt: PathBuf,
        /// Optional dataset.json to cross-check against the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// pntk, lpntk or lpntk_variant; defaults to the config.
        #[arg(long)]
        kind: Option<String>,
        /// Kernel file to write; defaults to <out_dir>/kernel.lpk.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Farthest-point clustering of a kernel file; writes clusters.json.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Kernel file to cluster.
        #[arg(long)]
        kernel: PathBuf,
        /// Cluster count; defaults to a tenth of the samples.
        #[arg(short = 'M', long)]
        m: Option<usize>,
        /// Verify the kernel was computed from this checkpoint.
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// List samples shadowed by a more similar neighbour.
    Redundant {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
    },
    /// De-redundancy plus random thinning of the head cluster.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
        /// Share of the head cluster to drop; defaults to the config.
        #[arg(long)]
        frac: Option<f64>,
        #[arg(short = 'M', long)]
        m: Option<usize>,
    },
    /// Learning-difficulty correlations between full and tiled training.
    Difficulty {
        #[command(flatten)]
        common: Common,
    },
    /// Detect forgetting events and score the one-step predictor.
    Forget {
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo check of last-layer kernel concentration.
    Gap {
        #[command(flatten)]
        common: Common,
        /// Comma-separated last-hidden-layer widths.
        #[arg(long, default_value = "64,256,1024")]
        widths: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Restrict the kernel to the last layer's parameters.
        #[arg(long, default_value_t = false)]
        frozen: bool,
    },
    /// Train the gridworld agent; writes returns.csv and rl.json.
    Rl {
        #[command(flatten)]
        common: Common,
        /// eps_greedy or lpntk_max; defaults to the config.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Summarize the artifacts present in the output directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn ctx_of(common: &Common) -> CliResult<Ctx> {
    Ctx::prepare(
        &common.config,
        common.seed,
        common.threads,
        common.out.as_deref(),
    )
}

fn parse_widths(text: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let trimmed = part.trim();
        out.push(trimmed.parse::<usize>().map_err(|_| {
            CliError::config(format!("--widths needs integers, got {trimmed:?}"))
        })?);
    }
    Ok(out)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Train { common } => commands::cmd_train(&ctx_of(&common)?),
        Cmd::Kernel {
            config,
            seed,
            threads,
            ckpt,
            data,
            kind,
            out,
        } => {
            let ctx = Ctx::prepare(&config, seed, threads, None)?;
            commands::cmd_kernel(
                &ctx,
                &ckpt,
                data.as_deref(),
                kind.as_deref(),
                out.as_deref(),
            )
        }
        Cmd::Cluster {
            common,
            kernel,
            m,
            ckpt,
        } => commands::cmd_cluster(&ctx_of(&common)?, &kernel, m, ckpt.as_deref()),
        Cmd::Redundant { common, kernel } => {
            commands::cmd_redundant(&ctx_of(&common)?, &kernel)
        }
        Cmd::Prune {
            common,
            kernel,
            frac,
            m,
        } => commands::cmd_prune(&ctx_of(&common)?, &kernel, frac, m),
        Cmd::Difficulty { common } => commands::cmd_difficulty(&ctx_of(&common)?),
        Cmd::Forget { common } => commands::cmd_forget(&ctx_of(&common)?),
        Cmd::Gap {
            common,
            widths,
            trials,
            delta,
            frozen,
        } => {
            let widths = parse_widths(&widths)?;
            commands::cmd_gap(&ctx_of(&common)?, &widths, trials, delta, frozen)
        }
        Cmd::Rl { common, strategy } => {
            commands::cmd_rl(&ctx_of(&common)?, strategy.as_deref())
        }
        Cmd::Report { common } => commands::cmd_report(&ctx_of(&common)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lpntk: {e}");
            e.exit_code()
        }
    }
}
