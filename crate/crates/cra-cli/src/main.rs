//! `cra`: train, evaluate, and inspect few-shot molecular property
//! predictors built on contextual representation anchors.

mod commands;
mod config;
mod data;
mod error;
mod outdir;

use clap::{Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cra",
    version,
    about = "Few-shot molecular property prediction with contextual representation anchors"
)]
struct Cli {
    /// Global sampling seed; overrides config files and CRA_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fingerprint and descriptor features for a SMILES file.
    Featurize {
        /// One molecule per line: "SMILES" or "id SMILES".
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Circular fingerprint radius.
        #[arg(long, default_value_t = cra_core::featurize::DEFAULT_RADIUS)]
        radius: usize,
        /// Fingerprint width in bits.
        #[arg(long, default_value_t = cra_core::featurize::DEFAULT_NBITS)]
        nbits: usize,
        /// Highest tolerated fraction of unparseable lines.
        #[arg(long, default_value_t = 0.01)]
        max_fail_frac: f64,
    },
    /// Train one model variant from a run config.
    Train {
        /// Run config JSON; see the README for the schema.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Labeled training tasks (JSON lines); overrides paths.tasks.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Validation tasks for early stopping; overrides paths.valid.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Unlabeled reference pool; overrides paths.reference.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Ablation variant; overrides the config key.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Score a checkpoint over a task suite on the rerun x draw grid.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Unlabeled reference pool (required by the full variant).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        n_support: usize,
        #[arg(long, default_value_t = 16)]
        n_query: usize,
        #[arg(long, default_value = "stratified")]
        mode: String,
        #[arg(long, default_value_t = 5)]
        reruns: usize,
        #[arg(long, default_value_t = 10)]
        draws: usize,
        /// Reference batch size; defaults to the checkpoint's value.
        #[arg(long)]
        reference_size: Option<usize>,
        /// Comma-separated support sizes; one report per size.
        #[arg(long)]
        support_sweep: Option<String>,
    },
    /// Train and evaluate all four ablation variants with shared seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Evaluation tasks; defaults to the training tasks.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Training reruns per variant (distinct derived seeds).
        #[arg(long, default_value_t = 3)]
        reruns: usize,
        /// Comma-separated reference sizes for the full-variant sweep.
        #[arg(long, default_value = "32,128,512,2048")]
        m_sweep: String,
    },
    /// Generate the synthetic selection-bias benchmark.
    Synth {
        /// Generator config JSON; defaults cover the benchmark suite.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export PCA-projected embeddings and anchors for one episode.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Task to sample from; defaults to the first in the file.
        #[arg(long)]
        task_id: Option<String>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        n_support: usize,
        #[arg(long, default_value_t = 16)]
        n_query: usize,
        #[arg(long, default_value = "stratified")]
        mode: String,
    },
    /// Export support-pair attention weights beside Tanimoto similarities.
    Attn {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Task to sample from; defaults to the first in the file.
        #[arg(long)]
        task_id: Option<String>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        n_support: usize,
        #[arg(long, default_value_t = 4)]
        n_query: usize,
        #[arg(long, default_value = "stratified")]
        mode: String,
    },
}

fn parse_mode(text: &str) -> Result<cra_core::episodes::SampleMode, CliError> {
    match text {
        "balanced" => Ok(cra_core::episodes::SampleMode::Balanced),
        "stratified" => Ok(cra_core::episodes::SampleMode::Stratified),
        other => Err(CliError::usage(format!(
            "unknown sampling mode {other:?}; expected balanced or stratified"
        ))),
    }
}

fn parse_size_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::usage(format!("{flag}: {s:?} is not a size")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::usage("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::usage(format!("--workers: {e}")))?;
    }
    match cli.command {
        Command::Featurize { input, out, radius, nbits, max_fail_frac } => {
            commands::featurize::run(&input, &out, radius, nbits, max_fail_frac)
        }
        Command::Train { config, out, tasks, valid, reference, variant } => {
            let variant = match &variant {
                Some(text) => Some(config::parse_variant(text)?),
                None => None,
            };
            commands::train::run(commands::train::Args {
                config,
                out,
                tasks,
                valid,
                reference,
                variant,
                seed_flag: cli.seed,
            })
        }
        Command::Eval {
            checkpoint,
            tasks,
            out,
            reference,
            n_support,
            n_query,
            mode,
            reruns,
            draws,
            reference_size,
            support_sweep,
        } => {
            let sweep = match &support_sweep {
                Some(text) => Some(parse_size_list(text, "--support-sweep")?),
                None => None,
            };
            commands::eval::run(commands::eval::Args {
                checkpoint,
                tasks,
                out,
                reference,
                n_support,
                n_query,
                mode: parse_mode(&mode)?,
                reruns,
                draws,
                reference_size,
                support_sweep: sweep,
                seed_flag: cli.seed,
            })
        }
        Command::Ablate { config, out, tasks, valid, reference, test, reruns, m_sweep } => {
            commands::ablate::run(commands::ablate::Args {
                config,
                out,
                tasks,
                valid,
                reference,
                test,
                reruns,
                m_sweep: parse_size_list(&m_sweep, "--m-sweep")?,
                seed_flag: cli.seed,
            })
        }
        Command::Synth { config, out } => commands::synth::run(config.as_deref(), &out, cli.seed),
        Command::Embed {
            checkpoint,
            tasks,
            out,
            task_id,
            reference,
            n_support,
            n_query,
            mode,
        } => commands::embed::run(commands::embed::Args {
            checkpoint,
            tasks,
            out,
            task_id,
            reference,
            n_support,
            n_query,
            mode: parse_mode(&mode)?,
            seed_flag: cli.seed,
        }),
        Command::Attn {
            checkpoint,
            tasks,
            out,
            task_id,
            reference,
            n_support,
            n_query,
            mode,
        } => commands::attn::run(commands::attn::Args {
            checkpoint,
            tasks,
            out,
            task_id,
            reference,
            n_support,
            n_query,
            mode: parse_mode(&mode)?,
            seed_flag: cli.seed,
        }),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
