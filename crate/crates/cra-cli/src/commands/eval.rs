//! Checkpoint evaluation over a task suite, with an optional support-size
//! sweep that emits one report per size.

use crate::commands::reference_for;
use crate::config::resolve_seed;
use crate::data;
use crate::error::CliError;
use crate::outdir::OutDir;
use cra_core::episodes::SampleMode;
use cra_core::metrics::EvalReport;
use cra_core::model::{checkpoint, evaluate, EvalConfig};
use serde::Serialize;
use std::path::PathBuf;

pub struct Args {
    pub checkpoint: PathBuf,
    pub tasks: PathBuf,
    pub out: PathBuf,
    pub reference: Option<PathBuf>,
    pub n_support: usize,
    pub n_query: usize,
    pub mode: SampleMode,
    pub reruns: usize,
    pub draws: usize,
    pub reference_size: Option<usize>,
    pub support_sweep: Option<Vec<usize>>,
    pub seed_flag: Option<u64>,
}

fn summarize(label: &str, report: &EvalReport) {
    println!(
        "{label}: auroc {:.4} +- {:.4}, delta-auc-pr {:.4} +- {:.4} over {} tasks",
        report.auroc.mean,
        report.auroc.std_err,
        report.delta_auc_pr.mean,
        report.delta_auc_pr.std_err,
        report.tasks.len()
    );
}

pub fn run(args: Args) -> Result<(), CliError> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let reference_path = reference_for(ckpt.variant, args.reference.as_deref())?;
    let data = data::load_all(&args.tasks, None, reference_path)?;
    let seed = resolve_seed(args.seed_flag, None)?;
    let eval = EvalConfig {
        n_support: args.n_support,
        n_query: args.n_query,
        mode: args.mode,
        reruns: args.reruns,
        support_draws: args.draws,
        reference_size: args.reference_size,
        seed,
    };

    let mut dir = OutDir::create(&args.out)?;
    #[derive(Serialize)]
    struct Echo<'a> {
        checkpoint: &'a PathBuf,
        tasks: &'a PathBuf,
        reference: Option<&'a PathBuf>,
        variant: &'a str,
        support_sweep: Option<&'a [usize]>,
        eval: &'a EvalConfig,
    }
    dir.write_json(
        "eval_config.json",
        &Echo {
            checkpoint: &args.checkpoint,
            tasks: &args.tasks,
            reference: args.reference.as_ref(),
            variant: ckpt.variant.name(),
            support_sweep: args.support_sweep.as_deref(),
            eval: &eval,
        },
    )?;

    match &args.support_sweep {
        None => {
            let report = evaluate(
                &ckpt.params,
                &ckpt.config,
                ckpt.variant,
                &data.tasks,
                &data.reference,
                &eval,
            )?;
            dir.write("report.csv", report.to_csv())?;
            dir.write("report.json", report.to_json() + "\n")?;
            summarize("eval", &report);
        }
        Some(sizes) => {
            if sizes.is_empty() {
                return Err(CliError::usage("--support-sweep lists no sizes"));
            }
            for &ns in sizes {
                let cfg = EvalConfig { n_support: ns, ..eval.clone() };
                let report = evaluate(
                    &ckpt.params,
                    &ckpt.config,
                    ckpt.variant,
                    &data.tasks,
                    &data.reference,
                    &cfg,
                )?;
                dir.write(&format!("report_ns{ns}.csv"), report.to_csv())?;
                dir.write(&format!("report_ns{ns}.json"), report.to_json() + "\n")?;
                summarize(&format!("n_support={ns}"), &report);
            }
        }
    }
    dir.finish("eval", seed)?;
    Ok(())
}
