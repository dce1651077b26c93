//! Episodic training driven by a run config, with flag overrides.

use crate::config::{resolve_seed, Paths, RunConfig};
use crate::data;
use crate::error::CliError;
use crate::outdir::OutDir;
use cra_core::model::{checkpoint, train, TrainHistory, Variant};
use std::path::PathBuf;

pub struct Args {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub seed_flag: Option<u64>,
}

/// One row per training episode; validation passes land in the third
/// column at the episode count they ran after (0 = untrained baseline).
pub(crate) fn curve_csv(history: &TrainHistory) -> String {
    let mut out = String::from("episode,loss,validation_delta_auc_pr\n");
    let at_step = |step: usize| -> Option<f64> {
        history.validations.iter().find(|v| v.step == step).map(|v| v.delta_auc_pr)
    };
    if let Some(delta) = at_step(0) {
        out.push_str(&format!("0,,{delta}\n"));
    }
    for (i, loss) in history.losses.iter().enumerate() {
        let episode = i + 1;
        match at_step(episode) {
            Some(delta) => out.push_str(&format!("{episode},{loss},{delta}\n")),
            None => out.push_str(&format!("{episode},{loss},\n")),
        }
    }
    out
}

pub fn run(args: Args) -> Result<(), CliError> {
    let run_cfg = RunConfig::load(&args.config)?;
    let seed = resolve_seed(args.seed_flag, run_cfg.seed)?;
    let variant = args.variant.or(run_cfg.variant).unwrap_or(Variant::Full);

    let tasks_path = args.tasks.or_else(|| run_cfg.paths.tasks.clone()).ok_or_else(|| {
        CliError::usage("no training tasks; pass --tasks or set paths.tasks")
    })?;
    let valid_path = args.valid.or_else(|| run_cfg.paths.valid.clone());
    let reference_path = args.reference.or_else(|| run_cfg.paths.reference.clone());
    if variant.uses_reference() && reference_path.is_none() {
        return Err(CliError::usage(
            "the full variant needs an unlabeled reference pool; \
             pass --reference or set paths.reference",
        ));
    }
    let out_path = args.out.or_else(|| run_cfg.paths.out.clone()).ok_or_else(|| {
        CliError::usage("no output directory; pass --out or set paths.out")
    })?;

    let data = data::load_all(&tasks_path, valid_path.as_deref(), reference_path.as_deref())?;
    let inferred_d = data::feature_dim(&data.tasks, &data.reference);
    let (model_cfg, train_cfg, eval_cfg, _) = run_cfg.resolve(seed, inferred_d)?;

    let result =
        train(&model_cfg, &train_cfg, variant, &data.tasks, &data.valid, &data.reference)?;

    let mut dir = OutDir::create(&out_path)?;
    let ckpt_path = dir.root().join("checkpoint.cram");
    checkpoint::save(&ckpt_path, &model_cfg, variant, &result.params)?;
    dir.record("checkpoint.cram");
    dir.write("curve.csv", curve_csv(&result.history))?;
    let echo = RunConfig::resolved_echo(
        run_cfg.preset,
        variant,
        seed,
        &model_cfg,
        &train_cfg,
        &eval_cfg,
        Paths {
            tasks: Some(tasks_path),
            valid: valid_path,
            reference: reference_path,
            test: None,
            checkpoint: Some(ckpt_path.clone()),
            out: Some(out_path),
        },
    );
    dir.write_json("config.json", &echo)?;
    if let Some(stats) = &data.norm_stats {
        dir.write_json("norm_stats.json", stats)?;
    }
    dir.finish("train", seed)?;

    match (result.initial_delta, result.best_delta) {
        (Some(initial), Some(best)) => println!(
            "trained {} for {} episodes; validation delta-auc-pr {:.4} -> {:.4} \
             (best at episode {})",
            variant.name(),
            result.episodes_run,
            initial,
            best,
            result.best_step
        ),
        _ => println!(
            "trained {} for {} episodes (no validation tasks); final loss {:.4}",
            variant.name(),
            result.episodes_run,
            result.history.losses.last().copied().unwrap_or(f64::NAN)
        ),
    }
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
