//! Trains and evaluates all four ablation variants under shared seeds, then
//! sweeps the reference batch size for the full variant.
//!
//! Rerun r of every variant trains from the same derived seed, so the
//! encoder initializations are identical across variants and differences in
//! the table come from the architecture, not the draw. Evaluation episodes
//! are also shared: the grid is keyed by (seed, task, cell), never by
//! variant.

use crate::config::{resolve_seed, sub_seed, Paths, RunConfig};
use crate::data;
use crate::error::CliError;
use crate::outdir::OutDir;
use cra_core::episodes::{load_tasks, MoleculeRecord, Task};
use cra_core::metrics::EvalReport;
use cra_core::model::{evaluate_models, train, CraParams, EvalConfig, Variant};
use std::path::PathBuf;

pub struct Args {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub reruns: usize,
    pub m_sweep: Vec<usize>,
    pub seed_flag: Option<u64>,
}

struct Suite {
    train: Vec<Task>,
    valid: Vec<Task>,
    test: Vec<Task>,
    reference: Vec<MoleculeRecord>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let run_cfg = RunConfig::load(&args.config)?;
    let seed = resolve_seed(args.seed_flag, run_cfg.seed)?;
    if args.reruns == 0 {
        return Err(CliError::usage("--reruns must be positive"));
    }

    let tasks_path = args.tasks.or_else(|| run_cfg.paths.tasks.clone()).ok_or_else(|| {
        CliError::usage("no training tasks; pass --tasks or set paths.tasks")
    })?;
    let valid_path = args.valid.or_else(|| run_cfg.paths.valid.clone());
    let test_path = args.test.or_else(|| run_cfg.paths.test.clone());
    let reference_path =
        args.reference.or_else(|| run_cfg.paths.reference.clone()).ok_or_else(|| {
            CliError::usage(
                "the ablation roster includes the full variant; \
                 pass --reference or set paths.reference",
            )
        })?;
    let out_path = args.out.or_else(|| run_cfg.paths.out.clone()).ok_or_else(|| {
        CliError::usage("no output directory; pass --out or set paths.out")
    })?;

    // One featurization pass across every split keeps the stats shared.
    let mut train_tasks = load_tasks(&tasks_path)?;
    if train_tasks.is_empty() {
        return Err(CliError::usage(format!("{}: no tasks found", tasks_path.display())));
    }
    let mut valid_tasks = match &valid_path {
        Some(p) => load_tasks(p)?,
        None => Vec::new(),
    };
    let mut test_tasks = match &test_path {
        Some(p) => load_tasks(p)?,
        None => Vec::new(),
    };
    let mut reference = cra_core::episodes::load_reference_pool(&reference_path)?;
    data::featurize_records(
        &mut [&mut train_tasks, &mut valid_tasks, &mut test_tasks],
        &mut reference,
    )?;
    if test_tasks.is_empty() {
        test_tasks = train_tasks.clone();
    }
    let suite = Suite { train: train_tasks, valid: valid_tasks, test: test_tasks, reference };

    let inferred_d = data::feature_dim(&suite.train, &suite.reference);
    let (model_base, train_cfg, eval_base, _) = run_cfg.resolve(seed, inferred_d)?;
    let eval_cfg = EvalConfig { reruns: args.reruns, seed, ..eval_base };

    let mut dir = OutDir::create(&out_path)?;

    // Rerun r shares one derived seed across all four variants.
    let rerun_seeds: Vec<u64> =
        (0..args.reruns).map(|r| sub_seed(seed, "rerun", r as u64)).collect();
    let mut trained: Vec<Vec<CraParams>> = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let mut models = Vec::with_capacity(args.reruns);
        for (r, &rerun_seed) in rerun_seeds.iter().enumerate() {
            let mut cfg = model_base.clone();
            cfg.seed = rerun_seed;
            let result = train(
                &cfg,
                &train_cfg,
                variant,
                &suite.train,
                &suite.valid,
                &suite.reference,
            )?;
            dir.write(
                &format!("curve_{}_r{r}.csv", variant.name()),
                super::train::curve_csv(&result.history),
            )?;
            println!(
                "trained {} rerun {r}: {} episodes, best step {}",
                variant.name(),
                result.episodes_run,
                result.best_step
            );
            models.push(result.params);
        }
        trained.push(models);
    }

    let mut reports: Vec<(Variant, EvalReport)> = Vec::with_capacity(Variant::ALL.len());
    for (variant, models) in Variant::ALL.into_iter().zip(&trained) {
        let refs: Vec<&CraParams> = models.iter().collect();
        let report = evaluate_models(
            &refs,
            &model_base,
            variant,
            &suite.test,
            &suite.reference,
            &eval_cfg,
        )?;
        dir.write(&format!("report_{}.csv", variant.name()), report.to_csv())?;
        dir.write(&format!("report_{}.json", variant.name()), report.to_json() + "\n")?;
        reports.push((variant, report));
    }

    let mut table = String::from("variant,auroc_mean,auroc_se,delta_auc_pr_mean,delta_auc_pr_se\n");
    for (variant, report) in &reports {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            variant.name(),
            report.auroc.mean,
            report.auroc.std_err,
            report.delta_auc_pr.mean,
            report.delta_auc_pr.std_err
        ));
    }
    dir.write("ablation.csv", table)?;
    println!("\nvariant        auroc            delta-auc-pr");
    for (variant, report) in &reports {
        println!(
            "{:<13} {:.4} +- {:.4}  {:.4} +- {:.4}",
            variant.name(),
            report.auroc.mean,
            report.auroc.std_err,
            report.delta_auc_pr.mean,
            report.delta_auc_pr.std_err
        );
    }

    // Reference-size sweep on the full-variant models. Episodes are drawn
    // before the reference batch in each cell's stream, so every size scores
    // identical support and query sets.
    let full_models: Vec<&CraParams> = trained[Variant::ALL.len() - 1].iter().collect();
    let mut sweep = String::from("m,status,delta_auc_pr_mean,delta_auc_pr_se\n");
    for &m in &args.m_sweep {
        if suite.reference.len() < m {
            sweep.push_str(&format!("{m},skipped,,\n"));
            println!("m={m}: skipped (reference pool has {})", suite.reference.len());
            continue;
        }
        let cfg = EvalConfig { reference_size: Some(m), ..eval_cfg.clone() };
        let report = evaluate_models(
            &full_models,
            &model_base,
            Variant::Full,
            &suite.test,
            &suite.reference,
            &cfg,
        )?;
        sweep.push_str(&format!(
            "{m},ok,{},{}\n",
            report.delta_auc_pr.mean, report.delta_auc_pr.std_err
        ));
        println!(
            "m={m}: delta-auc-pr {:.4} +- {:.4}",
            report.delta_auc_pr.mean, report.delta_auc_pr.std_err
        );
    }
    dir.write("msweep.csv", sweep)?;

    let mut echo = RunConfig::resolved_echo(
        run_cfg.preset,
        Variant::Full,
        seed,
        &model_base,
        &train_cfg,
        &eval_cfg,
        Paths {
            tasks: Some(tasks_path),
            valid: valid_path,
            test: test_path,
            reference: Some(reference_path),
            checkpoint: None,
            out: Some(out_path),
        },
    );
    // The roster covers every variant; a single variant key would mislead.
    echo.variant = None;
    dir.write_json("config.json", &echo)?;
    dir.finish("ablate", seed)?;
    Ok(())
}
