//! Synthetic selection-bias benchmark generator: train/valid/test task
//! files plus an unlabeled reference pool, in the JSON-lines schema the
//! loaders read back.

use crate::config::resolve_seed;
use crate::error::{io_usage, CliError};
use crate::outdir::OutDir;
use cra_core::episodes::{synth_tasks, MoleculeRecord, PoolTag, SynthConfig, Task};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Partial generator config; unset knobs fall back to the benchmark
/// defaults. The resolved whole is echoed as config.json.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SynthPatch {
    d: Option<usize>,
    tasks_train: Option<usize>,
    tasks_valid: Option<usize>,
    tasks_test: Option<usize>,
    support_pool_per_task: Option<usize>,
    query_pool_per_task: Option<usize>,
    separation_s: Option<f64>,
    bias_b: Option<f64>,
    prevalence_rho: Option<f64>,
    reference_pool_size: Option<usize>,
    seed: Option<u64>,
}

impl SynthPatch {
    fn resolve(&self, seed: u64) -> SynthConfig {
        let base = SynthConfig::default();
        SynthConfig {
            d: self.d.unwrap_or(base.d),
            tasks_train: self.tasks_train.unwrap_or(base.tasks_train),
            tasks_valid: self.tasks_valid.unwrap_or(base.tasks_valid),
            tasks_test: self.tasks_test.unwrap_or(base.tasks_test),
            support_pool_per_task: self
                .support_pool_per_task
                .unwrap_or(base.support_pool_per_task),
            query_pool_per_task: self.query_pool_per_task.unwrap_or(base.query_pool_per_task),
            separation_s: self.separation_s.unwrap_or(base.separation_s),
            bias_b: self.bias_b.unwrap_or(base.bias_b),
            prevalence_rho: self.prevalence_rho.unwrap_or(base.prevalence_rho),
            reference_pool_size: self.reference_pool_size.unwrap_or(base.reference_pool_size),
            seed,
        }
    }
}

#[derive(Serialize)]
struct TaskLine<'a> {
    task_id: &'a str,
    id: &'a str,
    features: &'a [f64],
    label: i8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pool: Option<PoolTag>,
}

#[derive(Serialize)]
struct PoolLine<'a> {
    id: &'a str,
    features: &'a [f64],
}

fn tasks_jsonl(tasks: &[Task]) -> Result<String, CliError> {
    let mut out = String::new();
    for task in tasks {
        for r in &task.records {
            let line = TaskLine {
                task_id: &task.task_id,
                id: &r.id,
                features: r.features.as_deref().expect("synthetic records carry features"),
                label: r.label.expect("task records are labeled"),
                pool: r.pool,
            };
            out.push_str(
                &serde_json::to_string(&line)
                    .map_err(|e| CliError::usage(format!("serializing tasks: {e}")))?,
            );
            out.push('\n');
        }
    }
    Ok(out)
}

fn pool_jsonl(pool: &[MoleculeRecord]) -> Result<String, CliError> {
    let mut out = String::new();
    for r in pool {
        let line = PoolLine {
            id: &r.id,
            features: r.features.as_deref().expect("synthetic records carry features"),
        };
        out.push_str(
            &serde_json::to_string(&line)
                .map_err(|e| CliError::usage(format!("serializing pool: {e}")))?,
        );
        out.push('\n');
    }
    Ok(out)
}

pub fn run(config: Option<&Path>, out: &Path, seed_flag: Option<u64>) -> Result<(), CliError> {
    let patch: SynthPatch = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_usage(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => SynthPatch::default(),
    };
    let seed = resolve_seed(seed_flag, patch.seed)?;
    let cfg = patch.resolve(seed);
    let output = synth_tasks(&cfg)?;

    let mut dir = OutDir::create(out)?;
    dir.write("train.jsonl", tasks_jsonl(&output.train)?)?;
    dir.write("valid.jsonl", tasks_jsonl(&output.valid)?)?;
    dir.write("test.jsonl", tasks_jsonl(&output.test)?)?;
    dir.write("reference.jsonl", pool_jsonl(&output.reference)?)?;
    dir.write_json("config.json", &cfg)?;
    dir.finish("synth", seed)?;

    println!(
        "wrote {} train / {} valid / {} test tasks and {} reference molecules to {}",
        output.train.len(),
        output.valid.len(),
        output.test.len(),
        output.reference.len(),
        out.display()
    );
    Ok(())
}
