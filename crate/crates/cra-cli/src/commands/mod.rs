//! One module per subcommand.

pub mod ablate;
pub mod attn;
pub mod embed;
pub mod eval;
pub mod featurize;
pub mod synth;
pub mod train;

use crate::error::CliError;
use cra_core::episodes::{sample_episode, sample_reference, Episode, SampleMode, Task};
use cra_core::model::{Checkpoint, Variant};
use cra_core::rng::Rng;
use std::path::Path;

/// Episode redraws tolerated while looking for a usable draw.
const MAX_REDRAWS: usize = 1000;

/// Draws one episode whose support set contains both classes, for the
/// inspection commands; the reference batch (when the variant wants one) is
/// drawn from the same stream afterwards.
pub(crate) fn draw_episode(
    checkpoint: &Checkpoint,
    task: &Task,
    reference_pool: &[cra_core::episodes::MoleculeRecord],
    n_support: usize,
    n_query: usize,
    mode: SampleMode,
    seed: u64,
) -> Result<Episode, CliError> {
    let mut rng = Rng::new(seed).derive(&task.task_id, 0);
    let mut episode = None;
    for _ in 0..MAX_REDRAWS {
        let ep = sample_episode(task, &mut rng, n_support, n_query, mode)?;
        let labels = ep.support_labels();
        if labels.contains(&1) && labels.contains(&-1) {
            episode = Some(ep);
            break;
        }
    }
    let Some(mut episode) = episode else {
        return Err(CliError::domain(format!(
            "task {} never produced a two-class support set in {MAX_REDRAWS} draws",
            task.task_id
        )));
    };
    if checkpoint.variant.uses_reference() {
        episode.reference =
            sample_reference(reference_pool, checkpoint.config.m, &mut rng)?;
    }
    Ok(episode)
}

/// The task named by `--task-id`, or the first task in the file.
pub(crate) fn pick_task<'t>(
    tasks: &'t [Task],
    task_id: Option<&str>,
    tasks_path: &Path,
) -> Result<&'t Task, CliError> {
    match task_id {
        None => Ok(&tasks[0]),
        Some(id) => tasks.iter().find(|t| t.task_id == id).ok_or_else(|| {
            CliError::usage(format!("task {:?} not found in {}", id, tasks_path.display()))
        }),
    }
}

/// Reference pool for a checkpoint: loads the file when the variant needs
/// one, errors when it needs one and none was given.
pub(crate) fn reference_for(
    variant: Variant,
    reference: Option<&Path>,
) -> Result<Option<&Path>, CliError> {
    if variant.uses_reference() && reference.is_none() {
        return Err(CliError::usage(
            "the full variant needs an unlabeled reference pool; pass --reference",
        ));
    }
    Ok(reference)
}
