//! Task and pool loading with on-the-fly featurization.
//!
//! Records that already carry feature vectors pass through untouched.
//! Records that carry only SMILES are parsed and featurized; descriptor
//! normalization stats are fitted over the records supplied to one
//! [`featurize_records`] call, so a train/eval pair that should share stats
//! must go through one call (commands pass train + valid + reference pools
//! together). Pre-featurized inputs sidestep the question entirely.

use crate::error::CliError;
use cra_core::chem::parse_smiles;
use cra_core::episodes::{load_reference_pool, load_tasks, MoleculeRecord, Task};
use cra_core::featurize::{apply_normalize, featurize, fit_normalize, NormStats, RawFeatures};
use std::path::Path;

pub struct LoadedData {
    pub tasks: Vec<Task>,
    pub valid: Vec<Task>,
    pub reference: Vec<MoleculeRecord>,
    /// Stats fitted when any record needed featurizing.
    pub norm_stats: Option<NormStats>,
}

/// Feature width of the first featured record, if any.
pub fn feature_dim(tasks: &[Task], reference: &[MoleculeRecord]) -> Option<usize> {
    tasks
        .iter()
        .flat_map(|t| t.records.iter())
        .chain(reference.iter())
        .find_map(|r| r.features.as_ref().map(|f| f.len()))
}

fn raw_features(record: &MoleculeRecord) -> Result<RawFeatures, CliError> {
    let smiles = record.smiles.as_deref().ok_or_else(|| {
        CliError::domain(format!(
            "record {:?} has neither features nor smiles to featurize",
            record.id
        ))
    })?;
    let mol = parse_smiles(smiles).map_err(|e| {
        CliError::domain(format!("record {:?}: cannot parse {smiles:?}: {e}", record.id))
    })?;
    Ok(featurize(&mol.graph))
}

/// Fills in missing feature vectors across every record of every task set
/// plus the reference pool in one pass, fitting normalization stats over
/// exactly those records. Returns the stats when featurization ran.
pub fn featurize_records(
    task_sets: &mut [&mut Vec<Task>],
    reference: &mut [MoleculeRecord],
) -> Result<Option<NormStats>, CliError> {
    // Raw features for exactly the records lacking vectors, in traversal
    // order (task sets in order, then reference); the fill pass below walks
    // the same order.
    let needing: Vec<&MoleculeRecord> = task_sets
        .iter()
        .flat_map(|set| set.iter())
        .flat_map(|t| t.records.iter())
        .chain(reference.iter())
        .filter(|r| r.features.is_none())
        .collect();
    if needing.is_empty() {
        return Ok(None);
    }
    let mut raws = Vec::with_capacity(needing.len());
    for record in &needing {
        raws.push(raw_features(record)?);
    }
    drop(needing);
    let stats = fit_normalize(&raws)
        .map_err(|e| CliError::domain(e.to_string()))?;

    let mut iter = raws.into_iter();
    let mut fill = |record: &mut MoleculeRecord| {
        if record.features.is_none() {
            let raw = iter.next().expect("one raw per record needing features");
            record.features = Some(apply_normalize(&raw, &stats).combined);
        }
    };
    for set in task_sets.iter_mut() {
        for task in set.iter_mut() {
            for record in &mut task.records {
                fill(record);
            }
        }
    }
    for record in reference.iter_mut() {
        fill(record);
    }
    Ok(Some(stats))
}

/// Loads tasks plus optional validation tasks and reference pool, then
/// featurizes whatever lacks features.
pub fn load_all(
    tasks_path: &Path,
    valid_path: Option<&Path>,
    reference_path: Option<&Path>,
) -> Result<LoadedData, CliError> {
    let mut tasks = load_tasks(tasks_path)?;
    if tasks.is_empty() {
        return Err(CliError::usage(format!(
            "{}: no tasks found",
            tasks_path.display()
        )));
    }
    let mut valid = match valid_path {
        Some(p) => load_tasks(p)?,
        None => Vec::new(),
    };
    let mut reference = match reference_path {
        Some(p) => load_reference_pool(p)?,
        None => Vec::new(),
    };
    let norm_stats = featurize_records(&mut [&mut tasks, &mut valid], &mut reference)?;
    Ok(LoadedData { tasks, valid, reference, norm_stats })
}
