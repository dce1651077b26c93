//! JSON-lines task and reference-pool loading.
//!
//! Task line: {"task_id": str, "id": str, "smiles": str | "features": [f64],
//! "label": -1|0|1, "pool": "support"|"query"?}. Label 0 is normalized to -1
//! on load. Reference-pool lines are the same minus task_id and label.

use super::{MoleculeRecord, PoolTag, Task};
use serde::Deserialize;
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}:{line}: duplicate record id {id:?} in task {task_id:?}")]
    DuplicateRecordId { path: String, line: usize, id: String, task_id: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    task_id: Option<String>,
    id: String,
    smiles: Option<String>,
    features: Option<Vec<f64>>,
    label: Option<i64>,
    pool: Option<PoolTag>,
}

fn parse_line(
    path: &str,
    line_no: usize,
    line: &str,
) -> Result<(Option<String>, MoleculeRecord), LoadError> {
    let malformed = |msg: String| LoadError::Malformed { path: path.to_string(), line: line_no, msg };
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if raw.smiles.is_none() && raw.features.is_none() {
        return Err(malformed(format!(
            "record {:?} has neither smiles nor features",
            raw.id
        )));
    }
    if let Some(features) = &raw.features {
        if features.iter().any(|x| !x.is_finite()) {
            return Err(malformed(format!("record {:?} has non-finite features", raw.id)));
        }
    }
    let label = match raw.label {
        None => None,
        Some(-1) | Some(0) => Some(-1),
        Some(1) => Some(1),
        Some(other) => {
            return Err(malformed(format!(
                "label {other} outside {{-1, 0, 1}} for record {:?}",
                raw.id
            )))
        }
    };
    Ok((
        raw.task_id,
        MoleculeRecord {
            id: raw.id,
            smiles: raw.smiles,
            features: raw.features,
            label,
            pool: raw.pool,
        },
    ))
}

/// Loads labeled tasks, grouped by task_id in first-seen order.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>, LoadError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut order: Vec<String> = Vec::new();
    let mut tasks: HashMap<String, Task> = HashMap::new();
    let mut seen_ids: HashSet<(String, String)> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| LoadError::Io { path: path_str.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let (task_id, record) = parse_line(&path_str, line_no, &line)?;
        let task_id = task_id.ok_or_else(|| LoadError::Malformed {
            path: path_str.clone(),
            line: line_no,
            msg: format!("record {:?} is missing task_id", record.id),
        })?;
        if record.label.is_none() {
            return Err(LoadError::Malformed {
                path: path_str.clone(),
                line: line_no,
                msg: format!("task record {:?} is missing a label", record.id),
            });
        }
        if !seen_ids.insert((task_id.clone(), record.id.clone())) {
            return Err(LoadError::DuplicateRecordId {
                path: path_str.clone(),
                line: line_no,
                id: record.id,
                task_id,
            });
        }
        match tasks.get_mut(&task_id) {
            Some(task) => task.records.push(record),
            None => {
                order.push(task_id.clone());
                tasks.insert(task_id.clone(), Task { task_id, records: vec![record] });
            }
        }
    }

    Ok(order.into_iter().map(|id| tasks.remove(&id).unwrap()).collect())
}

/// Loads an unlabeled reference pool; any labels present are stripped.
/// Duplicate ids are allowed (a pool built from a task union may repeat
/// molecules across assays).
pub fn load_reference_pool(path: &Path) -> Result<Vec<MoleculeRecord>, LoadError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut pool = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| LoadError::Io { path: path_str.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let (_task_id, record) = parse_line(&path_str, line_no, &line)?;
        pool.push(record.unlabeled());
    }
    Ok(pool)
}
