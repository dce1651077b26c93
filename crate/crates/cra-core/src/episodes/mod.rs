//! Task storage and episodic sampling: few-shot tasks, support/query draws,
//! unlabeled reference batches, and a synthetic selection-bias generator.

mod load;
mod sample;
mod synth;

pub use load::{load_reference_pool, load_tasks, LoadError};
pub use sample::{sample_episode, sample_reference, SampleMode};
pub use synth::{synth_tasks, SynthConfig, SynthOutput};

use thiserror::Error;

/// Which pool a record may be drawn into. Generated biased tasks tag their
/// records so support and query come from different distributions; untagged
/// tasks sample both from the full record list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolTag {
    Support,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub id: String,
    pub smiles: Option<String>,
    /// Model input row; present once featurized (or supplied directly).
    pub features: Option<Vec<f64>>,
    /// -1 or +1; None for reference-pool records.
    pub label: Option<i8>,
    pub pool: Option<PoolTag>,
}

impl MoleculeRecord {
    pub fn unlabeled(&self) -> MoleculeRecord {
        MoleculeRecord { label: None, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub task_id: String,
    pub records: Vec<MoleculeRecord>,
}

impl Task {
    /// (negatives, positives) over all records.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.records.iter().filter(|r| r.label == Some(1)).count();
        let neg = self.records.iter().filter(|r| r.label == Some(-1)).count();
        (neg, pos)
    }

    pub fn positive_fraction(&self) -> f64 {
        let (neg, pos) = self.class_counts();
        pos as f64 / (neg + pos) as f64
    }
}

/// One few-shot instance: labeled support, labeled query (held out for
/// scoring), and an unlabeled reference batch.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support: Vec<MoleculeRecord>,
    pub query: Vec<MoleculeRecord>,
    pub reference: Vec<MoleculeRecord>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<i8> {
        self.support.iter().map(|r| r.label.expect("support is labeled")).collect()
    }

    pub fn query_labels(&self) -> Vec<i8> {
        self.query.iter().map(|r| r.label.expect("query is labeled")).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EpisodeError {
    #[error("task {task_id}: needs {needed} records in the {pool} pool, has {available}")]
    TaskTooSmall {
        task_id: String,
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("task {task_id}: only one class present")]
    SingleClassTask { task_id: String },
    #[error("balanced sampling requires an even support size, got {n_support}")]
    UnevenBalancedSupport { n_support: usize },
    #[error("reference pool has {available} records, need {needed}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("record {id} has no features (featurize first)")]
    MissingFeatures { id: String },
    #[error("invalid generator config: {reason}")]
    InvalidConfig { reason: String },
}
