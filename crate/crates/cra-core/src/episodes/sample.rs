//! Support/query/reference draws for one episode.

use super::{Episode, EpisodeError, MoleculeRecord, PoolTag, Task};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// N^s/2 per class.
    Balanced,
    /// Support keeps the task's positive fraction, rounded, clamped so both
    /// classes keep at least one slot.
    Stratified,
}

/// Index sets a task exposes to the sampler. Tagged tasks split hard:
/// support comes only from support-tagged records, query only from
/// query-tagged ones. Untagged tasks use every record for both, with
/// disjointness enforced by the draw itself.
struct Pools {
    support: Vec<usize>,
    query: Vec<usize>,
    split: bool,
}

fn pools(task: &Task) -> Pools {
    let tagged = task.records.iter().any(|r| r.pool.is_some());
    if tagged {
        Pools {
            support: indices_with(task, Some(PoolTag::Support)),
            query: indices_with(task, Some(PoolTag::Query)),
            split: true,
        }
    } else {
        let all: Vec<usize> = (0..task.records.len()).collect();
        Pools { support: all.clone(), query: all, split: false }
    }
}

fn indices_with(task: &Task, tag: Option<PoolTag>) -> Vec<usize> {
    task.records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.pool == tag)
        .map(|(i, _)| i)
        .collect()
}

/// Draws support and query sets; the reference batch is sampled separately.
///
/// Support always contains at least one record of each class. The query is
/// drawn from the remaining records; when fewer than `n_query` remain, the
/// query takes everything left.
pub fn sample_episode(
    task: &Task,
    rng: &mut Rng,
    n_support: usize,
    n_query: usize,
    mode: SampleMode,
) -> Result<Episode, EpisodeError> {
    assert!(n_support >= 2, "support must hold both classes");
    let pools = pools(task);

    let sup_pos: Vec<usize> = pools
        .support
        .iter()
        .copied()
        .filter(|&i| task.records[i].label == Some(1))
        .collect();
    let sup_neg: Vec<usize> = pools
        .support
        .iter()
        .copied()
        .filter(|&i| task.records[i].label == Some(-1))
        .collect();
    if sup_pos.is_empty() || sup_neg.is_empty() {
        return Err(EpisodeError::SingleClassTask { task_id: task.task_id.clone() });
    }

    let need_pos = match mode {
        SampleMode::Balanced => {
            if !n_support.is_multiple_of(2) {
                return Err(EpisodeError::UnevenBalancedSupport { n_support });
            }
            n_support / 2
        }
        SampleMode::Stratified => {
            let frac = sup_pos.len() as f64 / (sup_pos.len() + sup_neg.len()) as f64;
            ((frac * n_support as f64).round() as usize).clamp(1, n_support - 1)
        }
    };
    let need_neg = n_support - need_pos;

    if sup_pos.len() < need_pos {
        return Err(EpisodeError::TaskTooSmall {
            task_id: task.task_id.clone(),
            pool: "support-positive",
            needed: need_pos,
            available: sup_pos.len(),
        });
    }
    if sup_neg.len() < need_neg {
        return Err(EpisodeError::TaskTooSmall {
            task_id: task.task_id.clone(),
            pool: "support-negative",
            needed: need_neg,
            available: sup_neg.len(),
        });
    }

    let mut support_idx: Vec<usize> = Vec::with_capacity(n_support);
    for &k in &rng.sample_indices(sup_pos.len(), need_pos) {
        support_idx.push(sup_pos[k]);
    }
    for &k in &rng.sample_indices(sup_neg.len(), need_neg) {
        support_idx.push(sup_neg[k]);
    }

    let taken: std::collections::HashSet<usize> = support_idx.iter().copied().collect();
    let query_candidates: Vec<usize> = if pools.split {
        pools.query.clone()
    } else {
        pools.query.iter().copied().filter(|i| !taken.contains(i)).collect()
    };
    if n_query > 0 && query_candidates.is_empty() {
        return Err(EpisodeError::TaskTooSmall {
            task_id: task.task_id.clone(),
            pool: "query",
            needed: 1,
            available: 0,
        });
    }
    let take = n_query.min(query_candidates.len());
    let query_idx: Vec<usize> = rng
        .sample_indices(query_candidates.len(), take)
        .into_iter()
        .map(|k| query_candidates[k])
        .collect();

    Ok(Episode {
        support: support_idx.iter().map(|&i| task.records[i].clone()).collect(),
        query: query_idx.iter().map(|&i| task.records[i].clone()).collect(),
        reference: Vec::new(),
    })
}

/// Uniform draw of `m` unlabeled records without replacement.
pub fn sample_reference(
    pool: &[MoleculeRecord],
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<MoleculeRecord>, EpisodeError> {
    if pool.len() < m {
        return Err(EpisodeError::PoolTooSmall { needed: m, available: pool.len() });
    }
    Ok(rng
        .sample_indices(pool.len(), m)
        .into_iter()
        .map(|i| pool[i].unlabeled())
        .collect())
}
