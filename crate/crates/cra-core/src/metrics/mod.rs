//! Ranking metrics and rerun aggregation.
//!
//! AUROC uses the rank-statistic form (ties count half). AUC-PR is average
//! precision with a pinned tie order (score descending, then record id
//! ascending) so reports are byte-reproducible; any tie is flagged in the
//! output. delta_auc_pr subtracts the query set's positive prevalence, which
//! makes scores comparable across tasks with different class balance.

mod pca;

pub use pca::{pca_2d, Pca2d};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("AUROC needs both classes present")]
    SingleClass,
    #[error("average precision needs at least one positive")]
    NoPositives,
    #[error("task {task_id}: expected {expected} episode scores, got {got}")]
    RaggedInput { task_id: String, expected: usize, got: usize },
}

fn check_labels(labels: &[i8]) {
    assert!(
        labels.iter().all(|&l| l == 1 || l == -1),
        "labels must be -1 or +1"
    );
}

/// Probability that a uniformly random positive outranks a uniformly random
/// negative; tied scores contribute 1/2. Computed from midranks, so it is
/// exactly invariant under strictly increasing score transforms.
pub fn auroc(scores: &[f64], labels: &[i8]) -> Result<f64, MetricsError> {
    assert_eq!(scores.len(), labels.len());
    check_labels(labels);
    let n = scores.len();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks: every member of a tied group gets the group's mean rank.
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            if labels[i] == 1 {
                pos_rank_sum += midrank;
            }
        }
        start = end;
    }

    let u = pos_rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApResult {
    pub average_precision: f64,
    /// True when any two records shared a score, in which case the pinned
    /// id order decided their ranking.
    pub had_ties: bool,
}

/// Average precision: mean over positives of precision at that positive's
/// rank. Ranking order is score descending with ties broken by ascending id.
pub fn auc_pr(scores: &[f64], labels: &[i8], ids: &[&str]) -> Result<ApResult, MetricsError> {
    assert_eq!(scores.len(), labels.len());
    assert_eq!(scores.len(), ids.len());
    check_labels(labels);
    let n = scores.len();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| {
        scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(ids[b]))
    });
    let had_ties = idx.windows(2).any(|w| scores[w[0]] == scores[w[1]]);

    let mut true_pos = 0usize;
    let mut ap = 0.0;
    for (rank0, &i) in idx.iter().enumerate() {
        if labels[i] == 1 {
            true_pos += 1;
            ap += true_pos as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(ApResult { average_precision: ap / pos as f64, had_ties })
}

/// Positive fraction of a label vector.
pub fn prevalence(labels: &[i8]) -> f64 {
    check_labels(labels);
    let pos = labels.iter().filter(|&&l| l == 1).count();
    pos as f64 / labels.len() as f64
}

/// Scores from one (task, training rerun, support draw) evaluation episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub task_id: String,
    pub auroc: f64,
    pub auc_pr: f64,
    pub delta_auc_pr: f64,
    pub prevalence: f64,
    pub had_ties: bool,
}

/// Per-task means over the rerun x support-draw grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub auroc: f64,
    pub auc_pr: f64,
    pub delta_auc_pr: f64,
    pub prevalence: f64,
    pub had_ties: bool,
}

/// Mean with its standard error (sample std over sqrt(n)).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_err = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Summary { mean, std_err }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskReport>,
    pub auroc: Summary,
    pub auc_pr: Summary,
    pub delta_auc_pr: Summary,
    pub reruns: usize,
    pub support_draws: usize,
}

impl EvalReport {
    /// One row per task. Floats use shortest-roundtrip formatting, so the
    /// file is byte-stable for identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_id,auroc,auc_pr,delta_auc_pr,prevalence,had_ties\n");
        for t in &self.tasks {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.task_id, t.auroc, t.auc_pr, t.delta_auc_pr, t.prevalence, t.had_ties
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Collapses episode scores to per-task means (the rerun x draw axis) and
/// task-level means with standard errors. Every task must contribute exactly
/// `reruns * support_draws` scores.
pub fn aggregate(
    scores: &[EpisodeScore],
    reruns: usize,
    support_draws: usize,
) -> Result<EvalReport, MetricsError> {
    let expected = reruns * support_draws;
    let mut order: Vec<&str> = Vec::new();
    let mut by_task: std::collections::HashMap<&str, Vec<&EpisodeScore>> =
        std::collections::HashMap::new();
    for s in scores {
        let entry = by_task.entry(s.task_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(&s.task_id);
        }
        entry.push(s);
    }

    let mut tasks = Vec::with_capacity(order.len());
    for task_id in order {
        let group = &by_task[task_id];
        if group.len() != expected {
            return Err(MetricsError::RaggedInput {
                task_id: task_id.to_string(),
                expected,
                got: group.len(),
            });
        }
        let n = group.len() as f64;
        let mean_of = |f: fn(&EpisodeScore) -> f64| group.iter().map(|s| f(s)).sum::<f64>() / n;
        tasks.push(TaskReport {
            task_id: task_id.to_string(),
            auroc: mean_of(|s| s.auroc),
            auc_pr: mean_of(|s| s.auc_pr),
            delta_auc_pr: mean_of(|s| s.delta_auc_pr),
            prevalence: mean_of(|s| s.prevalence),
            had_ties: group.iter().any(|s| s.had_ties),
        });
    }

    let col = |f: fn(&TaskReport) -> f64| -> Vec<f64> { tasks.iter().map(f).collect() };
    Ok(EvalReport {
        auroc: summarize(&col(|t| t.auroc)),
        auc_pr: summarize(&col(|t| t.auc_pr)),
        delta_auc_pr: summarize(&col(|t| t.delta_auc_pr)),
        tasks,
        reruns,
        support_draws,
    })
}
