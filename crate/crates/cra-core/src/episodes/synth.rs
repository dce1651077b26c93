//! Synthetic selection-bias benchmark.
//!
//! Each task is a pair of Gaussian clusters in R^d with unit covariance and
//! means placed on a sphere of radius `separation_s`. Query-pool molecules
//! come from the true clusters; support-pool molecules come from clusters
//! whose means are shifted by `bias_b * separation_s` along a per-class
//! random direction. With b > 0 the support set systematically misrepresents
//! the query distribution, which is the failure mode the anchor machinery is
//! meant to absorb. The reference pool is an unbiased, unlabeled draw from
//! the union of all task clusters.

use super::{EpisodeError, MoleculeRecord, PoolTag, Task};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Feature dimension.
    pub d: usize,
    pub tasks_train: usize,
    pub tasks_valid: usize,
    pub tasks_test: usize,
    /// Labeled records per task available to the support sampler.
    pub support_pool_per_task: usize,
    /// Labeled records per task available to the query sampler.
    pub query_pool_per_task: usize,
    /// Distance of each class mean from the origin.
    pub separation_s: f64,
    /// Support-pool mean shift as a fraction of the separation, in [0, 1].
    pub bias_b: f64,
    /// Expected positive fraction per task, in (0, 1).
    pub prevalence_rho: f64,
    pub reference_pool_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d: 32,
            tasks_train: 22,
            tasks_valid: 6,
            tasks_test: 12,
            support_pool_per_task: 64,
            query_pool_per_task: 96,
            separation_s: 3.0,
            bias_b: 0.5,
            prevalence_rho: 0.3,
            reference_pool_size: 4096,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), EpisodeError> {
        let bad = |reason: &str| EpisodeError::InvalidConfig { reason: reason.to_string() };
        if self.d == 0 {
            return Err(bad("feature dimension must be positive"));
        }
        if self.tasks_train + self.tasks_valid + self.tasks_test == 0 {
            return Err(bad("at least one task required"));
        }
        if self.support_pool_per_task < 2 || self.query_pool_per_task < 2 {
            return Err(bad("each per-task pool needs at least 2 records"));
        }
        if !(self.separation_s.is_finite() && self.separation_s > 0.0) {
            return Err(bad("separation must be finite and positive"));
        }
        if !(0.0..=1.0).contains(&self.bias_b) || !self.bias_b.is_finite() {
            return Err(bad("bias strength must lie in [0, 1]"));
        }
        if !(self.prevalence_rho > 0.0 && self.prevalence_rho < 1.0) {
            return Err(bad("prevalence must lie strictly inside (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Vec<Task>,
    pub valid: Vec<Task>,
    pub test: Vec<Task>,
    pub reference: Vec<MoleculeRecord>,
}

/// Exact per-class counts: positives = round(rho * n) clamped so both
/// classes keep at least one slot.
fn positive_count(n: usize, rho: f64) -> usize {
    ((rho * n as f64).round() as usize).clamp(1, n - 1)
}

/// Random point on the sphere of radius `r`.
fn sphere_point(rng: &mut Rng, d: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| x * r / norm).collect();
        }
    }
}

fn gaussian_around(rng: &mut Rng, mean: &[f64]) -> Vec<f64> {
    mean.iter().map(|m| m + rng.next_normal()).collect()
}

struct TaskClusters {
    mean_neg: Vec<f64>,
    mean_pos: Vec<f64>,
}

/// Generates the full benchmark: train/valid/test task splits plus one
/// shared unbiased reference pool. Deterministic in the config seed; every
/// task consumes its own derived stream, so task content is independent of
/// split sizes elsewhere in the config.
pub fn synth_tasks(config: &SynthConfig) -> Result<SynthOutput, EpisodeError> {
    config.validate()?;
    let root = Rng::new(config.seed);
    let total = config.tasks_train + config.tasks_valid + config.tasks_test;

    let mut clusters: Vec<TaskClusters> = Vec::with_capacity(total);
    let mut tasks: Vec<Task> = Vec::with_capacity(total);
    for tau in 0..total {
        let mut rng = root.derive("synth-task", tau as u64);
        let mean_neg = sphere_point(&mut rng, config.d, config.separation_s);
        let mean_pos = sphere_point(&mut rng, config.d, config.separation_s);
        // Per-class bias directions: independent, so the support shift
        // distorts the geometry between the classes, not just a common
        // translation both prototypes would shrug off.
        let shift = config.bias_b * config.separation_s;
        let dir_neg = sphere_point(&mut rng, config.d, 1.0);
        let dir_pos = sphere_point(&mut rng, config.d, 1.0);
        let biased_neg: Vec<f64> =
            mean_neg.iter().zip(&dir_neg).map(|(m, u)| m + shift * u).collect();
        let biased_pos: Vec<f64> =
            mean_pos.iter().zip(&dir_pos).map(|(m, u)| m + shift * u).collect();

        let split = if tau < config.tasks_train {
            "train"
        } else if tau < config.tasks_train + config.tasks_valid {
            "valid"
        } else {
            "test"
        };
        let task_id = format!("synth-{split}-{tau}");

        let mut records = Vec::with_capacity(
            config.support_pool_per_task + config.query_pool_per_task,
        );
        let sup_pos = positive_count(config.support_pool_per_task, config.prevalence_rho);
        for i in 0..config.support_pool_per_task {
            let positive = i < sup_pos;
            let mean = if positive { &biased_pos } else { &biased_neg };
            records.push(MoleculeRecord {
                id: format!("synth-t{tau}-s{i}"),
                smiles: None,
                features: Some(gaussian_around(&mut rng, mean)),
                label: Some(if positive { 1 } else { -1 }),
                pool: Some(PoolTag::Support),
            });
        }
        let qry_pos = positive_count(config.query_pool_per_task, config.prevalence_rho);
        for i in 0..config.query_pool_per_task {
            let positive = i < qry_pos;
            let mean = if positive { &mean_pos } else { &mean_neg };
            records.push(MoleculeRecord {
                id: format!("synth-t{tau}-q{i}"),
                smiles: None,
                features: Some(gaussian_around(&mut rng, mean)),
                label: Some(if positive { 1 } else { -1 }),
                pool: Some(PoolTag::Query),
            });
        }
        tasks.push(Task { task_id, records });
        clusters.push(TaskClusters { mean_neg, mean_pos });
    }

    // Unbiased unlabeled pool over the union of all task clusters.
    let mut ref_rng = root.derive("synth-reference", 0);
    let mut reference = Vec::with_capacity(config.reference_pool_size);
    for i in 0..config.reference_pool_size {
        let tc = &clusters[ref_rng.next_below(total as u64) as usize];
        let mean =
            if ref_rng.next_f64() < config.prevalence_rho { &tc.mean_pos } else { &tc.mean_neg };
        reference.push(MoleculeRecord {
            id: format!("synth-ref-{i}"),
            smiles: None,
            features: Some(gaussian_around(&mut ref_rng, mean)),
            label: None,
            pool: None,
        });
    }

    let mut iter = tasks.into_iter();
    let train: Vec<Task> = iter.by_ref().take(config.tasks_train).collect();
    let valid: Vec<Task> = iter.by_ref().take(config.tasks_valid).collect();
    let test: Vec<Task> = iter.collect();
    Ok(SynthOutput { train, valid, test, reference })
}
