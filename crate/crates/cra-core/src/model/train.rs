//! Episodic training: sample a task, sample an episode, descend the
//! query loss, validate periodically, keep the best parameters.

use super::config::{EncoderConfig, ModelConfig, TrainConfig, Variant};
use super::forward::{bce_loss, forward_episode, EpisodeBatch};
use super::params::CraParams;
use super::ModelError;
use crate::episodes::{
    sample_episode, sample_reference, EpisodeError, MoleculeRecord, Task,
};
use crate::metrics;
use crate::ndiff::{clip_global_norm, AdamConfig, AdamState, Tape, Tensor};
use crate::rng::Rng;
use serde::Serialize;

/// Episode redraws tolerated while looking for a query set that contains
/// both classes, per task and validation round.
pub(crate) const MAX_REDRAWS: usize = 1000;

/// One validation pass, recorded against the episode count at which it ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationPoint {
    pub step: usize,
    /// Mean lift of average precision over query prevalence across the
    /// validation tasks.
    pub delta_auc_pr: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainHistory {
    /// Query-set loss of every training episode, in order.
    pub losses: Vec<f64>,
    /// Pre-clip global gradient norm of every training episode.
    pub grad_norms: Vec<f64>,
    pub validations: Vec<ValidationPoint>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters from the best validation round (final parameters when no
    /// validation tasks were given).
    pub params: CraParams,
    pub history: TrainHistory,
    /// Episode count at which `params` was snapshotted.
    pub best_step: usize,
    /// Untrained-baseline validation score, when validation ran.
    pub initial_delta: Option<f64>,
    pub best_delta: Option<f64>,
    pub episodes_run: usize,
}

fn scorable(labels: &[i8]) -> bool {
    labels.contains(&1) && labels.contains(&-1)
}

/// Mean validation lift across `tasks`, drawing one episode per task from a
/// stream keyed by (round, task position). Tasks that cannot produce a
/// two-class query set within [`MAX_REDRAWS`] are skipped; a round in which
/// every task is skipped is a configuration error.
#[allow(clippy::too_many_arguments)]
fn validation_delta(
    params: &CraParams,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    variant: Variant,
    tasks: &[Task],
    reference_pool: &[MoleculeRecord],
    root: &Rng,
    round: u64,
) -> Result<f64, ModelError> {
    let want_graphs = matches!(config.encoder, EncoderConfig::Gin { .. });
    let round_rng = root.derive("validation", round);
    let mut deltas = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        let mut rng = round_rng.derive("task", t as u64);
        let mut episode = None;
        for _ in 0..MAX_REDRAWS {
            match sample_episode(
                task,
                &mut rng,
                train_cfg.n_support,
                train_cfg.n_query,
                train_cfg.mode,
            ) {
                Ok(ep) => {
                    if scorable(&ep.query_labels()) {
                        episode = Some(ep);
                        break;
                    }
                }
                Err(EpisodeError::SingleClassTask { .. }) => break,
                Err(e) => return Err(e.into()),
            }
        }
        let Some(mut episode) = episode else { continue };
        if variant.uses_reference() {
            episode.reference = sample_reference(reference_pool, config.m, &mut rng)?;
        }
        let batch = EpisodeBatch::from_episode(&episode, want_graphs)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out =
            forward_episode(&mut tape, &bound, config, variant, &batch, config.mask_queries)?;
        let probs = out.probabilities(&tape);
        let ids: Vec<&str> = episode.query.iter().map(|r| r.id.as_str()).collect();
        let ap = metrics::auc_pr(&probs, &batch.query_labels, &ids)?;
        deltas.push(ap.average_precision - metrics::prevalence(&batch.query_labels));
    }
    if deltas.is_empty() {
        return Err(ModelError::InvalidConfig {
            reason: "no validation task produced a scorable episode".to_string(),
        });
    }
    Ok(deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// Trains `variant` on episodes drawn from `train_tasks`.
///
/// Validation runs before the first update (the untrained baseline) and
/// after every `validation_interval` episodes; training stops early after
/// `patience` consecutive rounds without improvement. The returned
/// parameters are the snapshot from the best round. With no validation
/// tasks, training runs to `max_episodes` and returns the final parameters.
pub fn train(
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    variant: Variant,
    train_tasks: &[Task],
    valid_tasks: &[Task],
    reference_pool: &[MoleculeRecord],
) -> Result<TrainResult, ModelError> {
    config.validate()?;
    train_cfg.validate()?;
    if train_tasks.is_empty() {
        return Err(ModelError::InvalidConfig { reason: "no training tasks".to_string() });
    }
    if variant.uses_reference() && reference_pool.len() < config.m {
        return Err(ModelError::EmptyReferencePool {
            needed: config.m,
            available: reference_pool.len(),
        });
    }
    let want_graphs = matches!(config.encoder, EncoderConfig::Gin { .. });

    let root = Rng::new(config.seed);
    let mut task_order = root.derive("task-order", 0);
    let mut params = CraParams::init(config, variant);
    let moment_shapes: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mut adam = AdamState::new(&moment_shapes);
    // AdamConfig::with_lr rejects 0, which is a legitimate "measure only"
    // setting here, so fill the defaults and override the rate.
    let adam_cfg = AdamConfig { lr: train_cfg.learning_rate, ..AdamConfig::with_lr(1.0) };

    let mut history = TrainHistory::default();
    let run_validation = !valid_tasks.is_empty();
    let mut best = params.clone();
    let mut best_step = 0usize;
    let mut best_delta = f64::NEG_INFINITY;
    let mut initial_delta = None;
    let mut round = 0u64;
    let mut strikes = 0usize;

    let validate = |params: &CraParams, round: u64| -> Result<f64, ModelError> {
        validation_delta(
            params,
            config,
            train_cfg,
            variant,
            valid_tasks,
            reference_pool,
            &root,
            round,
        )
    };

    if run_validation {
        let delta = validate(&params, round)?;
        round += 1;
        history.validations.push(ValidationPoint { step: 0, delta_auc_pr: delta });
        best_delta = delta;
        initial_delta = Some(delta);
    }

    let mut episodes_run = 0usize;
    for step in 1..=train_cfg.max_episodes {
        let task = &train_tasks[task_order.next_below(train_tasks.len() as u64) as usize];
        let mut ep_rng = root.derive("episode", step as u64);
        let mut episode = sample_episode(
            task,
            &mut ep_rng,
            train_cfg.n_support,
            train_cfg.n_query,
            train_cfg.mode,
        )?;
        if variant.uses_reference() {
            let mut ref_rng = root.derive("reference", step as u64);
            episode.reference = sample_reference(reference_pool, config.m, &mut ref_rng)?;
        }
        let batch = EpisodeBatch::from_episode(&episode, want_graphs)?;

        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out =
            forward_episode(&mut tape, &bound, config, variant, &batch, config.mask_queries)?;
        let loss_id = bce_loss(&mut tape, out.probs, &batch.query_labels);
        let loss = tape.value(loss_id).get(0, 0);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step, task_id: task.task_id.clone() });
        }
        tape.backward(loss_id);
        let mut grads = bound.gradients(&tape);
        let norm = clip_global_norm(&mut grads, train_cfg.clip_norm);
        let mut slots: Vec<&mut Tensor> =
            params.named_mut().into_iter().map(|(_, t)| t).collect();
        adam.step_refs(&mut slots, &grads, &adam_cfg);
        history.losses.push(loss);
        history.grad_norms.push(norm);
        episodes_run = step;

        if run_validation && step % train_cfg.validation_interval == 0 {
            let delta = validate(&params, round)?;
            round += 1;
            history.validations.push(ValidationPoint { step, delta_auc_pr: delta });
            if delta > best_delta {
                best_delta = delta;
                best_step = step;
                best = params.clone();
                strikes = 0;
            } else {
                strikes += 1;
                if strikes >= train_cfg.patience {
                    break;
                }
            }
        }
    }

    if !run_validation {
        best = params;
        best_step = episodes_run;
    }
    Ok(TrainResult {
        params: best,
        history,
        best_step,
        initial_delta,
        best_delta: if run_validation { Some(best_delta) } else { None },
        episodes_run,
    })
}
