//! Episode evaluation over a task suite.
//!
//! Scoring runs on a (task, rerun, support draw) grid. Every cell's episode
//! is drawn from an RNG derived from the evaluation seed, the task id, and
//! the cell index alone, so results do not depend on task order or on how
//! many workers rayon schedules, and every model variant sees the same
//! episodes when given the same [`EvalConfig`].

use super::config::{EncoderConfig, ModelConfig, Variant};
use super::forward::{forward_episode, EpisodeBatch};
use super::params::CraParams;
use super::train::MAX_REDRAWS;
use super::ModelError;
use crate::episodes::{sample_episode, sample_reference, MoleculeRecord, SampleMode, Task};
use crate::metrics::{self, aggregate, EpisodeScore, EvalReport};
use crate::ndiff::Tape;
use crate::rng::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Episode grid and sampling protocol for one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_support: usize,
    pub n_query: usize,
    pub mode: SampleMode,
    /// Rerun axis of the grid. [`evaluate_models`] requires one model per
    /// rerun; [`evaluate`] reuses a single model across all reruns.
    pub reruns: usize,
    /// Support-draw axis of the grid.
    pub support_draws: usize,
    /// Reference batch size; defaults to the model's training-time size.
    pub reference_size: Option<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_support: 16,
            n_query: 16,
            mode: SampleMode::Stratified,
            reruns: 5,
            support_draws: 10,
            reference_size: None,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::InvalidConfig { reason: reason.to_string() })
        };
        if self.n_support < 2 {
            return fail("n_support must be at least 2 (one per class)");
        }
        if self.n_query == 0 {
            return fail("n_query must be positive");
        }
        if self.reruns == 0 {
            return fail("reruns must be positive");
        }
        if self.support_draws == 0 {
            return fail("support_draws must be positive");
        }
        if self.reference_size == Some(0) {
            return fail("reference_size must be positive when set");
        }
        Ok(())
    }
}

/// Scores every grid cell of one task. Cell (r, k) uses `models[r]` and an
/// RNG derived as (seed, task id, r * K + k); the reference batch is drawn
/// from the same stream after the episode, so support and query draws are
/// identical across reference sizes and across variants.
fn score_task(
    models: &[&CraParams],
    config: &ModelConfig,
    variant: Variant,
    task: &Task,
    reference_pool: &[MoleculeRecord],
    eval: &EvalConfig,
) -> Result<Vec<EpisodeScore>, ModelError> {
    let m_eff = eval.reference_size.unwrap_or(config.m);
    let want_graphs = matches!(config.encoder, EncoderConfig::Gin { .. });
    let root = Rng::new(eval.seed);
    let draws = eval.support_draws;
    let mut scores = Vec::with_capacity(models.len() * draws);
    for (r, params) in models.iter().enumerate() {
        for k in 0..draws {
            let cell = (r * draws + k) as u64;
            let mut rng = root.derive(&task.task_id, cell);
            let mut episode = None;
            for _ in 0..MAX_REDRAWS {
                let ep =
                    sample_episode(task, &mut rng, eval.n_support, eval.n_query, eval.mode)?;
                if scorable(&ep.query_labels()) {
                    episode = Some(ep);
                    break;
                }
            }
            let Some(mut episode) = episode else {
                return Err(ModelError::Unscorable {
                    task_id: task.task_id.clone(),
                    attempts: MAX_REDRAWS,
                });
            };
            if variant.uses_reference() {
                episode.reference = sample_reference(reference_pool, m_eff, &mut rng)?;
            }
            let batch = EpisodeBatch::from_episode(&episode, want_graphs)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let out =
                forward_episode(&mut tape, &bound, config, variant, &batch, config.mask_queries)?;
            let probs = out.probabilities(&tape);
            let ids: Vec<&str> = episode.query.iter().map(|q| q.id.as_str()).collect();
            let ap = metrics::auc_pr(&probs, &batch.query_labels, &ids)?;
            let roc = metrics::auroc(&probs, &batch.query_labels)?;
            let prev = metrics::prevalence(&batch.query_labels);
            scores.push(EpisodeScore {
                task_id: task.task_id.clone(),
                auroc: roc,
                auc_pr: ap.average_precision,
                delta_auc_pr: ap.average_precision - prev,
                prevalence: prev,
                had_ties: ap.had_ties,
            });
        }
    }
    Ok(scores)
}

fn scorable(labels: &[i8]) -> bool {
    labels.contains(&1) && labels.contains(&-1)
}

/// Evaluates one model per rerun row over the full grid and aggregates to
/// per-task means with cross-task standard errors. Tasks run in parallel.
///
/// `eval.reruns` must equal `models.len()`; pass the same reference several
/// times (or use [`evaluate`]) to reuse one model across reruns.
pub fn evaluate_models(
    models: &[&CraParams],
    config: &ModelConfig,
    variant: Variant,
    tasks: &[Task],
    reference_pool: &[MoleculeRecord],
    eval: &EvalConfig,
) -> Result<EvalReport, ModelError> {
    config.validate()?;
    eval.validate()?;
    if models.len() != eval.reruns {
        return Err(ModelError::InvalidConfig {
            reason: format!(
                "eval.reruns is {} but {} model(s) were given",
                eval.reruns,
                models.len()
            ),
        });
    }
    if tasks.is_empty() {
        return Err(ModelError::InvalidConfig {
            reason: "no evaluation tasks".to_string(),
        });
    }
    let m_eff = eval.reference_size.unwrap_or(config.m);
    if variant.uses_reference() && reference_pool.len() < m_eff {
        return Err(ModelError::EmptyReferencePool {
            needed: m_eff,
            available: reference_pool.len(),
        });
    }
    let per_task: Result<Vec<Vec<EpisodeScore>>, ModelError> = tasks
        .par_iter()
        .map(|task| score_task(models, config, variant, task, reference_pool, eval))
        .collect();
    let flat: Vec<EpisodeScore> = per_task?.into_iter().flatten().collect();
    Ok(aggregate(&flat, eval.reruns, eval.support_draws)?)
}

/// Evaluates a single model over the full `reruns x support_draws` grid;
/// each rerun row simply draws fresh episodes.
pub fn evaluate(
    params: &CraParams,
    config: &ModelConfig,
    variant: Variant,
    tasks: &[Task],
    reference_pool: &[MoleculeRecord],
    eval: &EvalConfig,
) -> Result<EvalReport, ModelError> {
    let models: Vec<&CraParams> = (0..eval.reruns).map(|_| params).collect();
    evaluate_models(&models, config, variant, tasks, reference_pool, eval)
}

/// Re-evaluates one model at each reference batch size. Episodes are drawn
/// before the reference batch within each cell's stream, so all sizes score
/// the model on identical support and query sets; only the reference batch
/// changes. Variants that ignore the reference produce identical reports at
/// every size.
pub fn m_sweep(
    params: &CraParams,
    config: &ModelConfig,
    variant: Variant,
    tasks: &[Task],
    reference_pool: &[MoleculeRecord],
    eval: &EvalConfig,
    sizes: &[usize],
) -> Result<Vec<(usize, EvalReport)>, ModelError> {
    sizes
        .iter()
        .map(|&m| {
            let cfg = EvalConfig { reference_size: Some(m), ..eval.clone() };
            let report = evaluate(params, config, variant, tasks, reference_pool, &cfg)?;
            Ok((m, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{synth_tasks, SynthConfig};
    use crate::model::config::{Activation, MatchingScale};

    fn suite(seed: u64) -> crate::episodes::SynthOutput {
        let cfg = SynthConfig {
            d: 6,
            tasks_train: 0,
            tasks_valid: 0,
            tasks_test: 3,
            support_pool_per_task: 30,
            query_pool_per_task: 30,
            separation_s: 2.0,
            bias_b: 0.0,
            prevalence_rho: 0.5,
            reference_pool_size: 40,
            seed,
        };
        synth_tasks(&cfg).unwrap()
    }

    fn model_config(seed: u64) -> ModelConfig {
        let mut c = ModelConfig::new(6);
        c.h = 4;
        c.heads = 1;
        c.d_k = 4;
        c.encoder = EncoderConfig::Mlp { hidden: vec![], activation: Activation::Tanh };
        c.m = 8;
        c.matching_scale = MatchingScale::Scaled;
        c.seed = seed;
        c
    }

    fn eval_config(seed: u64) -> EvalConfig {
        EvalConfig {
            n_support: 6,
            n_query: 8,
            mode: SampleMode::Stratified,
            reruns: 2,
            support_draws: 3,
            reference_size: None,
            seed,
        }
    }

    #[test]
    fn report_covers_every_task_and_repeats_byte_identically() {
        let suite = suite(5);
        let config = model_config(9);
        let params = CraParams::init(&config, Variant::Full);
        let eval = eval_config(17);
        let a = evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &eval)
            .unwrap();
        let b = evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &eval)
            .unwrap();
        assert_eq!(a.tasks.len(), suite.test.len());
        assert_eq!(a.reruns, 2);
        assert_eq!(a.support_draws, 3);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        for t in &a.tasks {
            assert!((-1.0..=1.0).contains(&t.delta_auc_pr));
            assert!((0.0..=1.0).contains(&t.auroc));
        }

        // A different evaluation seed draws different episodes.
        let other = EvalConfig { seed: 18, ..eval };
        let c = evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &other)
            .unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn task_order_does_not_change_per_task_scores() {
        let suite = suite(6);
        let config = model_config(10);
        let params = CraParams::init(&config, Variant::Full);
        let eval = eval_config(23);
        let forward =
            evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &eval)
                .unwrap();
        let mut reversed_tasks = suite.test.clone();
        reversed_tasks.reverse();
        let reversed =
            evaluate(&params, &config, Variant::Full, &reversed_tasks, &suite.reference, &eval)
                .unwrap();
        for t in &forward.tasks {
            let twin = reversed.tasks.iter().find(|r| r.task_id == t.task_id).unwrap();
            assert_eq!(t.auroc.to_bits(), twin.auroc.to_bits());
            assert_eq!(t.auc_pr.to_bits(), twin.auc_pr.to_bits());
            assert_eq!(t.delta_auc_pr.to_bits(), twin.delta_auc_pr.to_bits());
        }
    }

    #[test]
    fn reference_size_override_is_checked_against_the_pool() {
        let suite = suite(7);
        let config = model_config(11);
        let params = CraParams::init(&config, Variant::Full);
        let mut eval = eval_config(29);
        eval.reference_size = Some(suite.reference.len() + 1);
        let err =
            evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &eval)
                .unwrap_err();
        match err {
            ModelError::EmptyReferencePool { needed, available } => {
                assert_eq!(needed, suite.reference.len() + 1);
                assert_eq!(available, suite.reference.len());
            }
            other => panic!("unexpected error: {other}"),
        }

        eval.reference_size = Some(suite.reference.len());
        evaluate(&params, &config, Variant::Full, &suite.test, &suite.reference, &eval)
            .unwrap();
    }

    #[test]
    fn rerun_count_must_match_the_model_list() {
        let suite = suite(8);
        let config = model_config(12);
        let params = CraParams::init(&config, Variant::Aam);
        let eval = eval_config(31);
        let err = evaluate_models(
            &[&params],
            &config,
            Variant::Aam,
            &suite.test,
            &suite.reference,
            &eval,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::InvalidConfig { .. }), "got {err}");
    }

    #[test]
    fn task_that_cannot_yield_a_two_class_query_is_reported() {
        // One positive in the whole task: balanced support always claims it,
        // so the query is single-class on every draw.
        let mut records = Vec::new();
        for i in 0..8 {
            records.push(MoleculeRecord {
                id: format!("r{i}"),
                smiles: None,
                features: Some(vec![i as f64, 1.0, 0.0, 0.0, 0.0, 0.0]),
                label: Some(if i == 0 { 1 } else { -1 }),
                pool: None,
            });
        }
        let task = Task { task_id: "lopsided".to_string(), records };
        let config = model_config(13);
        let params = CraParams::init(&config, Variant::EncoderOnly);
        let eval = EvalConfig {
            n_support: 2,
            n_query: 4,
            mode: SampleMode::Balanced,
            reruns: 1,
            support_draws: 1,
            reference_size: None,
            seed: 3,
        };
        let err = evaluate(&params, &config, Variant::EncoderOnly, &[task], &[], &eval)
            .unwrap_err();
        match err {
            ModelError::Unscorable { task_id, attempts } => {
                assert_eq!(task_id, "lopsided");
                assert_eq!(attempts, MAX_REDRAWS);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn distinct_models_on_the_rerun_axis_change_the_report() {
        let suite = suite(9);
        let config = model_config(14);
        let a = CraParams::init(&config, Variant::Aam);
        let mut other = model_config(15);
        other.seed = 99;
        let b = CraParams::init(&other, Variant::Aam);
        let eval = EvalConfig { reruns: 2, ..eval_config(37) };
        let same =
            evaluate_models(&[&a, &a], &config, Variant::Aam, &suite.test, &suite.reference, &eval)
                .unwrap();
        let mixed =
            evaluate_models(&[&a, &b], &config, Variant::Aam, &suite.test, &suite.reference, &eval)
                .unwrap();
        assert_ne!(same.to_csv(), mixed.to_csv());
    }

    #[test]
    fn reference_sweep_reuses_episodes_and_only_moves_reference_variants() {
        let suite = suite(10);
        let config = model_config(16);
        let eval = eval_config(41);
        let sizes = [4usize, 8, 16];

        // The full variant consumes the reference batch, so its scores move.
        let full = CraParams::init(&config, Variant::Full);
        let swept =
            m_sweep(&full, &config, Variant::Full, &suite.test, &suite.reference, &eval, &sizes)
                .unwrap();
        assert_eq!(swept.len(), sizes.len());
        assert_eq!(swept[0].0, 4);
        let csvs: Vec<String> = swept.iter().map(|(_, r)| r.to_csv()).collect();
        assert!(csvs.iter().any(|c| c != &csvs[0]), "reference size had no effect");

        // Encoder-only ignores it, which also proves the support and query
        // draws are identical at every size.
        let enc = CraParams::init(&config, Variant::EncoderOnly);
        let swept = m_sweep(
            &enc,
            &config,
            Variant::EncoderOnly,
            &suite.test,
            &suite.reference,
            &eval,
            &sizes,
        )
        .unwrap();
        let csvs: Vec<String> = swept.iter().map(|(_, r)| r.to_csv()).collect();
        assert!(csvs.iter().all(|c| c == &csvs[0]));
    }

    #[test]
    fn empty_task_list_is_rejected() {
        let suite = suite(11);
        let config = model_config(18);
        let params = CraParams::init(&config, Variant::EncoderOnly);
        let err = evaluate(
            &params,
            &config,
            Variant::EncoderOnly,
            &[],
            &suite.reference,
            &eval_config(43),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::InvalidConfig { .. }));
    }
}
