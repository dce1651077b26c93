//! Few-shot molecular property predictor.
//!
//! An episode carries a small labeled support set, a query set to score, and
//! (for the full variant) an unlabeled reference batch. Every row is encoded
//! into an h-dimensional embedding, class-mean anchors are computed from the
//! support embeddings, the anchors are enriched by attending over the
//! reference batch, the anchors are concatenated onto every support and
//! query row for a joint residual attention pass, and each query is scored
//! by a label-weighted cosine match against the support set.
//!
//! The ablation [`Variant`]s switch off parts of that pipeline: encoder
//! only, attention without anchors, anchors without reference enrichment,
//! and the full path.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod eval;
pub mod forward;
pub mod params;
pub mod train;

pub use attention::{block_mask, mha, r_mha, MASK_OFF};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{
    Activation, EncoderConfig, MatchingScale, ModelConfig, TrainConfig, Variant,
};
pub use encoder::encode;
pub use eval::{evaluate, evaluate_models, m_sweep, EvalConfig};
pub use forward::{
    bce_loss, forward_episode, initial_anchors, match_predict, AnchorSet, EpisodeBatch,
    ForwardOutput,
};
pub use params::{AttentionParams, BoundParams, CraParams, EncoderParams, HeadParams};
pub use train::{train, TrainHistory, TrainResult, ValidationPoint};

use crate::episodes::EpisodeError;
use thiserror::Error;

/// Model-layer failures.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {reason}")]
    InvalidConfig { reason: String },
    #[error("support set has no examples of class {label}")]
    MissingClass { label: i8 },
    #[error("record {id} has no feature vector")]
    MissingFeatures { id: String },
    #[error("record {id} has {got} features, expected {expected}")]
    RaggedFeatures { id: String, expected: usize, got: usize },
    #[error("record {id}: {message}")]
    Graph { id: String, message: String },
    #[error("variant needs a reference batch but none was provided")]
    MissingReference,
    #[error("loss became non-finite at step {step} on task {task_id}")]
    NonFiniteLoss { step: usize, task_id: String },
    #[error("reference pool too small: need {needed}, have {available}")]
    EmptyReferencePool { needed: usize, available: usize },
    #[error("task {task_id} never produced a two-class query set in {attempts} draws")]
    Unscorable { task_id: String, attempts: usize },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Hand-rolled oracles and fixtures shared by the model tests.

    use super::params::{AttentionParams, HeadParams};
    use crate::ndiff::Tensor;
    use crate::rng::Rng;

    pub fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.next_normal()).collect())
    }

    pub fn random_block(seed: u64, heads: usize, width: usize, proj: usize) -> AttentionParams {
        let mut rng = Rng::new(seed);
        AttentionParams {
            heads: (0..heads)
                .map(|_| HeadParams {
                    wq: random_tensor(&mut rng, width, proj),
                    wk: random_tensor(&mut rng, width, proj),
                    wv: random_tensor(&mut rng, width, proj),
                    wo: random_tensor(&mut rng, proj, width),
                })
                .collect(),
            width,
            proj,
        }
    }

    /// Plain-loop evaluation of one attention block, sharing no code with
    /// the tape ops.
    #[allow(clippy::needless_range_loop)]
    pub fn mha_by_hand(
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
        block: &AttentionParams,
        mask: Option<&Tensor>,
    ) -> Tensor {
        let matmul = |a: &Tensor, b: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(a.rows, b.cols);
            for i in 0..a.rows {
                for j in 0..b.cols {
                    let mut s = 0.0;
                    for t in 0..a.cols {
                        s += a.get(i, t) * b.get(t, j);
                    }
                    out.set(i, j, s);
                }
            }
            out
        };
        let mut total = Tensor::zeros(q.rows, block.width);
        for head in &block.heads {
            let qp = matmul(q, &head.wq);
            let kp = matmul(k, &head.wk);
            let vp = matmul(v, &head.wv);
            let mut weights = Tensor::zeros(q.rows, k.rows);
            for i in 0..q.rows {
                let mut logits = vec![0.0; k.rows];
                for j in 0..k.rows {
                    let mut dot = 0.0;
                    for t in 0..block.proj {
                        dot += qp.get(i, t) * kp.get(j, t);
                    }
                    logits[j] = dot / (block.proj as f64).sqrt();
                    if let Some(m) = mask {
                        logits[j] += m.get(i, j);
                    }
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for j in 0..k.rows {
                    weights.set(i, j, exps[j] / z);
                }
            }
            let head_out = matmul(&matmul(&weights, &vp), &head.wo);
            for i in 0..total.rows {
                for j in 0..total.cols {
                    total.set(i, j, total.get(i, j) + head_out.get(i, j));
                }
            }
        }
        total
    }

    /// x + mha_by_hand(x, x, x).
    pub fn r_mha_by_hand(x: &Tensor, block: &AttentionParams, mask: Option<&Tensor>) -> Tensor {
        let attended = mha_by_hand(x, x, x, block, mask);
        x.add(&attended)
    }
}
