//! Episode forward pass: anchors, augmentations, matching, and loss.

use super::attention::{block_mask, r_mha};
use super::config::{MatchingScale, ModelConfig, Variant};
use super::encoder::encode;
use super::params::{BoundAttention, BoundParams};
use super::ModelError;
use crate::chem::{parse_smiles, MolGraph};
use crate::episodes::Episode;
use crate::ndiff::{NodeId, Tape, Tensor};

/// Class anchors as plain tensors; row 0 is class -1, row 1 is class +1,
/// everywhere in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub initial: Tensor,
    pub augmented: Tensor,
}

/// Episode data lowered to tensors, ready to bind onto a tape.
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub support: Tensor,
    pub query: Tensor,
    pub reference: Option<Tensor>,
    pub support_labels: Vec<i8>,
    pub query_labels: Vec<i8>,
    pub support_graphs: Option<Vec<Option<MolGraph>>>,
    pub query_graphs: Option<Vec<Option<MolGraph>>>,
    pub reference_graphs: Option<Vec<Option<MolGraph>>>,
}

fn rows_to_tensor(
    records: &[crate::episodes::MoleculeRecord],
    width: &mut Option<usize>,
) -> Result<Tensor, ModelError> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(records.len());
    for r in records {
        let features = r
            .features
            .as_ref()
            .ok_or_else(|| ModelError::MissingFeatures { id: r.id.clone() })?;
        match *width {
            None => *width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(ModelError::RaggedFeatures {
                    id: r.id.clone(),
                    expected: w,
                    got: features.len(),
                })
            }
            _ => {}
        }
        rows.push(features.clone());
    }
    Ok(Tensor::from_rows(&rows))
}

fn graphs_of(
    records: &[crate::episodes::MoleculeRecord],
) -> Result<Vec<Option<MolGraph>>, ModelError> {
    records
        .iter()
        .map(|r| match &r.smiles {
            None => Ok(None),
            Some(s) => parse_smiles(s)
                .map(|p| Some(p.graph))
                .map_err(|e| ModelError::Graph { id: r.id.clone(), message: e.to_string() }),
        })
        .collect()
}

impl EpisodeBatch {
    /// Lowers an episode to tensors. `want_graphs` additionally parses each
    /// record's SMILES into a bond graph (for the message-passing encoder).
    pub fn from_episode(ep: &Episode, want_graphs: bool) -> Result<EpisodeBatch, ModelError> {
        let mut width = None;
        let support = rows_to_tensor(&ep.support, &mut width)?;
        let query = rows_to_tensor(&ep.query, &mut width)?;
        let reference = if ep.reference.is_empty() {
            None
        } else {
            Some(rows_to_tensor(&ep.reference, &mut width)?)
        };
        let (support_graphs, query_graphs, reference_graphs) = if want_graphs {
            (
                Some(graphs_of(&ep.support)?),
                Some(graphs_of(&ep.query)?),
                Some(graphs_of(&ep.reference)?),
            )
        } else {
            (None, None, None)
        };
        Ok(EpisodeBatch {
            support,
            query,
            reference,
            support_labels: ep.support_labels(),
            query_labels: ep.query_labels(),
            support_graphs,
            query_graphs,
            reference_graphs,
        })
    }
}

fn class_counts(labels: &[i8]) -> Result<(usize, usize), ModelError> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.iter().filter(|&&l| l == -1).count();
    if neg == 0 {
        return Err(ModelError::MissingClass { label: -1 });
    }
    if pos == 0 {
        return Err(ModelError::MissingClass { label: 1 });
    }
    Ok((neg, pos))
}

/// Class-mean anchors over support embeddings: 2 x h, row 0 = class -1.
pub fn initial_anchors(
    tape: &mut Tape,
    support_emb: NodeId,
    labels: &[i8],
) -> Result<NodeId, ModelError> {
    class_counts(labels)?;
    let neg_mask: Vec<f64> = labels.iter().map(|&l| if l == -1 { 1.0 } else { 0.0 }).collect();
    let pos_mask: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { 0.0 }).collect();
    let neg = tape.mean_rows_masked(support_emb, &neg_mask);
    let pos = tape.mean_rows_masked(support_emb, &pos_mask);
    Ok(tape.concat_rows(neg, pos))
}

/// Enriches anchors by residual attention over the reference batch: runs
/// the width-h attention on the (2+M)-row stack [anchors : references] and
/// keeps the first two rows. The reference rows' outputs are discarded.
pub fn context_augment(
    tape: &mut Tape,
    anchors: NodeId,
    reference_emb: NodeId,
    cam: &BoundAttention,
) -> NodeId {
    let stacked = tape.concat_rows(anchors, reference_emb);
    let out = r_mha(tape, stacked, cam, None, None);
    tape.slice_rows(out, 0, 2)
}

/// Widens each embedding row with both anchor rows, runs residual attention
/// over the joint [support : query] stack, and keeps the first h columns.
///
/// Every row attends every row (the query set is processed as a block);
/// `mask` optionally blocks query rows from attending query rows.
pub fn anchor_augment(
    tape: &mut Tape,
    support_emb: NodeId,
    query_emb: NodeId,
    anchors: NodeId,
    aam: &BoundAttention,
    mask: Option<NodeId>,
    weights_out: Option<&mut Vec<NodeId>>,
) -> (NodeId, NodeId) {
    let h = tape.value(support_emb).cols;
    let ns = tape.value(support_emb).rows;
    let nq = tape.value(query_emb).rows;
    let anchor_neg = tape.slice_rows(anchors, 0, 1);
    let anchor_pos = tape.slice_rows(anchors, 1, 2);

    let widen = |tape: &mut Tape, emb: NodeId, n: usize| {
        let neg = tape.repeat_row(anchor_neg, n);
        let pos = tape.repeat_row(anchor_pos, n);
        let first = tape.concat_cols(emb, neg);
        tape.concat_cols(first, pos)
    };
    let support_wide = widen(tape, support_emb, ns);
    let query_wide = widen(tape, query_emb, nq);

    let stacked = tape.concat_rows(support_wide, query_wide);
    let out = r_mha(tape, stacked, aam, mask, weights_out);
    let support_rows = tape.slice_rows(out, 0, ns);
    let query_rows = tape.slice_rows(out, ns, ns + nq);
    let support_aug = tape.slice_cols(support_rows, 0, h);
    let query_aug = tape.slice_cols(query_rows, 0, h);
    (support_aug, query_aug)
}

/// The anchor-free ablation: residual attention over [support : query] at
/// width h, no anchor columns, no column slice.
pub fn plain_augment(
    tape: &mut Tape,
    support_emb: NodeId,
    query_emb: NodeId,
    aam: &BoundAttention,
    mask: Option<NodeId>,
    weights_out: Option<&mut Vec<NodeId>>,
) -> (NodeId, NodeId) {
    let ns = tape.value(support_emb).rows;
    let nq = tape.value(query_emb).rows;
    let stacked = tape.concat_rows(support_emb, query_emb);
    let out = r_mha(tape, stacked, aam, mask, weights_out);
    let support_aug = tape.slice_rows(out, 0, ns);
    let query_aug = tape.slice_rows(out, ns, ns + nq);
    (support_aug, query_aug)
}

/// Per-query probability of the positive class: a sigmoid over the
/// label-weighted sum of cosine similarities to every support row,
/// optionally scaled by 1/sqrt(2h). Zero rows normalize to zero vectors
/// and so contribute cosine 0.
pub fn match_predict(
    tape: &mut Tape,
    query_aug: NodeId,
    support_aug: NodeId,
    labels: &[i8],
    matching_scale: MatchingScale,
) -> Result<NodeId, ModelError> {
    let (neg, pos) = class_counts(labels)?;
    let h = tape.value(query_aug).cols;
    let qn = tape.l2_normalize_rows(query_aug);
    let sn = tape.l2_normalize_rows(support_aug);
    let snt = tape.transpose(sn);
    let cos = tape.matmul(qn, snt);
    let weights: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { 1.0 / pos as f64 } else { -1.0 / neg as f64 })
        .collect();
    let w = tape.constant(Tensor::from_vec(labels.len(), 1, weights));
    let logits = tape.matmul(cos, w);
    let scaled = match matching_scale {
        MatchingScale::Scaled => tape.scale(logits, 1.0 / (2.0 * h as f64).sqrt()),
        MatchingScale::None => logits,
    };
    Ok(tape.sigmoid(scaled))
}

/// Mean binary cross entropy of positive-class probabilities against labels
/// in {-1, +1}, with probabilities clamped to [1e-12, 1 - 1e-12].
pub fn bce_loss(tape: &mut Tape, probs: NodeId, labels: &[i8]) -> NodeId {
    let n = tape.value(probs).rows;
    assert_eq!(tape.value(probs).cols, 1, "probabilities are a column");
    assert_eq!(n, labels.len(), "one label per probability");
    let clamped = tape.clamp(probs, 1e-12, 1.0 - 1e-12);
    let ln_p = tape.ln(clamped);
    let negated = tape.scale(clamped, -1.0);
    let one = tape.constant(Tensor::from_vec(1, 1, vec![1.0]));
    let one_minus = tape.add(negated, one);
    let ln_1mp = tape.ln(one_minus);
    let pos_mask: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { 0.0 }).collect();
    let neg_mask: Vec<f64> = labels.iter().map(|&l| if l == 1 { 0.0 } else { 1.0 }).collect();
    let pm = tape.constant(Tensor::from_vec(n, 1, pos_mask));
    let nm = tape.constant(Tensor::from_vec(n, 1, neg_mask));
    let pos_term = tape.mul(ln_p, pm);
    let neg_term = tape.mul(ln_1mp, nm);
    let picked = tape.add(pos_term, neg_term);
    let total = tape.sum_all(picked);
    tape.scale(total, -1.0 / n as f64)
}

/// Everything the forward pass produces, as tape nodes. Embedding nodes
/// back the export commands; `aam_weights` holds each head's softmax matrix
/// over the joint [support : query] stack when that attention ran.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// N^q x 1 positive-class probabilities.
    pub probs: NodeId,
    pub support_emb: NodeId,
    pub query_emb: NodeId,
    /// Encoder embeddings of the reference batch, when one was encoded.
    pub reference_emb: Option<NodeId>,
    pub support_aug: NodeId,
    pub query_aug: NodeId,
    pub anchors_initial: Option<NodeId>,
    pub anchors_augmented: Option<NodeId>,
    pub aam_weights: Vec<NodeId>,
}

impl ForwardOutput {
    pub fn probabilities(&self, tape: &Tape) -> Vec<f64> {
        tape.value(self.probs).data.clone()
    }

    /// Initial and (where computed) context-enriched anchors.
    pub fn anchor_set(&self, tape: &Tape) -> Option<AnchorSet> {
        let initial = tape.value(self.anchors_initial?).clone();
        let augmented = match self.anchors_augmented {
            Some(id) => tape.value(id).clone(),
            None => initial.clone(),
        };
        Some(AnchorSet { initial, augmented })
    }
}

/// Runs one episode through the selected ablation path.
pub fn forward_episode(
    tape: &mut Tape,
    params: &BoundParams,
    config: &ModelConfig,
    variant: Variant,
    batch: &EpisodeBatch,
    mask_query_to_query: bool,
) -> Result<ForwardOutput, ModelError> {
    class_counts(&batch.support_labels)?;
    let ns = batch.support.rows;
    let nq = batch.query.rows;
    if batch.support.cols != config.d {
        return Err(ModelError::RaggedFeatures {
            id: "support".to_string(),
            expected: config.d,
            got: batch.support.cols,
        });
    }
    if variant.uses_reference() && batch.reference.is_none() {
        return Err(ModelError::MissingReference);
    }

    // One encoder pass over every row of the episode.
    let mut features = batch.support.clone();
    let mut stack_rows = |t: &Tensor| {
        let mut data = std::mem::take(&mut features.data);
        data.extend_from_slice(&t.data);
        features = Tensor::from_vec(features.rows + t.rows, t.cols, data);
    };
    stack_rows(&batch.query);
    let reference_rows = if variant.uses_reference() {
        let reference = batch.reference.as_ref().unwrap();
        stack_rows(reference);
        reference.rows
    } else {
        0
    };
    let graphs: Option<Vec<Option<MolGraph>>> = match (&batch.support_graphs, &batch.query_graphs)
    {
        (Some(s), Some(q)) => {
            let mut all = s.clone();
            all.extend(q.iter().cloned());
            if variant.uses_reference() {
                match &batch.reference_graphs {
                    Some(r) => all.extend(r.iter().cloned()),
                    None => all.extend(std::iter::repeat_n(None, reference_rows)),
                }
            }
            Some(all)
        }
        _ => None,
    };

    let feats = tape.constant(features);
    let embedded = encode(tape, &params.encoder, feats, graphs.as_deref());
    let support_emb = tape.slice_rows(embedded, 0, ns);
    let query_emb = tape.slice_rows(embedded, ns, ns + nq);

    let mask = if mask_query_to_query && variant != Variant::EncoderOnly {
        let m = block_mask(ns + nq, |i, j| i >= ns && j >= ns);
        Some(tape.constant(m))
    } else {
        None
    };

    let mut aam_weights = Vec::new();
    let mut reference_emb_out = None;
    let (support_aug, query_aug, anchors_initial, anchors_augmented) = match variant {
        Variant::EncoderOnly => (support_emb, query_emb, None, None),
        Variant::Am => {
            let aam = params.aam.as_ref().expect("am params");
            let (s, q) =
                plain_augment(tape, support_emb, query_emb, aam, mask, Some(&mut aam_weights));
            (s, q, None, None)
        }
        Variant::Aam => {
            let anchors = initial_anchors(tape, support_emb, &batch.support_labels)?;
            let aam = params.aam.as_ref().expect("aam params");
            let (s, q) = anchor_augment(
                tape,
                support_emb,
                query_emb,
                anchors,
                aam,
                mask,
                Some(&mut aam_weights),
            );
            (s, q, Some(anchors), None)
        }
        Variant::Full => {
            let anchors = initial_anchors(tape, support_emb, &batch.support_labels)?;
            let reference_emb =
                tape.slice_rows(embedded, ns + nq, ns + nq + reference_rows);
            reference_emb_out = Some(reference_emb);
            let cam = params.cam.as_ref().expect("cam params");
            let enriched = context_augment(tape, anchors, reference_emb, cam);
            let aam = params.aam.as_ref().expect("aam params");
            let (s, q) = anchor_augment(
                tape,
                support_emb,
                query_emb,
                enriched,
                aam,
                mask,
                Some(&mut aam_weights),
            );
            (s, q, Some(anchors), Some(enriched))
        }
    };

    let probs = match_predict(
        tape,
        query_aug,
        support_aug,
        &batch.support_labels,
        config.matching_scale,
    )?;
    Ok(ForwardOutput {
        probs,
        support_emb,
        query_emb,
        reference_emb: reference_emb_out,
        support_aug,
        query_aug,
        anchors_initial,
        anchors_augmented,
        aam_weights,
    })
}
