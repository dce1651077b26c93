//! Multi-head attention and its residual wrapper.
//!
//! Each head projects queries, keys, and values, applies row softmax over
//! scaled dot products, projects the result back to the row width, and the
//! heads are summed (per-head output projection then summation, not the
//! concat-heads convention). The residual form adds the input back; there
//! is no layer norm and no feed-forward sublayer.

use super::params::BoundAttention;
use crate::ndiff::{NodeId, Tape, Tensor};

/// Attention logit offset that drives a softmax weight to zero.
pub const MASK_OFF: f64 = -1e30;

/// Additive attention mask: entry (i, j) is added to the logit of query row
/// i attending key row j, in every head. Build with 0 for allowed pairs and
/// [`MASK_OFF`] for blocked ones.
pub fn block_mask(n: usize, blocked: impl Fn(usize, usize) -> bool) -> Tensor {
    let mut m = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if blocked(i, j) {
                m.set(i, j, MASK_OFF);
            }
        }
    }
    m
}

/// Sum over heads of softmax(Q Wq (K Wk)^T / sqrt(proj) + mask) V Wv Wo.
///
/// `weights_out` collects each head's softmax matrix for callers that
/// export attention maps.
pub fn mha(
    tape: &mut Tape,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    params: &BoundAttention,
    mask: Option<NodeId>,
    mut weights_out: Option<&mut Vec<NodeId>>,
) -> NodeId {
    assert!(!params.heads.is_empty(), "attention needs at least one head");
    let scale = 1.0 / (params.proj as f64).sqrt();
    let mut out: Option<NodeId> = None;
    for head in &params.heads {
        let qp = tape.matmul(q, head.wq);
        let kp = tape.matmul(k, head.wk);
        let kt = tape.transpose(kp);
        let raw = tape.matmul(qp, kt);
        let mut logits = tape.scale(raw, scale);
        if let Some(mask) = mask {
            logits = tape.add(logits, mask);
        }
        let weights = tape.softmax_rows(logits);
        if let Some(sink) = weights_out.as_deref_mut() {
            sink.push(weights);
        }
        let vp = tape.matmul(v, head.wv);
        let mixed = tape.matmul(weights, vp);
        let head_out = tape.matmul(mixed, head.wo);
        out = Some(match out {
            None => head_out,
            Some(acc) => tape.add(acc, head_out),
        });
    }
    out.unwrap()
}

/// x + mha(x, x, x)
pub fn r_mha(
    tape: &mut Tape,
    x: NodeId,
    params: &BoundAttention,
    mask: Option<NodeId>,
    weights_out: Option<&mut Vec<NodeId>>,
) -> NodeId {
    let attended = mha(tape, x, x, x, params, mask, weights_out);
    tape.add(x, attended)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{AttentionParams, HeadParams};
    use crate::model::testutil::{mha_by_hand, random_block, random_tensor};
    use crate::rng::Rng;

    fn bind(tape: &mut Tape, block: &AttentionParams) -> BoundAttention {
        let params = crate::model::CraParams {
            encoder: crate::model::EncoderParams::Mlp {
                layers: vec![],
                activation: crate::model::Activation::Relu,
            },
            cam: Some(block.clone()),
            aam: None,
        };
        params.bind(tape).cam.unwrap()
    }

    #[test]
    fn single_key_attention_weight_is_one() {
        // With one key/value row the softmax is 1 regardless of contents,
        // so the output is V Wv Wo summed over heads.
        let block = random_block(1, 3, 4, 4);
        let mut rng = Rng::new(2);
        let q = random_tensor(&mut rng, 5, 4);
        let kv = random_tensor(&mut rng, 1, 4);

        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let qn = tape.constant(q);
        let kn = tape.constant(kv.clone());
        let got = mha(&mut tape, qn, kn, kn, &bound, None, None);

        let mut expect = Tensor::zeros(1, 4);
        for head in &block.heads {
            let vw = kv.matmul(&head.wv).matmul(&head.wo);
            expect = expect.add(&vw);
        }
        let got = tape.value(got);
        for i in 0..5 {
            for j in 0..4 {
                assert!((got.get(i, j) - expect.get(0, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_output_projection_gives_zero() {
        let mut block = random_block(3, 2, 4, 4);
        for head in &mut block.heads {
            head.wo = Tensor::zeros(4, 4);
        }
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let x = tape.constant(random_tensor(&mut Rng::new(4), 3, 4));
        let out = mha(&mut tape, x, x, x, &bound, None, None);
        assert!(tape.value(out).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_head_two_by_two_matches_hand_evaluation() {
        // Hand-pickable numbers, H=1, evaluated by the independent
        // plain-loop oracle.
        let head = HeadParams {
            wq: Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            wk: Tensor::from_vec(2, 2, vec![0.5, 0.0, 0.0, 2.0]),
            wv: Tensor::from_vec(2, 2, vec![1.0, 1.0, 0.0, 1.0]),
            wo: Tensor::from_vec(2, 2, vec![2.0, 0.0, 1.0, 1.0]),
        };
        let block = AttentionParams { heads: vec![head], width: 2, proj: 2 };
        let x = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]);

        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let xn = tape.constant(x.clone());
        let got = mha(&mut tape, xn, xn, xn, &bound, None, None);
        let expect = mha_by_hand(&x, &x, &x, &block, None);
        let got = tape.value(got);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (got.get(i, j) - expect.get(i, j)).abs() < 1e-12,
                    "({i},{j}): {} vs {}",
                    got.get(i, j),
                    expect.get(i, j)
                );
            }
        }
        // Spot-check one softmax weight by hand: row 0 logits are
        // q0 Wq . (x Wk) / sqrt(2) with q0 Wq = [1, 2], keys [0.5, 4] and
        // [-0.5, 1], so logits = (0.5 + 8)/sqrt2 and (-0.5 + 2)/sqrt2.
        let l0 = 8.5 / 2f64.sqrt();
        let l1 = 1.5 / 2f64.sqrt();
        let w00 = (l0 - l0).exp() / ((l0 - l0).exp() + (l1 - l0).exp());
        // Row 0 of V Wv: [1, 3]; row 1: [-1, -0.5]; output row 0 before Wo.
        let mixed = [
            w00 * 1.0 - (1.0 - w00),
            w00 * 3.0 + (1.0 - w00) * -0.5,
        ];
        let out00 = mixed[0] * 2.0 + mixed[1] * 1.0;
        assert!((got.get(0, 0) - out00).abs() < 1e-12);
    }

    #[test]
    fn multi_head_random_matches_hand_evaluation() {
        let block = random_block(5, 4, 6, 6);
        let mut rng = Rng::new(6);
        let q = random_tensor(&mut rng, 3, 6);
        let kv = random_tensor(&mut rng, 7, 6);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let qn = tape.constant(q.clone());
        let kn = tape.constant(kv.clone());
        let got = mha(&mut tape, qn, kn, kn, &bound, None, None);
        let expect = mha_by_hand(&q, &kv, &kv, &block, None);
        let got = tape.value(got);
        for i in 0..3 {
            for j in 0..6 {
                assert!((got.get(i, j) - expect.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_with_zero_values_is_identity() {
        let mut block = random_block(7, 2, 4, 4);
        for head in &mut block.heads {
            head.wv = Tensor::zeros(4, 4);
        }
        let x = random_tensor(&mut Rng::new(8), 5, 4);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let xn = tape.constant(x.clone());
        let out = r_mha(&mut tape, xn, &bound, None, None);
        assert_eq!(tape.value(out).data, x.data);
    }

    #[test]
    fn residual_output_shape_matches_input() {
        let block = random_block(9, 2, 4, 4);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let x = tape.constant(random_tensor(&mut Rng::new(10), 5, 4));
        let out = r_mha(&mut tape, x, &bound, None, None);
        assert_eq!(tape.value(out).shape(), (5, 4));
    }

    #[test]
    fn permuting_rows_permutes_self_attention_output() {
        let block = random_block(11, 2, 4, 4);
        let x = random_tensor(&mut Rng::new(12), 4, 4);
        let perm = [2usize, 0, 3, 1];
        let mut px = Tensor::zeros(4, 4);
        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..4 {
                px.set(new_row, j, x.get(old_row, j));
            }
        }

        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let xn = tape.constant(x);
        let base_id = r_mha(&mut tape, xn, &bound, None, None);
        let base = tape.value(base_id).clone();

        let mut tape2 = Tape::new();
        let bound2 = bind(&mut tape2, &block);
        let pxn = tape2.constant(px);
        let permuted_id = r_mha(&mut tape2, pxn, &bound2, None, None);
        let permuted = tape2.value(permuted_id).clone();

        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..4 {
                assert!(
                    (permuted.get(new_row, j) - base.get(old_row, j)).abs() < 1e-12,
                    "row {new_row} col {j}"
                );
            }
        }
    }

    #[test]
    fn mask_blocks_attention_pairs() {
        // Block row 0 from attending row 1 in a 2-row block; row 0 then
        // attends only itself, reproducing single-key attention.
        let block = random_block(13, 2, 4, 4);
        let x = random_tensor(&mut Rng::new(14), 2, 4);
        let mask = block_mask(2, |i, j| i == 0 && j == 1);

        let mut tape = Tape::new();
        let bound = bind(&mut tape, &block);
        let xn = tape.constant(x.clone());
        let mn = tape.constant(mask.clone());
        let masked_id = mha(&mut tape, xn, xn, xn, &bound, Some(mn), None);
        let masked = tape.value(masked_id).clone();

        let expect = mha_by_hand(&x, &x, &x, &block, Some(&mask));
        for j in 0..4 {
            assert!((masked.get(0, j) - expect.get(0, j)).abs() < 1e-12);
        }

        // Row 0 must equal attention over itself alone.
        let row0 = Tensor::from_vec(1, 4, x.row(0).to_vec());
        let mut tape2 = Tape::new();
        let bound2 = bind(&mut tape2, &block);
        let rn = tape2.constant(row0);
        let solo_id = mha(&mut tape2, rn, rn, rn, &bound2, None, None);
        let solo = tape2.value(solo_id).clone();
        for j in 0..4 {
            assert!((masked.get(0, j) - solo.get(0, j)).abs() < 1e-12);
        }
    }
}
