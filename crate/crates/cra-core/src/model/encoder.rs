//! Shared molecule encoder: feature rows in, embedding rows out.

use super::config::Activation;
use super::params::BoundEncoder;
use crate::chem::MolGraph;
use crate::ndiff::{NodeId, Tape, Tensor};

fn activate(tape: &mut Tape, x: NodeId, activation: Activation) -> NodeId {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
    }
}

/// Affine+activation chain; the last affine is left bare.
fn mlp_chain(
    tape: &mut Tape,
    x: NodeId,
    layers: &[(NodeId, NodeId)],
    activation: Activation,
) -> NodeId {
    let mut cur = x;
    for (i, (w, b)) in layers.iter().enumerate() {
        let lin = tape.matmul(cur, *w);
        cur = tape.add(lin, *b);
        if i + 1 < layers.len() {
            cur = activate(tape, cur, activation);
        }
    }
    cur
}

/// (1+eps)I + adjacency, the per-layer aggregation operator.
fn gin_operator(graph: Option<&MolGraph>, epsilon: f64) -> Tensor {
    let n = graph.map(|g| g.atoms.len().max(1)).unwrap_or(1);
    let mut op = Tensor::zeros(n, n);
    for i in 0..n {
        op.set(i, i, 1.0 + epsilon);
    }
    if let Some(g) = graph {
        for bond in &g.bonds {
            op.set(bond.a, bond.b, 1.0);
            op.set(bond.b, bond.a, 1.0);
        }
    }
    op
}

/// Encodes feature rows (n x d) to embeddings (n x h).
///
/// The MLP applies its chain once per row. The GIN broadcasts each row to
/// every atom of that molecule's bond graph, runs `layers` rounds of
/// aggregate-then-affine node updates (aggregate = (1+eps) * self + sum of
/// neighbors, ReLU between rounds, last round bare), and sum-pools the atom
/// states. Rows without a graph are single-atom graphs, for which the GIN
/// collapses to the plain affine chain.
pub fn encode(
    tape: &mut Tape,
    encoder: &BoundEncoder,
    features: NodeId,
    graphs: Option<&[Option<MolGraph>]>,
) -> NodeId {
    match encoder {
        BoundEncoder::Mlp { layers, activation } => {
            assert!(!layers.is_empty(), "encoder has no layers");
            mlp_chain(tape, features, layers, *activation)
        }
        BoundEncoder::Gin { layers, epsilon } => {
            assert!(!layers.is_empty(), "encoder has no layers");
            let n = tape.value(features).rows;
            if let Some(graphs) = graphs {
                assert_eq!(graphs.len(), n, "one graph slot per feature row");
            }
            let mut pooled: Option<NodeId> = None;
            for row in 0..n {
                let graph = graphs.and_then(|g| g[row].as_ref());
                let op = gin_operator(graph, *epsilon);
                let atoms = op.rows;
                let feat_row = tape.slice_rows(features, row, row + 1);
                let mut nodes = tape.repeat_row(feat_row, atoms);
                let op = tape.constant(op);
                for (i, (w, b)) in layers.iter().enumerate() {
                    let agg = tape.matmul(op, nodes);
                    let lin = tape.matmul(agg, *w);
                    nodes = tape.add(lin, *b);
                    if i + 1 < layers.len() {
                        nodes = tape.relu(nodes);
                    }
                }
                let ones = tape.constant(Tensor::from_vec(1, atoms, vec![1.0; atoms]));
                let mol = tape.matmul(ones, nodes);
                pooled = Some(match pooled {
                    None => mol,
                    Some(acc) => tape.concat_rows(acc, mol),
                });
            }
            pooled.expect("at least one row")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::model::config::{EncoderConfig, MatchingScale, ModelConfig, Variant};
    use crate::model::params::CraParams;
    use crate::rng::Rng;

    fn config(encoder: EncoderConfig) -> ModelConfig {
        ModelConfig {
            d: 3,
            h: 4,
            heads: 1,
            d_k: 4,
            encoder,
            m: 1,
            matching_scale: MatchingScale::Scaled,
            mask_queries: false,
            seed: 11,
        }
    }

    fn random_features(seed: u64, rows: usize, cols: usize) -> Tensor {
        let mut rng = Rng::new(seed);
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.next_normal()).collect())
    }

    #[test]
    fn identical_rows_encode_identically() {
        for encoder in [
            EncoderConfig::Mlp { hidden: vec![5], activation: Activation::Relu },
            EncoderConfig::Gin { layers: 2, epsilon: 0.2 },
        ] {
            let c = config(encoder);
            let p = CraParams::init(&c, Variant::EncoderOnly);
            let mut tape = Tape::new();
            let bound = p.bind(&mut tape);
            let row: Vec<f64> = vec![0.3, -1.2, 0.8];
            let mut data = row.clone();
            data.extend_from_slice(&row);
            let x = tape.constant(Tensor::from_vec(2, 3, data));
            let out = encode(&mut tape, &bound.encoder, x, None);
            let out = tape.value(out);
            assert_eq!(out.shape(), (2, 4));
            assert_eq!(out.row(0), out.row(1));
        }
    }

    #[test]
    fn single_affine_identity_weights_pass_input_through() {
        let c = ModelConfig {
            d: 4,
            ..config(EncoderConfig::Mlp { hidden: vec![], activation: Activation::Relu })
        };
        let mut p = CraParams::init(&c, Variant::EncoderOnly);
        let crate::model::EncoderParams::Mlp { layers, .. } = &mut p.encoder else { panic!() };
        assert_eq!(layers.len(), 1);
        let mut eye = Tensor::zeros(4, 4);
        for i in 0..4 {
            eye.set(i, i, 1.0);
        }
        layers[0].0 = eye;

        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let x = random_features(12, 3, 4);
        let xn = tape.constant(x.clone());
        let out = encode(&mut tape, &bound.encoder, xn, None);
        assert_eq!(tape.value(out).data, x.data);
    }

    #[test]
    fn gin_without_neighbors_equals_the_affine_chain() {
        // Single-atom molecule, eps = 0: aggregation is the identity, so
        // the GIN is exactly the MLP chain with the same weights.
        let gin_cfg = config(EncoderConfig::Gin { layers: 2, epsilon: 0.0 });
        let gin = CraParams::init(&gin_cfg, Variant::EncoderOnly);

        let mlp_cfg = config(EncoderConfig::Mlp { hidden: vec![4], activation: Activation::Relu });
        let mut mlp = CraParams::init(&mlp_cfg, Variant::EncoderOnly);
        {
            let crate::model::EncoderParams::Gin { layers: gl, .. } = &gin.encoder else {
                panic!()
            };
            let crate::model::EncoderParams::Mlp { layers: ml, .. } = &mut mlp.encoder else {
                panic!()
            };
            ml.clone_from(gl);
        }

        let methane = parse_smiles("C").unwrap().graph;
        let x = random_features(13, 1, 3);

        let mut t1 = Tape::new();
        let b1 = gin.bind(&mut t1);
        let xn = t1.constant(x.clone());
        let graphs = vec![Some(methane)];
        let got_id = encode(&mut t1, &b1.encoder, xn, Some(&graphs));
        let got = t1.value(got_id).clone();

        let mut t2 = Tape::new();
        let b2 = mlp.bind(&mut t2);
        let xn2 = t2.constant(x);
        let want_id = encode(&mut t2, &b2.encoder, xn2, None);
        let want = t2.value(want_id).clone();
        assert_eq!(got.data, want.data);
    }

    #[test]
    fn gin_missing_graph_is_a_single_atom() {
        let c = config(EncoderConfig::Gin { layers: 2, epsilon: 0.0 });
        let p = CraParams::init(&c, Variant::EncoderOnly);
        let x = random_features(14, 1, 3);

        let mut t1 = Tape::new();
        let b1 = p.bind(&mut t1);
        let xn = t1.constant(x.clone());
        let methane = vec![Some(parse_smiles("C").unwrap().graph)];
        let with_id = encode(&mut t1, &b1.encoder, xn, Some(&methane));
        let with_graph = t1.value(with_id).clone();

        let mut t2 = Tape::new();
        let b2 = p.bind(&mut t2);
        let xn2 = t2.constant(x);
        let none = vec![None];
        let without_id = encode(&mut t2, &b2.encoder, xn2, Some(&none));
        let without = t2.value(without_id).clone();
        assert_eq!(with_graph.data, without.data);
    }

    #[test]
    fn gin_two_atom_molecule_matches_hand_evaluation() {
        let c = config(EncoderConfig::Gin { layers: 2, epsilon: 0.25 });
        let p = CraParams::init(&c, Variant::EncoderOnly);
        let crate::model::EncoderParams::Gin { layers, epsilon } = &p.encoder else { panic!() };
        let x = random_features(15, 1, 3);
        let ethane = parse_smiles("CC").unwrap().graph;

        // Both atoms share the broadcast features, so each round keeps the
        // two node states equal: state = affine((1 + eps + 1) * state).
        let mut state: Vec<f64> = x.row(0).to_vec();
        for (i, (w, b)) in layers.iter().enumerate() {
            let scaled: Vec<f64> = state.iter().map(|v| v * (2.0 + epsilon)).collect();
            let mut next = vec![0.0; w.cols];
            for (j, out) in next.iter_mut().enumerate() {
                for (t, s) in scaled.iter().enumerate() {
                    *out += s * w.get(t, j);
                }
                *out += b.get(0, j);
            }
            if i + 1 < layers.len() {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            state = next;
        }
        let pooled: Vec<f64> = state.iter().map(|v| 2.0 * v).collect();

        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xn = tape.constant(x);
        let graphs = vec![Some(ethane)];
        let got_id = encode(&mut tape, &bound.encoder, xn, Some(&graphs));
        let got = tape.value(got_id).clone();
        for (a, b) in got.data.iter().zip(&pooled) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gin_gradients_flow_to_weights() {
        let c = config(EncoderConfig::Gin { layers: 2, epsilon: 0.1 });
        let p = CraParams::init(&c, Variant::EncoderOnly);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let x = tape.constant(random_features(16, 2, 3));
        let graphs = vec![Some(parse_smiles("CCO").unwrap().graph), None];
        let out = encode(&mut tape, &bound.encoder, x, Some(&graphs));
        let loss = tape.sum_all(out);
        tape.backward(loss);
        let grads = bound.gradients(&tape);
        assert!(grads.iter().any(|g| g.data.iter().any(|&v| v != 0.0)));
        assert!(grads.iter().all(|g| g.is_finite()));
    }
}
