//! Parameter storage, initialization, and tape registration.

use super::config::{Activation, EncoderConfig, ModelConfig, Variant};
use crate::ndiff::{NodeId, Tape, Tensor};
use crate::rng::Rng;

/// One attention head: row-space projections for queries, keys, values, and
/// the per-head output projection back to the row width.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// width x proj
    pub wq: Tensor,
    /// width x proj
    pub wk: Tensor,
    /// width x proj
    pub wv: Tensor,
    /// proj x width
    pub wo: Tensor,
}

/// All heads of one attention block over rows of a fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: Vec<HeadParams>,
    pub width: usize,
    pub proj: usize,
}

impl AttentionParams {
    fn init(rng: &mut Rng, heads: usize, width: usize, proj: usize) -> AttentionParams {
        let mut hs = Vec::with_capacity(heads);
        for _ in 0..heads {
            hs.push(HeadParams {
                wq: uniform_init(rng, width, proj),
                wk: uniform_init(rng, width, proj),
                wv: uniform_init(rng, width, proj),
                wo: uniform_init(rng, proj, width),
            });
        }
        AttentionParams { heads: hs, width, proj }
    }
}

/// Encoder weights. Both variants are affine chains; the GIN applies its
/// chain per atom inside message passing instead of once per molecule.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Mlp { layers: Vec<(Tensor, Tensor)>, activation: Activation },
    Gin { layers: Vec<(Tensor, Tensor)>, epsilon: f64 },
}

/// Every learnable tensor of one model instance. Which attention blocks
/// exist depends on the ablation variant; their widths depend on it too
/// (anchor-augmented attention runs on width-3h rows, the plain attention
/// ablation on width-h rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CraParams {
    pub encoder: EncoderParams,
    pub cam: Option<AttentionParams>,
    pub aam: Option<AttentionParams>,
}

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
fn uniform_init(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (rows as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| (rng.next_f64() * 2.0 - 1.0) * bound)
        .collect();
    Tensor::from_vec(rows, cols, data)
}

fn affine_chain(rng: &mut Rng, widths: &[usize]) -> Vec<(Tensor, Tensor)> {
    widths
        .windows(2)
        .map(|w| (uniform_init(rng, w[0], w[1]), Tensor::zeros(1, w[1])))
        .collect()
}

impl CraParams {
    /// Initializes parameters for `variant`. Each parameter group draws
    /// from its own derived stream, so the encoder starts identically
    /// across variants with the same seed.
    pub fn init(config: &ModelConfig, variant: Variant) -> CraParams {
        let root = Rng::new(config.seed);
        let mut enc_rng = root.derive("params-encoder", 0);
        let encoder = match &config.encoder {
            EncoderConfig::Mlp { hidden, activation } => {
                let mut widths = vec![config.d];
                widths.extend_from_slice(hidden);
                widths.push(config.h);
                EncoderParams::Mlp {
                    layers: affine_chain(&mut enc_rng, &widths),
                    activation: *activation,
                }
            }
            EncoderConfig::Gin { layers, epsilon } => {
                let mut widths = vec![config.d];
                widths.extend(std::iter::repeat_n(config.h, *layers));
                EncoderParams::Gin {
                    layers: affine_chain(&mut enc_rng, &widths),
                    epsilon: *epsilon,
                }
            }
        };

        let cam = match variant {
            Variant::Full => {
                let mut rng = root.derive("params-cam", 0);
                Some(AttentionParams::init(&mut rng, config.heads, config.h, config.d_k))
            }
            _ => None,
        };
        let aam = match variant {
            Variant::EncoderOnly => None,
            Variant::Am => {
                let mut rng = root.derive("params-aam", 0);
                Some(AttentionParams::init(&mut rng, config.heads, config.h, config.d_k))
            }
            Variant::Aam | Variant::Full => {
                let mut rng = root.derive("params-aam", 0);
                Some(AttentionParams::init(
                    &mut rng,
                    config.heads,
                    3 * config.h,
                    3 * config.d_k,
                ))
            }
        };
        CraParams { encoder, cam, aam }
    }

    /// Canonical (name, tensor) order used by the optimizer and checkpoint.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.encoder {
            EncoderParams::Mlp { layers, .. } | EncoderParams::Gin { layers, .. } => {
                for (i, (w, b)) in layers.iter().enumerate() {
                    out.push((format!("encoder.{i}.weight"), w));
                    out.push((format!("encoder.{i}.bias"), b));
                }
            }
        }
        for (group, block) in [("cam", &self.cam), ("aam", &self.aam)] {
            if let Some(block) = block {
                for (i, head) in block.heads.iter().enumerate() {
                    out.push((format!("{group}.{i}.wq"), &head.wq));
                    out.push((format!("{group}.{i}.wk"), &head.wk));
                    out.push((format!("{group}.{i}.wv"), &head.wv));
                    out.push((format!("{group}.{i}.wo"), &head.wo));
                }
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        match &mut self.encoder {
            EncoderParams::Mlp { layers, .. } | EncoderParams::Gin { layers, .. } => {
                for (i, (w, b)) in layers.iter_mut().enumerate() {
                    out.push((format!("encoder.{i}.weight"), w));
                    out.push((format!("encoder.{i}.bias"), b));
                }
            }
        }
        for (group, block) in [("cam", &mut self.cam), ("aam", &mut self.aam)] {
            if let Some(block) = block {
                for (i, head) in block.heads.iter_mut().enumerate() {
                    out.push((format!("{group}.{i}.wq"), &mut head.wq));
                    out.push((format!("{group}.{i}.wk"), &mut head.wk));
                    out.push((format!("{group}.{i}.wv"), &mut head.wv));
                    out.push((format!("{group}.{i}.wo"), &mut head.wo));
                }
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.rows * t.cols).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Puts every parameter on `tape` as a gradient-tracked input, mirroring
    /// the canonical order.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let encoder = match &self.encoder {
            EncoderParams::Mlp { layers, activation } => BoundEncoder::Mlp {
                layers: layers
                    .iter()
                    .map(|(w, b)| (tape.input(w.clone()), tape.input(b.clone())))
                    .collect(),
                activation: *activation,
            },
            EncoderParams::Gin { layers, epsilon } => BoundEncoder::Gin {
                layers: layers
                    .iter()
                    .map(|(w, b)| (tape.input(w.clone()), tape.input(b.clone())))
                    .collect(),
                epsilon: *epsilon,
            },
        };
        let bind_block = |tape: &mut Tape, block: &Option<AttentionParams>| {
            block.as_ref().map(|block| BoundAttention {
                heads: block
                    .heads
                    .iter()
                    .map(|h| BoundHead {
                        wq: tape.input(h.wq.clone()),
                        wk: tape.input(h.wk.clone()),
                        wv: tape.input(h.wv.clone()),
                        wo: tape.input(h.wo.clone()),
                    })
                    .collect(),
                proj: block.proj,
            })
        };
        let cam = bind_block(tape, &self.cam);
        let aam = bind_block(tape, &self.aam);
        BoundParams { encoder, cam, aam }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundHead {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

#[derive(Debug, Clone)]
pub struct BoundAttention {
    pub heads: Vec<BoundHead>,
    pub proj: usize,
}

#[derive(Debug, Clone)]
pub enum BoundEncoder {
    Mlp { layers: Vec<(NodeId, NodeId)>, activation: Activation },
    Gin { layers: Vec<(NodeId, NodeId)>, epsilon: f64 },
}

/// Tape-resident mirror of [`CraParams`], same canonical order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub encoder: BoundEncoder,
    pub cam: Option<BoundAttention>,
    pub aam: Option<BoundAttention>,
}

impl BoundParams {
    /// Node ids in the canonical parameter order.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        match &self.encoder {
            BoundEncoder::Mlp { layers, .. } | BoundEncoder::Gin { layers, .. } => {
                for (w, b) in layers {
                    out.push(*w);
                    out.push(*b);
                }
            }
        }
        for block in [&self.cam, &self.aam].into_iter().flatten() {
            for h in &block.heads {
                out.extend([h.wq, h.wk, h.wv, h.wo]);
            }
        }
        out
    }

    /// Gradients in canonical order after a backward pass; parameters the
    /// loss never touched yield zero tensors.
    pub fn gradients(&self, tape: &Tape) -> Vec<Tensor> {
        self.node_ids()
            .into_iter()
            .map(|id| {
                let v = tape.value(id);
                tape.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(v.rows, v.cols))
            })
            .collect()
    }
}
