//! Reverse-mode autodiff over an arena of operation records.
//!
//! Nodes are appended in evaluation order, so creation order is already a
//! topological order; backward walks it once in reverse, accumulating
//! gradients by summation across fan-out. Shape violations are programming
//! errors and panic with the op name and both shapes.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Same shape, or right side 1×c broadcast over the left's rows.
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    /// Weighted row mean with constant weights; output is 1×cols.
    MeanRowsMasked(NodeId, Vec<f64>),
    L2NormalizeRows(NodeId),
    Ln(NodeId),
    Clamp(NodeId, f64, f64),
    SumAll(NodeId),
    RepeatRow(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Norm floor for row normalization; rows below it are scaled by 1/floor,
/// which sends true zero rows to zero instead of NaN.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn shape_panic(op: &str, got: (usize, usize), expected: &str) -> ! {
    panic!("{op}: shape mismatch, got {}x{}, expected {expected}", got.0, got.1)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Leaf that participates in gradients (a parameter or checked input).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from gradients (data, masks).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward() target w.r.t. `id`, if it flowed.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols != bv.rows {
            shape_panic("matmul", bv.shape(), &format!("{}xN", av.cols));
        }
        let value = av.matmul(bv);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = if av.shape() == bv.shape() {
            av.add(bv)
        } else if bv.rows == 1 && bv.cols == av.cols {
            let mut out = av.clone();
            for i in 0..out.rows {
                for j in 0..out.cols {
                    out.data[i * out.cols + j] += bv.data[j];
                }
            }
            out
        } else {
            shape_panic("add", bv.shape(), &format!("{}x{} or 1x{}", av.rows, av.cols, av.cols));
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            shape_panic("mul", bv.shape(), &format!("{}x{}", av.rows, av.cols));
        }
        let value = av.hadamard(bv);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a.0].value.scale(c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols != bv.cols {
            shape_panic("concat_rows", bv.shape(), &format!("Nx{}", av.cols));
        }
        let mut data = Vec::with_capacity((av.rows + bv.rows) * av.cols);
        data.extend_from_slice(&av.data);
        data.extend_from_slice(&bv.data);
        let value = Tensor::from_vec(av.rows + bv.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::ConcatRows(a, b), rg)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows != bv.rows {
            shape_panic("concat_cols", bv.shape(), &format!("{}xN", av.rows));
        }
        let cols = av.cols + bv.cols;
        let mut value = Tensor::zeros(av.rows, cols);
        for i in 0..av.rows {
            value.data[i * cols..i * cols + av.cols]
                .copy_from_slice(av.row(i));
            value.data[i * cols + av.cols..(i + 1) * cols].copy_from_slice(bv.row(i));
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::ConcatCols(a, b), rg)
    }

    pub fn slice_rows(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let av = &self.nodes[a.0].value;
        if !(from < to && to <= av.rows) {
            shape_panic("slice_rows", av.shape(), &format!("rows covering {from}..{to}"));
        }
        let value = Tensor::from_vec(
            to - from,
            av.cols,
            av.data[from * av.cols..to * av.cols].to_vec(),
        );
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, from, to), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let av = &self.nodes[a.0].value;
        if !(from < to && to <= av.cols) {
            shape_panic("slice_cols", av.shape(), &format!("cols covering {from}..{to}"));
        }
        let mut value = Tensor::zeros(av.rows, to - from);
        for i in 0..av.rows {
            value.data[i * (to - from)..(i + 1) * (to - from)]
                .copy_from_slice(&av.row(i)[from..to]);
        }
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, from, to), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = Tensor {
            rows: self.nodes[a.0].value.rows,
            cols: self.nodes[a.0].value.cols,
            data: self.nodes[a.0].value.data.iter().map(|&x| x.max(0.0)).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = Tensor {
            rows: self.nodes[a.0].value.rows,
            cols: self.nodes[a.0].value.cols,
            data: self.nodes[a.0].value.data.iter().map(|&x| x.tanh()).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = Tensor {
            rows: self.nodes[a.0].value.rows,
            cols: self.nodes[a.0].value.cols,
            data: self.nodes[a.0].value.data.iter()
                .map(|&x| 1.0 / (1.0 + (-x).exp()))
                .collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Row-wise softmax with max subtraction for overflow safety.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let mut value = Tensor::zeros(av.rows, av.cols);
        for i in 0..av.rows {
            let row = av.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                value.data[i * av.cols + j] = e;
                sum += e;
            }
            for j in 0..av.cols {
                value.data[i * av.cols + j] /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Weighted mean over rows; `mask` entries are fixed weights (not
    /// differentiated) and must not sum to zero.
    pub fn mean_rows_masked(&mut self, a: NodeId, mask: &[f64]) -> NodeId {
        let av = &self.nodes[a.0].value;
        if mask.len() != av.rows {
            shape_panic("mean_rows_masked", (mask.len(), 1), &format!("{}x1", av.rows));
        }
        let total: f64 = mask.iter().sum();
        assert!(total != 0.0, "mean_rows_masked: mask weights sum to zero");
        let mut value = Tensor::zeros(1, av.cols);
        for (i, &w) in mask.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for j in 0..av.cols {
                value.data[j] += w * av.data[i * av.cols + j];
            }
        }
        for v in &mut value.data {
            *v /= total;
        }
        let rg = self.rg(a);
        self.push(value, Op::MeanRowsMasked(a, mask.to_vec()), rg)
    }

    /// Rows scaled to unit L2 norm; rows with norm below NORM_FLOOR are
    /// scaled by 1/NORM_FLOOR, so exact zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let mut value = Tensor::zeros(av.rows, av.cols);
        for i in 0..av.rows {
            let row = av.row(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = norm.max(NORM_FLOOR);
            for (j, &x) in row.iter().enumerate() {
                value.data[i * av.cols + j] = x / denom;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::L2NormalizeRows(a), rg)
    }

    /// Natural log; the input must be strictly positive (clamp first).
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        assert!(
            av.data.iter().all(|&x| x > 0.0),
            "ln: non-positive input"
        );
        let value = Tensor {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().map(|x| x.ln()).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Ln(a), rg)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo < hi, "clamp: lo must be below hi");
        let av = &self.nodes[a.0].value;
        let value = Tensor {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().map(|x| x.clamp(lo, hi)).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::from_vec(1, 1, vec![self.nodes[a.0].value.data.iter().sum()]);
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    /// Tiles a 1×c row n times.
    pub fn repeat_row(&mut self, a: NodeId, n: usize) -> NodeId {
        let av = &self.nodes[a.0].value;
        if av.rows != 1 {
            shape_panic("repeat_row", av.shape(), "1xN");
        }
        assert!(n > 0, "repeat_row: zero repetitions");
        let mut data = Vec::with_capacity(n * av.cols);
        for _ in 0..n {
            data.extend_from_slice(&av.data);
        }
        let value = Tensor::from_vec(n, av.cols, data);
        let rg = self.rg(a);
        self.push(value, Op::RepeatRow(a, n), rg)
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    /// Reverse sweep from a 1×1 loss node. Gradients land in `grad(id)`;
    /// a prior backward's gradients are cleared first.
    pub fn backward(&mut self, loss: NodeId) {
        let shape = self.nodes[loss.0].value.shape();
        assert_eq!(shape, (1, 1), "backward: loss must be 1x1, got {shape:?}");
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Tensor::from_vec(1, 1, vec![1.0]));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].clone() else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let bt = self.nodes[b.0].value.transpose();
                    let at = self.nodes[a.0].value.transpose();
                    self.accumulate(a, g.matmul(&bt));
                    self.accumulate(b, at.matmul(&g));
                }
                Op::Add(a, b) => {
                    let bshape = self.nodes[b.0].value.shape();
                    self.accumulate(a, g.clone());
                    if bshape == g.shape() {
                        self.accumulate(b, g);
                    } else {
                        // Broadcast bias: sum over rows.
                        let mut gb = Tensor::zeros(1, g.cols);
                        for i in 0..g.rows {
                            for j in 0..g.cols {
                                gb.data[j] += g.data[i * g.cols + j];
                            }
                        }
                        self.accumulate(b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(&self.nodes[b.0].value);
                    let gb = g.hadamard(&self.nodes[a.0].value);
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Scale(a, c) => self.accumulate(a, g.scale(c)),
                Op::ConcatRows(a, b) => {
                    let ra = self.nodes[a.0].value.rows;
                    let cols = g.cols;
                    let ga = Tensor::from_vec(ra, cols, g.data[..ra * cols].to_vec());
                    let gb = Tensor::from_vec(g.rows - ra, cols, g.data[ra * cols..].to_vec());
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.cols;
                    let mut ga = Tensor::zeros(g.rows, ca);
                    let mut gb = Tensor::zeros(g.rows, g.cols - ca);
                    for i in 0..g.rows {
                        ga.data[i * ca..(i + 1) * ca].copy_from_slice(&g.row(i)[..ca]);
                        gb.data[i * (g.cols - ca)..(i + 1) * (g.cols - ca)]
                            .copy_from_slice(&g.row(i)[ca..]);
                    }
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::SliceRows(a, from, _to) => {
                    let av_shape = self.nodes[a.0].value.shape();
                    let mut ga = Tensor::zeros(av_shape.0, av_shape.1);
                    ga.data[from * g.cols..from * g.cols + g.data.len()]
                        .copy_from_slice(&g.data);
                    self.accumulate(a, ga);
                }
                Op::SliceCols(a, from, to) => {
                    let av_shape = self.nodes[a.0].value.shape();
                    let mut ga = Tensor::zeros(av_shape.0, av_shape.1);
                    for i in 0..g.rows {
                        ga.data[i * av_shape.1 + from..i * av_shape.1 + to]
                            .copy_from_slice(g.row(i));
                    }
                    self.accumulate(a, ga);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let data = g.data.iter().zip(&x.data)
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    self.accumulate(a, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let data = g.data.iter().zip(&y.data)
                        .map(|(&gi, &yi)| gi * (1.0 - yi * yi))
                        .collect();
                    self.accumulate(a, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let data = g.data.iter().zip(&y.data)
                        .map(|(&gi, &yi)| gi * yi * (1.0 - yi))
                        .collect();
                    self.accumulate(a, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[idx].value;
                    let mut ga = Tensor::zeros(g.rows, g.cols);
                    for i in 0..g.rows {
                        let dot: f64 = (0..g.cols)
                            .map(|j| g.data[i * g.cols + j] * y.data[i * g.cols + j])
                            .sum();
                        for j in 0..g.cols {
                            ga.data[i * g.cols + j] =
                                y.data[i * g.cols + j] * (g.data[i * g.cols + j] - dot);
                        }
                    }
                    self.accumulate(a, ga);
                }
                Op::Transpose(a) => self.accumulate(a, g.transpose()),
                Op::MeanRowsMasked(a, mask) => {
                    let total: f64 = mask.iter().sum();
                    let av_shape = self.nodes[a.0].value.shape();
                    let mut ga = Tensor::zeros(av_shape.0, av_shape.1);
                    for (i, &w) in mask.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..av_shape.1 {
                            ga.data[i * av_shape.1 + j] = w / total * g.data[j];
                        }
                    }
                    self.accumulate(a, ga);
                }
                Op::L2NormalizeRows(a) => {
                    let x = &self.nodes[a.0].value;
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for i in 0..x.rows {
                        let row = x.row(i);
                        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let denom = norm.max(NORM_FLOOR);
                        let grow = &g.data[i * x.cols..(i + 1) * x.cols];
                        let ga_row = &mut ga.data[i * x.cols..(i + 1) * x.cols];
                        if norm > NORM_FLOOR {
                            let xg: f64 = row.iter().zip(grow).map(|(&xv, &gv)| xv * gv).sum();
                            for (out, (&xv, &gv)) in ga_row.iter_mut().zip(row.iter().zip(grow)) {
                                *out = gv / denom - xv * xg / (denom * denom * denom);
                            }
                        } else {
                            for (out, &gv) in ga_row.iter_mut().zip(grow) {
                                *out = gv / denom;
                            }
                        }
                    }
                    self.accumulate(a, ga);
                }
                Op::Ln(a) => {
                    let x = &self.nodes[a.0].value;
                    let data = g.data.iter().zip(&x.data).map(|(&gi, &xi)| gi / xi).collect();
                    self.accumulate(a, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[a.0].value;
                    let data = g.data.iter().zip(&x.data)
                        .map(|(&gi, &xi)| if xi > lo && xi < hi { gi } else { 0.0 })
                        .collect();
                    self.accumulate(a, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::SumAll(a) => {
                    let av_shape = self.nodes[a.0].value.shape();
                    let mut ga = Tensor::zeros(av_shape.0, av_shape.1);
                    ga.data.fill(g.data[0]);
                    self.accumulate(a, ga);
                }
                Op::RepeatRow(a, _n) => {
                    let cols = self.nodes[a.0].value.cols;
                    let mut ga = Tensor::zeros(1, cols);
                    for i in 0..g.rows {
                        for j in 0..cols {
                            ga.data[j] += g.data[i * cols + j];
                        }
                    }
                    self.accumulate(a, ga);
                }
            }
        }
    }
}
