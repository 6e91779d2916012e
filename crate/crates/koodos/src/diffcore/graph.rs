//! Wengert-list computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is rebuilt for every training step: operations evaluate
//! eagerly, record their operands, and [`Graph::backward`] walks the tape
//! in reverse accumulating adjoints. Only the bias-row broadcast
//! (`(m,n) op (1,n)`) is supported; other shape combinations are rejected
//! so the gradient code stays auditable.

use super::tensor::{check_finite, gemm};
use super::{DiffError, Tensor};

/// Probabilities fed to the BCE loss are clamped to `[EPS, 1-EPS]`.
const BCE_EPS: f64 = 1e-12;

/// Rows with an L2 norm at or below this contribute a zero subgradient.
const NORM_GUARD: f64 = 1e-150;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { trainable: bool },
    MatMul,
    /// Elementwise add; `broadcast` marks the `(m,n) + (1,n)` bias form.
    Add { broadcast: bool },
    Sub { broadcast: bool },
    Mul,
    Scale(f64),
    Relu,
    Sigmoid,
    Tanh,
    Sum,
    Mean,
    Transpose,
    Reshape,
    SliceRows { start: usize },
    SliceCols { start: usize },
    ConcatRows,
    ConcatCols,
    MseLoss,
    BceLoss,
    SoftmaxCeLoss,
    SquaredL2Distance,
    RowsL2NormSum,
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients returned by [`Graph::backward`], keyed by node id.
///
/// Only trainable leaves carry gradients; querying anything else (or a
/// leaf created after the loss node) is a [`DiffError::Detached`] error.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Result<&Tensor, DiffError> {
        self.grads
            .get(id.0)
            .and_then(Option::as_ref)
            .ok_or(DiffError::Detached { id: id.0 })
    }

    pub fn take(&mut self, id: NodeId) -> Result<Tensor, DiffError> {
        self.grads
            .get_mut(id.0)
            .and_then(Option::take)
            .ok_or(DiffError::Detached { id: id.0 })
    }
}

/// Dynamic computation tape. Single-threaded per training run.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-trainable leaf (data, constants).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: false }, vec![], value)
    }

    /// Trainable leaf; `backward` reports its gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: true }, vec![], value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let requires_grad = match op {
            Op::Leaf { trainable } => trainable,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(Op::MatMul, vec![a, b], value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.elementwise_or_broadcast(a, b, "add", |x, y| x + y, false)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.elementwise_or_broadcast(a, b, "sub", |x, y| x - y, true)
    }

    fn elementwise_or_broadcast(
        &mut self,
        a: NodeId,
        b: NodeId,
        opname: &'static str,
        f: impl Fn(f64, f64) -> f64,
        is_sub: bool,
    ) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let broadcast = if (ar, ac) == (br, bc) {
            false
        } else if br == 1 && bc == ac {
            true
        } else {
            return Err(DiffError::ShapeMismatch {
                op: opname,
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        };
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = Vec::with_capacity(ar * ac);
        for r in 0..ar {
            for c in 0..ac {
                let bval = if broadcast { bv[c] } else { bv[r * ac + c] };
                out.push(f(av[r * ac + c], bval));
            }
        }
        let value = Tensor::new(ar, ac, out)?;
        let op = if is_sub {
            Op::Sub { broadcast }
        } else {
            Op::Add { broadcast }
        };
        Ok(self.push(op, vec![a, b], value))
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.shape(a);
        if (ar, ac) != self.shape(b) {
            return Err(DiffError::ShapeMismatch {
                op: "mul",
                lhs: (ar, ac),
                rhs: self.shape(b),
            });
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ar, ac, data)?;
        Ok(self.push(Op::Mul, vec![a, b], value))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, DiffError> {
        let value = self.nodes[a.0].value.scale(factor)?;
        Ok(self.push(Op::Scale(factor), vec![a], value))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        let value = Tensor::new(r, c, data).expect("relu preserves finiteness");
        self.push(Op::Relu, vec![a], value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| stable_sigmoid(x))
            .collect();
        let value = Tensor::new(r, c, data).expect("sigmoid is bounded");
        self.push(Op::Sigmoid, vec![a], value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let data = self.nodes[a.0].value.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(r, c, data).expect("tanh is bounded");
        self.push(Op::Tanh, vec![a], value)
    }

    /// Sum of all entries, as a 1x1 scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        let value = Tensor::new(1, 1, vec![total]).expect("sum of finite tensor");
        self.push(Op::Sum, vec![a], value)
    }

    /// Mean of all entries, as a 1x1 scalar.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let n = self.nodes[a.0].value.len();
        if n == 0 {
            return Err(DiffError::invalid("mean", "empty tensor"));
        }
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        let value = Tensor::new(1, 1, vec![total / n as f64])?;
        Ok(self.push(Op::Mean, vec![a], value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose, vec![a], value)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, DiffError> {
        let v = &self.nodes[a.0].value;
        if v.len() != rows * cols {
            return Err(DiffError::LengthMismatch {
                len: v.len(),
                shape: (rows, cols),
            });
        }
        let value = Tensor::new(rows, cols, v.data().to_vec())?;
        Ok(self.push(Op::Reshape, vec![a], value))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, DiffError> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(DiffError::invalid(
                "slice_rows",
                format!("rows {start}..{} out of bounds for {r} rows", start + len),
            ));
        }
        let data = self.nodes[a.0].value.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::new(len, c, data)?;
        Ok(self.push(Op::SliceRows { start }, vec![a], value))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, DiffError> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(DiffError::invalid(
                "slice_cols",
                format!("cols {start}..{} out of bounds for {c} cols", start + len),
            ));
        }
        let src = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            let base = row * c + start;
            data.extend_from_slice(&src[base..base + len]);
        }
        let value = Tensor::new(r, len, data)?;
        Ok(self.push(Op::SliceCols { start }, vec![a], value))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::invalid("concat_rows", "no inputs"));
        }
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: (rows, cols),
                    rhs: (r, c),
                });
            }
            rows += r;
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let value = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows, parts.to_vec(), value))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::invalid("concat_cols", "no inputs"));
        }
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, cols),
                    rhs: (r, c),
                });
            }
            cols += c;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                let src = self.nodes[p.0].value.data();
                data.extend_from_slice(&src[row * c..(row + 1) * c]);
            }
        }
        let value = Tensor::new(rows, cols, data)?;
        Ok(self.push(Op::ConcatCols, parts.to_vec(), value))
    }

    /// Mean squared error over all entries, as a scalar.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.shape(pred);
        if shape != self.shape(target) {
            return Err(DiffError::ShapeMismatch {
                op: "mse_loss",
                lhs: shape,
                rhs: self.shape(target),
            });
        }
        let n = self.nodes[pred.0].value.len();
        if n == 0 {
            return Err(DiffError::invalid("mse_loss", "empty tensor"));
        }
        let total: f64 = self.nodes[pred.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[target.0].value.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let value = Tensor::new(1, 1, vec![total / n as f64])?;
        Ok(self.push(Op::MseLoss, vec![pred, target], value))
    }

    /// Binary cross-entropy over probabilities, mean over all entries.
    /// Probabilities are clamped to `[1e-12, 1-1e-12]` before the logs.
    pub fn binary_cross_entropy_loss(
        &mut self,
        probs: NodeId,
        targets: NodeId,
    ) -> Result<NodeId, DiffError> {
        let shape = self.shape(probs);
        if shape != self.shape(targets) {
            return Err(DiffError::ShapeMismatch {
                op: "binary_cross_entropy_loss",
                lhs: shape,
                rhs: self.shape(targets),
            });
        }
        let n = self.nodes[probs.0].value.len();
        if n == 0 {
            return Err(DiffError::invalid("binary_cross_entropy_loss", "empty tensor"));
        }
        let total: f64 = self.nodes[probs.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[targets.0].value.data())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let value = Tensor::new(1, 1, vec![total / n as f64])?;
        Ok(self.push(Op::BceLoss, vec![probs, targets], value))
    }

    /// Softmax cross-entropy from logits against one-hot (or soft) targets,
    /// mean over rows. Uses the log-sum-exp trick.
    pub fn softmax_cross_entropy_loss(
        &mut self,
        logits: NodeId,
        targets: NodeId,
    ) -> Result<NodeId, DiffError> {
        let (m, k) = self.shape(logits);
        if (m, k) != self.shape(targets) {
            return Err(DiffError::ShapeMismatch {
                op: "softmax_cross_entropy_loss",
                lhs: (m, k),
                rhs: self.shape(targets),
            });
        }
        if m == 0 || k == 0 {
            return Err(DiffError::invalid("softmax_cross_entropy_loss", "empty tensor"));
        }
        let x = self.nodes[logits.0].value.data();
        let t = self.nodes[targets.0].value.data();
        let mut total = 0.0;
        for r in 0..m {
            let row = &x[r * k..(r + 1) * k];
            let lse = log_sum_exp(row);
            let trow = &t[r * k..(r + 1) * k];
            let tsum: f64 = trow.iter().sum();
            let dot: f64 = trow.iter().zip(row).map(|(a, b)| a * b).sum();
            total += tsum * lse - dot;
        }
        let value = Tensor::new(1, 1, vec![total / m as f64])?;
        Ok(self.push(Op::SoftmaxCeLoss, vec![logits, targets], value))
    }

    /// `sum((a - b)^2)` over all entries, as a scalar.
    pub fn squared_l2_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let shape = self.shape(a);
        if shape != self.shape(b) {
            return Err(DiffError::ShapeMismatch {
                op: "squared_l2_distance",
                lhs: shape,
                rhs: self.shape(b),
            });
        }
        let total: f64 = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let value = Tensor::new(1, 1, vec![total])?;
        Ok(self.push(Op::SquaredL2Distance, vec![a, b], value))
    }

    /// Sum of Euclidean norms of the rows, as a scalar.
    ///
    /// Rows with norm 0 contribute a zero subgradient.
    pub fn rows_l2_norm_sum(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let data = self.nodes[a.0].value.data();
        let mut total = 0.0;
        for row in 0..r {
            let ssq: f64 = data[row * c..(row + 1) * c].iter().map(|v| v * v).sum();
            total += ssq.sqrt();
        }
        let value = Tensor::new(1, 1, vec![total]).expect("norm of finite tensor");
        self.push(Op::RowsL2NormSum, vec![a], value)
    }

    /// Reverse pass from a scalar loss node. Returns gradients for every
    /// trainable leaf on the tape up to the loss node (zero if unused).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, DiffError> {
        self.backward_seeded(Some(loss), &[])
    }

    /// Reverse pass seeded with externally supplied adjoints, optionally
    /// combined with a scalar loss. This lets a large computation be split
    /// into stages: downstream stages compute `dL/d(node value)` and inject
    /// it here, which is an exact chain-rule composition.
    pub fn backward_seeded(
        &self,
        loss: Option<NodeId>,
        seeds: &[(NodeId, &Tensor)],
    ) -> Result<Gradients, DiffError> {
        let mut start = 0usize;
        if let Some(l) = loss {
            let shape = self.shape(l);
            if shape != (1, 1) {
                return Err(DiffError::NonScalarLoss { shape });
            }
            start = start.max(l.0);
        }
        for (id, seed) in seeds {
            let shape = self.shape(*id);
            if shape != seed.shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "backward seed",
                    lhs: shape,
                    rhs: seed.shape(),
                });
            }
            start = start.max(id.0);
        }
        if loss.is_none() && seeds.is_empty() {
            return Err(DiffError::invalid("backward", "no loss node and no seeds"));
        }

        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if let Some(l) = loss {
            acc_slice(&mut adjoint[l.0], 1, &[1.0]);
        }
        for (id, seed) in seeds {
            acc_slice(&mut adjoint[id.0], seed.len(), seed.data());
        }

        for i in (0..=start).rev() {
            let Some(grad) = adjoint[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf { .. }) {
                adjoint[i] = Some(grad);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &grad, &mut adjoint);
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate().take(start + 1) {
            if let Op::Leaf { trainable: true } = node.op {
                let (r, c) = node.value.shape();
                let g = match adjoint[i].take() {
                    Some(buf) => {
                        check_finite(&buf, "gradient")?;
                        Tensor::new(r, c, buf)?
                    }
                    None => Tensor::zeros(r, c),
                };
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, grad: &[f64], adjoint: &mut Vec<Option<Vec<f64>>>) {
        let node = &self.nodes[i];
        let needs = |g: &Graph, id: NodeId| g.nodes[id.0].requires_grad;
        match node.op {
            Op::Leaf { .. } => {}
            Op::MatMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = av.shape();
                let n = bv.cols();
                if needs(self, a) {
                    let buf = get_buf(adjoint, a.0, m * k);
                    // dA += dC * B^T
                    gemm(1.0, grad, m, n, false, bv.data(), k, n, true, 1.0, buf);
                }
                if needs(self, b) {
                    let buf = get_buf(adjoint, b.0, k * n);
                    // dB += A^T * dC
                    gemm(1.0, av.data(), m, k, true, grad, m, n, false, 1.0, buf);
                }
            }
            Op::Add { broadcast } => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (m, n) = node.value.shape();
                if needs(self, a) {
                    acc_slice(&mut adjoint[a.0], m * n, grad);
                }
                if needs(self, b) {
                    if broadcast {
                        let buf = get_buf(adjoint, b.0, n);
                        for r in 0..m {
                            for c in 0..n {
                                buf[c] += grad[r * n + c];
                            }
                        }
                    } else {
                        acc_slice(&mut adjoint[b.0], m * n, grad);
                    }
                }
            }
            Op::Sub { broadcast } => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (m, n) = node.value.shape();
                if needs(self, a) {
                    acc_slice(&mut adjoint[a.0], m * n, grad);
                }
                if needs(self, b) {
                    if broadcast {
                        let buf = get_buf(adjoint, b.0, n);
                        for r in 0..m {
                            for c in 0..n {
                                buf[c] -= grad[r * n + c];
                            }
                        }
                    } else {
                        let buf = get_buf(adjoint, b.0, m * n);
                        for (o, g) in buf.iter_mut().zip(grad) {
                            *o -= g;
                        }
                    }
                }
            }
            Op::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let len = node.value.len();
                if needs(self, a) {
                    let bv = self.nodes[b.0].value.data().to_vec();
                    let buf = get_buf(adjoint, a.0, len);
                    for ((o, g), x) in buf.iter_mut().zip(grad).zip(&bv) {
                        *o += g * x;
                    }
                }
                if needs(self, b) {
                    let av = self.nodes[a.0].value.data().to_vec();
                    let buf = get_buf(adjoint, b.0, len);
                    for ((o, g), x) in buf.iter_mut().zip(grad).zip(&av) {
                        *o += g * x;
                    }
                }
            }
            Op::Scale(factor) => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let buf = get_buf(adjoint, a.0, node.value.len());
                    for (o, g) in buf.iter_mut().zip(grad) {
                        *o += g * factor;
                    }
                }
            }
            Op::Relu => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let xv = self.nodes[a.0].value.data().to_vec();
                    let buf = get_buf(adjoint, a.0, xv.len());
                    for ((o, g), x) in buf.iter_mut().zip(grad).zip(&xv) {
                        if *x > 0.0 {
                            *o += g;
                        }
                    }
                }
            }
            Op::Sigmoid => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let yv = node.value.data().to_vec();
                    let buf = get_buf(adjoint, a.0, yv.len());
                    for ((o, g), y) in buf.iter_mut().zip(grad).zip(&yv) {
                        *o += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let yv = node.value.data().to_vec();
                    let buf = get_buf(adjoint, a.0, yv.len());
                    for ((o, g), y) in buf.iter_mut().zip(grad).zip(&yv) {
                        *o += g * (1.0 - y * y);
                    }
                }
            }
            Op::Sum => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let len = self.nodes[a.0].value.len();
                    let buf = get_buf(adjoint, a.0, len);
                    for o in buf.iter_mut() {
                        *o += grad[0];
                    }
                }
            }
            Op::Mean => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let len = self.nodes[a.0].value.len();
                    let share = grad[0] / len as f64;
                    let buf = get_buf(adjoint, a.0, len);
                    for o in buf.iter_mut() {
                        *o += share;
                    }
                }
            }
            Op::Transpose => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let (r, c) = node.value.shape(); // transposed shape
                    let buf = get_buf(adjoint, a.0, r * c);
                    for i2 in 0..r {
                        for j2 in 0..c {
                            buf[j2 * r + i2] += grad[i2 * c + j2];
                        }
                    }
                }
            }
            Op::Reshape => {
                let a = node.inputs[0];
                if needs(self, a) {
                    acc_slice(&mut adjoint[a.0], node.value.len(), grad);
                }
            }
            Op::SliceRows { start } => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let (_, c) = self.nodes[a.0].value.shape();
                    let len = self.nodes[a.0].value.len();
                    let buf = get_buf(adjoint, a.0, len);
                    let base = start * c;
                    for (o, g) in buf[base..base + grad.len()].iter_mut().zip(grad) {
                        *o += g;
                    }
                }
            }
            Op::SliceCols { start } => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let (rows, cols) = self.nodes[a.0].value.shape();
                    let width = node.value.cols();
                    let buf = get_buf(adjoint, a.0, rows * cols);
                    for r in 0..rows {
                        for c in 0..width {
                            buf[r * cols + start + c] += grad[r * width + c];
                        }
                    }
                }
            }
            Op::ConcatRows => {
                let cols = node.value.cols();
                let mut row = 0;
                for &p in &node.inputs {
                    let r = self.nodes[p.0].value.rows();
                    if needs(self, p) {
                        let len = self.nodes[p.0].value.len();
                        acc_slice(&mut adjoint[p.0], len, &grad[row * cols..(row + r) * cols]);
                    }
                    row += r;
                }
            }
            Op::ConcatCols => {
                let (rows, cols) = node.value.shape();
                let mut col = 0;
                for &p in &node.inputs {
                    let c = self.nodes[p.0].value.cols();
                    if needs(self, p) {
                        let buf = get_buf(adjoint, p.0, rows * c);
                        for r in 0..rows {
                            for j in 0..c {
                                buf[r * c + j] += grad[r * cols + col + j];
                            }
                        }
                    }
                    col += c;
                }
            }
            Op::MseLoss => {
                let (p, t) = (node.inputs[0], node.inputs[1]);
                let pv = self.nodes[p.0].value.data();
                let tv = self.nodes[t.0].value.data();
                let n = pv.len() as f64;
                let g0 = grad[0];
                if needs(self, p) {
                    let diffs: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| a - b).collect();
                    let buf = get_buf(adjoint, p.0, diffs.len());
                    for (o, d) in buf.iter_mut().zip(&diffs) {
                        *o += g0 * 2.0 * d / n;
                    }
                }
                if needs(self, t) {
                    let diffs: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| a - b).collect();
                    let buf = get_buf(adjoint, t.0, diffs.len());
                    for (o, d) in buf.iter_mut().zip(&diffs) {
                        *o -= g0 * 2.0 * d / n;
                    }
                }
            }
            Op::BceLoss => {
                let (p, t) = (node.inputs[0], node.inputs[1]);
                let pv = self.nodes[p.0].value.data().to_vec();
                let tv = self.nodes[t.0].value.data().to_vec();
                let n = pv.len() as f64;
                let g0 = grad[0];
                if needs(self, p) {
                    let buf = get_buf(adjoint, p.0, pv.len());
                    for ((o, &praw), &y) in buf.iter_mut().zip(&pv).zip(&tv) {
                        if (BCE_EPS..=1.0 - BCE_EPS).contains(&praw) {
                            *o += g0 * (praw - y) / (praw * (1.0 - praw)) / n;
                        }
                        // clamped region: the clamped loss is locally constant in p
                    }
                }
                if needs(self, t) {
                    let buf = get_buf(adjoint, t.0, tv.len());
                    for (o, &praw) in buf.iter_mut().zip(&pv) {
                        let pc = praw.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        *o += g0 * ((1.0 - pc).ln() - pc.ln()) / n;
                    }
                }
            }
            Op::SoftmaxCeLoss => {
                let (l, t) = (node.inputs[0], node.inputs[1]);
                let (m, k) = self.nodes[l.0].value.shape();
                let xv = self.nodes[l.0].value.data().to_vec();
                let tv = self.nodes[t.0].value.data().to_vec();
                let g0 = grad[0];
                if needs(self, l) {
                    let buf = get_buf(adjoint, l.0, m * k);
                    for r in 0..m {
                        let row = &xv[r * k..(r + 1) * k];
                        let lse = log_sum_exp(row);
                        let tsum: f64 = tv[r * k..(r + 1) * k].iter().sum();
                        for c in 0..k {
                            let soft = (row[c] - lse).exp();
                            buf[r * k + c] +=
                                g0 * (tsum * soft - tv[r * k + c]) / m as f64;
                        }
                    }
                }
                if needs(self, t) {
                    let buf = get_buf(adjoint, t.0, m * k);
                    for r in 0..m {
                        let row = &xv[r * k..(r + 1) * k];
                        let lse = log_sum_exp(row);
                        for c in 0..k {
                            buf[r * k + c] += g0 * (lse - row[c]) / m as f64;
                        }
                    }
                }
            }
            Op::SquaredL2Distance => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = self.nodes[a.0].value.data().to_vec();
                let bv = self.nodes[b.0].value.data().to_vec();
                let g0 = grad[0];
                if needs(self, a) {
                    let buf = get_buf(adjoint, a.0, av.len());
                    for ((o, &x), &y) in buf.iter_mut().zip(&av).zip(&bv) {
                        *o += g0 * 2.0 * (x - y);
                    }
                }
                if needs(self, b) {
                    let buf = get_buf(adjoint, b.0, bv.len());
                    for ((o, &x), &y) in buf.iter_mut().zip(&av).zip(&bv) {
                        *o -= g0 * 2.0 * (x - y);
                    }
                }
            }
            Op::RowsL2NormSum => {
                let a = node.inputs[0];
                if needs(self, a) {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let xv = self.nodes[a.0].value.data().to_vec();
                    let g0 = grad[0];
                    let buf = get_buf(adjoint, a.0, r * c);
                    for row in 0..r {
                        let slice = &xv[row * c..(row + 1) * c];
                        let norm = slice.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > NORM_GUARD {
                            for (j, &x) in slice.iter().enumerate() {
                                buf[row * c + j] += g0 * x / norm;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn get_buf<'a>(adjoint: &'a mut [Option<Vec<f64>>], idx: usize, len: usize) -> &'a mut Vec<f64> {
    adjoint[idx].get_or_insert_with(|| vec![0.0; len])
}

fn acc_slice(slot: &mut Option<Vec<f64>>, len: usize, contribution: &[f64]) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    for (o, g) in buf.iter_mut().zip(contribution) {
        *o += g;
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: &mut Graph, v: f64) -> NodeId {
        g.param(Tensor::scalar(v).unwrap())
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(0.0).unwrap());
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).scalar_value(), 0.5);
    }

    #[test]
    fn matmul_identity_case() {
        let mut g = Graph::new();
        let m = g.input(Tensor::new(2, 2, vec![1.5, -2.0, 0.0, 4.0]).unwrap());
        let id = g.input(Tensor::identity(2));
        let prod = g.matmul(id, m).unwrap();
        assert_eq!(g.value(prod).data(), &[1.5, -2.0, 0.0, 4.0]);
    }

    #[test]
    fn mse_zero_residual_case() {
        let mut g = Graph::new();
        let a = g.input(Tensor::row(vec![1.0, 2.0]).unwrap());
        let b = g.input(Tensor::row(vec![1.0, 2.0]).unwrap());
        let loss = g.mse_loss(a, b).unwrap();
        assert_eq!(g.value(loss).scalar_value(), 0.0);
    }

    #[test]
    fn derivative_of_x_squared_is_2x() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 3.0);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().scalar_value(), 6.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero_is_quarter() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 0.0);
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().scalar_value(), 0.25);
    }

    #[test]
    fn duplicated_subexpression_accumulates() {
        // f = x*x + x*x  =>  f' = 4x
        let mut g = Graph::new();
        let x = scalar(&mut g, 2.0);
        let sq = g.mul(x, x).unwrap();
        let f = g.add(sq, sq).unwrap();
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(x).unwrap().scalar_value(), 8.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]).unwrap());
        let y = g.relu(x);
        let err = g.backward(y).unwrap_err();
        assert!(matches!(err, DiffError::NonScalarLoss { shape: (1, 2) }));
    }

    #[test]
    fn detached_node_query_errors() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 1.0);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        // y itself is not a trainable leaf
        assert!(matches!(grads.get(y), Err(DiffError::Detached { .. })));
        // a leaf created after the loss is detached too
        let mut g2 = Graph::new();
        let x2 = scalar(&mut g2, 1.0);
        let loss = g2.mul(x2, x2).unwrap();
        let late = g2.param(Tensor::scalar(5.0).unwrap());
        let grads2 = g2.backward(loss).unwrap();
        assert!(matches!(grads2.get(late), Err(DiffError::Detached { .. })));
    }

    #[test]
    fn non_trainable_leaf_gets_no_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0).unwrap());
        let w = scalar(&mut g, 2.0);
        let y = g.mul(x, w).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(x).is_err());
        assert_eq!(grads.get(w).unwrap().scalar_value(), 3.0);
    }

    #[test]
    fn unused_trainable_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let unused = scalar(&mut g, 7.0);
        let x = scalar(&mut g, 2.0);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(unused).unwrap().scalar_value(), 0.0);
    }

    #[test]
    fn add_broadcast_accumulates_bias_gradient_over_rows() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(3, 2, vec![1.0; 6]).unwrap());
        let b = g.param(Tensor::row(vec![0.5, -0.5]).unwrap());
        let y = g.add(x, b).unwrap();
        let total = g.sum(y);
        let grads = g.backward(total).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn fancy_broadcast_rejected() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(3, 2));
        let col = g.input(Tensor::zeros(3, 1));
        assert!(g.add(a, col).is_err());
    }

    #[test]
    fn backward_seeded_matches_monolithic_backward() {
        // Stage split of f(w) = sum(relu(x*w) * c) must match the one-graph
        // gradient when the boundary adjoint is injected as a seed.
        let x = Tensor::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let w = Tensor::new(2, 2, vec![0.3, -0.7, 1.1, 0.9]).unwrap();
        let c = Tensor::new(2, 2, vec![2.0, 1.0, -1.0, 0.5]).unwrap();

        let mut mono = Graph::new();
        let xm = mono.input(x.clone());
        let wm = mono.param(w.clone());
        let hm = mono.matmul(xm, wm).unwrap();
        let rm = mono.relu(hm);
        let cm = mono.input(c.clone());
        let pm = mono.mul(rm, cm).unwrap();
        let lm = mono.sum(pm);
        let mono_grads = mono.backward(lm).unwrap();

        // stage 2: loss as a function of the boundary value r
        let mut stage2 = Graph::new();
        let boundary_val = {
            let mut g1 = Graph::new();
            let x1 = g1.input(x.clone());
            let w1 = g1.param(w.clone());
            let h1 = g1.matmul(x1, w1).unwrap();
            let r1 = g1.relu(h1);
            g1.value(r1).clone()
        };
        let r2 = stage2.param(boundary_val);
        let c2 = stage2.input(c.clone());
        let p2 = stage2.mul(r2, c2).unwrap();
        let l2 = stage2.sum(p2);
        let seed = stage2.backward(l2).unwrap().take(r2).unwrap();

        // stage 1 with injected adjoint
        let mut stage1 = Graph::new();
        let x1 = stage1.input(x);
        let w1 = stage1.param(w);
        let h1 = stage1.matmul(x1, w1).unwrap();
        let r1 = stage1.relu(h1);
        let grads = stage1.backward_seeded(None, &[(r1, &seed)]).unwrap();

        assert_eq!(
            grads.get(w1).unwrap().data(),
            mono_grads.get(wm).unwrap().data()
        );
    }

    #[test]
    fn slice_concat_roundtrip_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let left = g.slice_cols(x, 0, 2).unwrap();
        let right = g.slice_cols(x, 2, 1).unwrap();
        let back = g.concat_cols(&[left, right]).unwrap();
        assert_eq!(g.value(back).data(), g.value(x).data());
        let total = g.sum(back);
        let grads = g.backward(total).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
    }
}
