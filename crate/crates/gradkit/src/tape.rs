//! Eagerly recorded computation tape with reverse-mode backward.

use crate::tensor::TensorData;
use crate::{GradError, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, f64),
    Matmul(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    ScatterSumRows(NodeId, Vec<usize>),
    Silu(NodeId),
    Exp(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    RowSum(NodeId),
    Reshape(NodeId),
    BroadcastRows(NodeId, usize),
    BroadcastCols(NodeId, usize),
}

struct Node {
    value: TensorData,
    requires_grad: bool,
    op: Op,
}

/// Records every operation in execution order (which is automatically
/// topological) and replays adjoint rules in reverse, visiting each node
/// exactly once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &TensorData {
        &self.nodes[id].value
    }

    /// Gradient of the last backward() loss w.r.t. node `id`. None for
    /// nodes that do not require grad.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: TensorData, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.nodes.len() - 1
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Inserts an input tensor.
    pub fn leaf(&mut self, value: TensorData, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: TensorData) -> NodeId {
        self.leaf(value, false)
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        if self.nodes[a].value.shape != self.nodes[b].value.shape {
            return Err(GradError::ShapeMismatch {
                op: op_name,
                left: self.nodes[a].value.shape.clone(),
                right: self.nodes[b].value.shape.clone(),
            });
        }
        let data: Vec<f64> = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[a].value.data.iter().map(|x| x * s).collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a);
        self.push(value, rg, Op::MulScalar(a, s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k1) = self.nodes[a].value.dims2().ok_or_else(|| GradError::BadShape {
            op: "matmul",
            want: "2-D left operand",
            got: self.nodes[a].value.shape.clone(),
        })?;
        let (k2, n) = self.nodes[b].value.dims2().ok_or_else(|| GradError::BadShape {
            op: "matmul",
            want: "2-D right operand",
            got: self.nodes[b].value.shape.clone(),
        })?;
        if k1 != k2 {
            return Err(GradError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k1],
                right: vec![k2, n],
            });
        }
        let av = &self.nodes[a].value.data;
        let bv = &self.nodes[b].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k1 {
                let x = av[i * k1 + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(TensorData::matrix(m, n, out), rg, Op::Matmul(a, b)))
    }

    /// Concatenates 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(GradError::BadShape {
                op: "concat_cols",
                want: "at least one part",
                got: vec![],
            });
        }
        let (rows, _) = self.nodes[parts[0]]
            .value
            .dims2()
            .ok_or_else(|| GradError::BadShape {
                op: "concat_cols",
                want: "2-D parts",
                got: self.nodes[parts[0]].value.shape.clone(),
            })?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.nodes[p].value.dims2().ok_or_else(|| GradError::BadShape {
                op: "concat_cols",
                want: "2-D parts",
                got: self.nodes[p].value.shape.clone(),
            })?;
            if r != rows {
                return Err(GradError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![rows],
                    right: vec![r],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        for i in 0..rows {
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = &self.nodes[p].value.data[i * w..(i + 1) * w];
                out[i * total + offset..i * total + offset + w].copy_from_slice(src);
                offset += w;
            }
        }
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(
            TensorData::matrix(rows, total, out),
            rg,
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Selects rows of a 2-D tensor: out[k] = src[index[k]].
    pub fn gather_rows(&mut self, src: NodeId, index: &[usize]) -> Result<NodeId> {
        let (n, d) = self.nodes[src].value.dims2().ok_or_else(|| GradError::BadShape {
            op: "gather_rows",
            want: "2-D source",
            got: self.nodes[src].value.shape.clone(),
        })?;
        let mut out = vec![0.0; index.len() * d];
        for (k, &i) in index.iter().enumerate() {
            if i >= n {
                return Err(GradError::IndexOutOfBounds { index: i, len: n });
            }
            out[k * d..(k + 1) * d].copy_from_slice(&self.nodes[src].value.data[i * d..(i + 1) * d]);
        }
        let rg = self.requires(src);
        Ok(self.push(
            TensorData::matrix(index.len(), d, out),
            rg,
            Op::GatherRows(src, index.to_vec()),
        ))
    }

    /// Sums rows of `src` into `out_rows` buckets: out[index[k]] += src[k].
    /// The adjoint of scatter-sum is a gather.
    pub fn scatter_sum_rows(
        &mut self,
        src: NodeId,
        index: &[usize],
        out_rows: usize,
    ) -> Result<NodeId> {
        let (m, d) = self.nodes[src].value.dims2().ok_or_else(|| GradError::BadShape {
            op: "scatter_sum_rows",
            want: "2-D source",
            got: self.nodes[src].value.shape.clone(),
        })?;
        if index.len() != m {
            return Err(GradError::ShapeMismatch {
                op: "scatter_sum_rows",
                left: vec![m],
                right: vec![index.len()],
            });
        }
        let mut out = vec![0.0; out_rows * d];
        for (k, &i) in index.iter().enumerate() {
            if i >= out_rows {
                return Err(GradError::IndexOutOfBounds {
                    index: i,
                    len: out_rows,
                });
            }
            for c in 0..d {
                out[i * d + c] += self.nodes[src].value.data[k * d + c];
            }
        }
        let rg = self.requires(src);
        Ok(self.push(
            TensorData::matrix(out_rows, d, out),
            rg,
            Op::ScatterSumRows(src, index.to_vec()),
        ))
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[a]
            .value
            .data
            .iter()
            .map(|&x| x * sigmoid(x))
            .collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a);
        self.push(value, rg, Op::Silu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[a].value.data.iter().map(|x| x.exp()).collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a);
        self.push(value, rg, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[a].value.data.iter().map(|x| x.sqrt()).collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a);
        self.push(value, rg, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[a].value.data.iter().map(|x| x * x).collect();
        let value = TensorData::new(self.nodes[a].value.shape.clone(), data);
        let rg = self.requires(a);
        self.push(value, rg, Op::Square(a))
    }

    /// Sum of all entries → scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a].value.data.iter().sum();
        let rg = self.requires(a);
        self.push(TensorData::scalar(s), rg, Op::Sum(a))
    }

    /// Mean of all entries → scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.len().max(1) as f64;
        let s: f64 = self.nodes[a].value.data.iter().sum::<f64>() / n;
        let rg = self.requires(a);
        self.push(TensorData::scalar(s), rg, Op::Mean(a))
    }

    /// Per-row sum of a 2-D tensor → column vector [rows, 1].
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.nodes[a].value.dims2().ok_or_else(|| GradError::BadShape {
            op: "row_sum",
            want: "2-D input",
            got: self.nodes[a].value.shape.clone(),
        })?;
        let data: Vec<f64> = (0..r)
            .map(|i| self.nodes[a].value.data[i * c..(i + 1) * c].iter().sum())
            .collect();
        let rg = self.requires(a);
        Ok(self.push(TensorData::matrix(r, 1, data), rg, Op::RowSum(a)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        if shape.iter().product::<usize>() != self.nodes[a].value.len() {
            return Err(GradError::BadShape {
                op: "reshape",
                want: "shape with matching element count",
                got: shape,
            });
        }
        let value = TensorData::new(shape, self.nodes[a].value.data.clone());
        let rg = self.requires(a);
        Ok(self.push(value, rg, Op::Reshape(a)))
    }

    /// Repeats a vector [c] into [rows, c]. Adjoint sums over rows.
    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        let c = match self.nodes[a].value.shape.as_slice() {
            [c] => *c,
            _ => {
                return Err(GradError::BadShape {
                    op: "broadcast_rows",
                    want: "1-D input",
                    got: self.nodes[a].value.shape.clone(),
                })
            }
        };
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(&self.nodes[a].value.data);
        }
        let rg = self.requires(a);
        Ok(self.push(
            TensorData::matrix(rows, c, data),
            rg,
            Op::BroadcastRows(a, rows),
        ))
    }

    /// Repeats a column [r, 1] into [r, cols]. Adjoint sums over columns.
    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        let r = match self.nodes[a].value.dims2() {
            Some((r, 1)) => r,
            _ => {
                return Err(GradError::BadShape {
                    op: "broadcast_cols",
                    want: "[r, 1] input",
                    got: self.nodes[a].value.shape.clone(),
                })
            }
        };
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            let v = self.nodes[a].value.data[i];
            data.extend(std::iter::repeat(v).take(cols));
        }
        let rg = self.requires(a);
        Ok(self.push(
            TensorData::matrix(r, cols, data),
            rg,
            Op::BroadcastCols(a, cols),
        ))
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f64]) {
        if !self.nodes[id].requires_grad {
            return;
        }
        let slot = &mut self.grads[id];
        match slot {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            Option::None => {
                *slot = Some(delta.to_vec());
            }
        }
    }

    /// Populates gradients of every requires-grad node reachable from the
    /// scalar `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(GradError::NonScalarLoss(self.nodes[loss].value.shape.clone()));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss].requires_grad {
            return Ok(());
        }
        self.grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let Some(out_grad) = self.grads[id].clone() else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(a, &out_grad);
                    self.accumulate(b, &out_grad);
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &out_grad);
                    let neg: Vec<f64> = out_grad.iter().map(|g| -g).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[b].value.data)
                        .map(|(g, y)| g * y)
                        .collect();
                    let db: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[a].value.data)
                        .map(|(g, x)| g * x)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::MulScalar(a, s) => {
                    let da: Vec<f64> = out_grad.iter().map(|g| g * s).collect();
                    self.accumulate(a, &da);
                }
                Op::Matmul(a, b) => {
                    let (m, k) = self.nodes[a].value.dims2().unwrap();
                    let (_, n) = self.nodes[b].value.dims2().unwrap();
                    // dA = dZ · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += out_grad[i * n + j] * self.nodes[b].value.data[p * n + j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    // dB = Aᵀ · dZ
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += self.nodes[a].value.data[i * k + p] * out_grad[i * n + j];
                            }
                            db[p * n + j] = acc;
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::ConcatCols(parts) => {
                    let widths: Vec<usize> = parts
                        .iter()
                        .map(|&p| self.nodes[p].value.dims2().unwrap().1)
                        .collect();
                    let rows = self.nodes[parts[0]].value.dims2().unwrap().0;
                    let total: usize = widths.iter().sum();
                    let mut offset = 0;
                    for (&p, &w) in parts.iter().zip(&widths) {
                        let mut dp = vec![0.0; rows * w];
                        for i in 0..rows {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&out_grad[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(p, &dp);
                        offset += w;
                    }
                }
                Op::GatherRows(src, index) => {
                    let (n, d) = self.nodes[src].value.dims2().unwrap();
                    let mut dsrc = vec![0.0; n * d];
                    for (k, &i) in index.iter().enumerate() {
                        for c in 0..d {
                            dsrc[i * d + c] += out_grad[k * d + c];
                        }
                    }
                    self.accumulate(src, &dsrc);
                }
                Op::ScatterSumRows(src, index) => {
                    let (m, d) = self.nodes[src].value.dims2().unwrap();
                    let mut dsrc = vec![0.0; m * d];
                    for (k, &i) in index.iter().enumerate() {
                        dsrc[k * d..(k + 1) * d].copy_from_slice(&out_grad[i * d..(i + 1) * d]);
                    }
                    self.accumulate(src, &dsrc);
                }
                Op::Silu(a) => {
                    let da: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[a].value.data)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * (s + x * s * (1.0 - s))
                        })
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Exp(a) => {
                    let da: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[id].value.data)
                        .map(|(g, y)| g * y)
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Sqrt(a) => {
                    let da: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[id].value.data)
                        .map(|(g, y)| g * 0.5 / y)
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Square(a) => {
                    let da: Vec<f64> = out_grad
                        .iter()
                        .zip(&self.nodes[a].value.data)
                        .map(|(g, x)| g * 2.0 * x)
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Sum(a) => {
                    let da = vec![out_grad[0]; self.nodes[a].value.len()];
                    self.accumulate(a, &da);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a].value.len().max(1) as f64;
                    let da = vec![out_grad[0] / n; self.nodes[a].value.len()];
                    self.accumulate(a, &da);
                }
                Op::RowSum(a) => {
                    let (r, c) = self.nodes[a].value.dims2().unwrap();
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = out_grad[i];
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::Reshape(a) => {
                    self.accumulate(a, &out_grad);
                }
                Op::BroadcastRows(a, rows) => {
                    let c = self.nodes[a].value.len();
                    let mut da = vec![0.0; c];
                    for i in 0..rows {
                        for j in 0..c {
                            da[j] += out_grad[i * c + j];
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::BroadcastCols(a, cols) => {
                    let r = self.nodes[a].value.len();
                    let mut da = vec![0.0; r];
                    for i in 0..r {
                        for j in 0..cols {
                            da[i] += out_grad[i * cols + j];
                        }
                    }
                    self.accumulate(a, &da);
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
