//! Tape-based computation graph with eager forward evaluation.
//!
//! Every operation validates its input shapes, computes its value
//! immediately and records a node. `backward` walks the tape in exact
//! reverse construction order, which is a valid reverse-topological order
//! because an operation can only reference nodes that already exist.

use super::{Real, Shape, Tensor, TensorError};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    /// [m,k] x [k,n] -> [m,n]
    Matmul(NodeId, NodeId),
    /// [m,k] x [k] -> [m]
    MatVec(NodeId, NodeId),
    /// x[d1], w[d1,d2], p[d2] -> scalar x' W p
    Bilinear(NodeId, NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    /// 1-D concatenation
    Concat(Vec<NodeId>),
    /// k vectors of length m -> [k,m]
    StackRows(Vec<NodeId>),
    /// k vectors of length n -> [n,k]
    StackCols(Vec<NodeId>),
    /// same data, new shape
    Reshape(NodeId),
    /// [m,n] -> [n,m]
    Transpose(NodeId),
    /// [m,n] -> [n], row i
    Row(NodeId, usize),
    /// vector slice [start, start+len)
    Segment(NodeId, usize, usize),
    Mean(NodeId),
    Sum(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    /// elementwise ln(max(x, floor)); grad is zero where the floor fires
    Log(NodeId, T),
    /// softmax over the last axis of a vector or matrix
    SoftmaxRows(NodeId),
    /// norm-bounding squash over the last axis, epsilon-guarded at zero
    SquashRows(NodeId, T),
    /// c[n,m], u[n,m,K] -> s[m,K]; s[j] = sum_i c[i][j] u[i][j]
    CouplingSum(NodeId, NodeId),
    /// a[m,K], u[n,m,K] -> [n,m]; out[i][j] = a[j] . u[i][j]
    PerRoleDot(NodeId, NodeId),
    /// w[K], u[n,m,K] -> [n,m]; out[i][j] = w . u[i][j]
    DotCapsules(NodeId, NodeId),
    /// d[n,m], ids[n] -> [n]; out[i] = d[i][ids[i]]
    PickPerRow(NodeId, Vec<usize>),
    /// u[n,m,K] -> [n,m]; mean over the capsule axis
    MeanCapsules(NodeId),
    /// [m,n] -> [m]; row-wise max (ties resolve to the first index)
    RowMax(NodeId),
    /// [m,n] -> [m]; row-wise sum
    RowSum(NodeId),
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    needs_grad: bool,
    op: Op<T>,
}

/// Computation tape. One graph per forward/backward pass.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    log_floor_hits: usize,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            log_floor_hits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of times `log` clamped its input to the floor.
    pub fn log_floor_hits(&self) -> usize {
        self.log_floor_hits
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. node `id`.
    pub fn grad(&self, id: NodeId) -> Option<Tensor<T>> {
        let node = &self.nodes[id.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().clone(), g.clone()).expect("grad shape"))
    }

    pub fn grad_slice(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> NodeId {
        self.push(value, needs_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false, Op::Leaf)
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    // ---- operations ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa.rank() != 2 || sb.rank() != 2 || sa.dim(1) != sb.dim(0) {
            return Err(TensorError::Dimension {
                op: "matmul",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let (m, k, n) = (sa.dim(0), sa.dim(1), sb.dim(1));
        let (da, db) = (self.val(a).data(), self.val(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for l in 0..k {
                let ail = da[i * k + l];
                for j in 0..n {
                    out[i * n + j] += ail * db[l * n + j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::new(Shape::matrix(m, n), out)?,
            needs,
            Op::Matmul(a, b),
        ))
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sx) = (self.val(a).shape(), self.val(x).shape());
        if sa.rank() != 2 || sx.rank() != 1 || sa.dim(1) != sx.dim(0) {
            return Err(TensorError::Dimension {
                op: "matvec",
                lhs: sa.clone(),
                rhs: sx.clone(),
            });
        }
        let (m, k) = (sa.dim(0), sa.dim(1));
        let (da, dx) = (self.val(a).data(), self.val(x).data());
        let mut out = vec![T::zero(); m];
        for i in 0..m {
            let mut acc = T::zero();
            for l in 0..k {
                acc += da[i * k + l] * dx[l];
            }
            out[i] = acc;
        }
        let needs = self.needs(a) || self.needs(x);
        Ok(self.push(Tensor::vector(out), needs, Op::MatVec(a, x)))
    }

    /// x' W p for x[d1], W[d1,d2], p[d2].
    pub fn bilinear(&mut self, x: NodeId, w: NodeId, p: NodeId) -> Result<NodeId, TensorError> {
        let (sx, sw, sp) = (
            self.val(x).shape().clone(),
            self.val(w).shape().clone(),
            self.val(p).shape().clone(),
        );
        if sx.rank() != 1 || sw.rank() != 2 || sw.dim(0) != sx.dim(0) {
            return Err(TensorError::Dimension {
                op: "bilinear",
                lhs: sx,
                rhs: sw,
            });
        }
        if sp.rank() != 1 || sw.dim(1) != sp.dim(0) {
            return Err(TensorError::Dimension {
                op: "bilinear",
                lhs: sw,
                rhs: sp,
            });
        }
        let (d1, d2) = (sw.dim(0), sw.dim(1));
        let (dx, dw, dp) = (self.val(x).data(), self.val(w).data(), self.val(p).data());
        let mut acc = T::zero();
        for i in 0..d1 {
            let mut row = T::zero();
            for j in 0..d2 {
                row += dw[i * d2 + j] * dp[j];
            }
            acc += dx[i] * row;
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(p);
        Ok(self.push(Tensor::scalar(acc), needs, Op::Bilinear(x, w, p)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa != sb {
            return Err(TensorError::Dimension {
                op: "add",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let out: Vec<T> = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(sa.clone(), out)?, needs, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa != sb {
            return Err(TensorError::Dimension {
                op: "mul",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let out: Vec<T> = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(sa.clone(), out)?, needs, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: T) -> NodeId {
        let out: Vec<T> = self.val(a).data().iter().map(|&x| x * factor).collect();
        let shape = self.val(a).shape().clone();
        let needs = self.needs(a);
        self.push(
            Tensor::new(shape, out).expect("scale preserves shape"),
            needs,
            Op::Scale(a, factor),
        )
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        let mut out = Vec::new();
        for &p in parts {
            let v = self.val(p);
            if v.shape().rank() != 1 {
                return Err(TensorError::UnsupportedShape {
                    op: "concat",
                    shape: v.shape().clone(),
                });
            }
            out.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::vector(out), needs, Op::Concat(parts.to_vec())))
    }

    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "stack_rows" });
        }
        let m = self.val(parts[0]).shape().dim(0);
        let mut out = Vec::with_capacity(parts.len() * m);
        for &p in parts {
            let v = self.val(p);
            if v.shape().rank() != 1 || v.shape().dim(0) != m {
                return Err(TensorError::Dimension {
                    op: "stack_rows",
                    lhs: Shape::vector(m),
                    rhs: v.shape().clone(),
                });
            }
            out.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(Shape::matrix(parts.len(), m), out)?,
            needs,
            Op::StackRows(parts.to_vec()),
        ))
    }

    pub fn stack_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "stack_cols" });
        }
        let n = self.val(parts[0]).shape().dim(0);
        let k = parts.len();
        let mut out = vec![T::zero(); n * k];
        for (q, &p) in parts.iter().enumerate() {
            let v = self.val(p);
            if v.shape().rank() != 1 || v.shape().dim(0) != n {
                return Err(TensorError::Dimension {
                    op: "stack_cols",
                    lhs: Shape::vector(n),
                    rhs: v.shape().clone(),
                });
            }
            for i in 0..n {
                out[i * k + q] = v.data()[i];
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(Shape::matrix(n, k), out)?,
            needs,
            Op::StackCols(parts.to_vec()),
        ))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Shape) -> Result<NodeId, TensorError> {
        if shape.numel() != self.val(a).shape().numel() {
            return Err(TensorError::Dimension {
                op: "reshape",
                lhs: self.val(a).shape().clone(),
                rhs: shape,
            });
        }
        let data = self.val(a).data().to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, data)?, needs, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 2 {
            return Err(TensorError::UnsupportedShape {
                op: "transpose",
                shape: s.clone(),
            });
        }
        let (m, n) = (s.dim(0), s.dim(1));
        let d = self.val(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(Shape::matrix(n, m), out)?,
            needs,
            Op::Transpose(a),
        ))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 2 {
            return Err(TensorError::UnsupportedShape {
                op: "row",
                shape: s.clone(),
            });
        }
        if i >= s.dim(0) {
            return Err(TensorError::Index {
                op: "row",
                index: i,
                shape: s.clone(),
            });
        }
        let data = self.val(a).row(i).to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::vector(data), needs, Op::Row(a, i)))
    }

    pub fn segment(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 1 {
            return Err(TensorError::UnsupportedShape {
                op: "segment",
                shape: s.clone(),
            });
        }
        if start + len > s.dim(0) || len == 0 {
            return Err(TensorError::Index {
                op: "segment",
                index: start + len,
                shape: s.clone(),
            });
        }
        let data = self.val(a).data()[start..start + len].to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::vector(data), needs, Op::Segment(a, start, len)))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let d = self.val(a).data();
        let n = T::from_f64(d.len() as f64);
        let avg = d.iter().fold(T::zero(), |acc, &v| acc + v) / n;
        let needs = self.needs(a);
        self.push(Tensor::scalar(avg), needs, Op::Mean(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.val(a).data().iter().fold(T::zero(), |acc, &v| acc + v);
        let needs = self.needs(a);
        self.push(Tensor::scalar(total), needs, Op::Sum(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out: Vec<T> = self.val(a).data().iter().map(|&x| x.tanh()).collect();
        let shape = self.val(a).shape().clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out).unwrap(), needs, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out: Vec<T> = self
            .val(a)
            .data()
            .iter()
            .map(|&x| T::one() / (T::one() + (-x).exp()))
            .collect();
        let shape = self.val(a).shape().clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out).unwrap(), needs, Op::Sigmoid(a))
    }

    /// Elementwise natural log with a positive floor; inputs at or below
    /// the floor are clamped and their gradient is zero.
    pub fn log(&mut self, a: NodeId, floor: T) -> NodeId {
        let mut hits = 0usize;
        let out: Vec<T> = self
            .val(a)
            .data()
            .iter()
            .map(|&x| {
                if x > floor {
                    x.ln()
                } else {
                    hits += 1;
                    floor.ln()
                }
            })
            .collect();
        self.log_floor_hits += hits;
        let shape = self.val(a).shape().clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out).unwrap(), needs, Op::Log(a, floor))
    }

    /// Softmax over the last axis. Shift-invariant: the row max is
    /// subtracted before exponentiation.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() == 0 || s.rank() > 2 {
            return Err(TensorError::UnsupportedShape {
                op: "softmax",
                shape: s.clone(),
            });
        }
        let cols = s.dim(s.rank() - 1);
        let rows = s.numel() / cols;
        let d = self.val(a).data();
        let mut out = vec![T::zero(); d.len()];
        for r in 0..rows {
            let row = &d[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                out[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                out[r * cols + j] /= denom;
            }
        }
        let shape = s.clone();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, needs, Op::SoftmaxRows(a)))
    }

    /// Norm-bounding nonlinearity over the last axis:
    /// `v = (|s|^2 / (1 + |s|^2)) * s / (|s| + eps)`.
    pub fn squash(&mut self, a: NodeId, eps: T) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() == 0 || s.rank() > 2 {
            return Err(TensorError::UnsupportedShape {
                op: "squash",
                shape: s.clone(),
            });
        }
        let cols = s.dim(s.rank() - 1);
        let rows = s.numel() / cols;
        let d = self.val(a).data();
        let mut out = vec![T::zero(); d.len()];
        for r in 0..rows {
            let row = &d[r * cols..(r + 1) * cols];
            let norm_sq = row.iter().fold(T::zero(), |acc, &v| acc + v * v);
            let norm = norm_sq.sqrt();
            let alpha = norm_sq / ((T::one() + norm_sq) * (norm + eps));
            for j in 0..cols {
                out[r * cols + j] = alpha * row[j];
            }
        }
        let shape = s.clone();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, needs, Op::SquashRows(a, eps)))
    }

    /// Weighted pooling of per-word capsules into per-role capsules:
    /// `s[j] = sum_i c[i][j] * u[i][j]` for c[n,m] and u[n,m,K].
    pub fn coupling_sum(&mut self, c: NodeId, u: NodeId) -> Result<NodeId, TensorError> {
        let (sc, su) = (self.val(c).shape(), self.val(u).shape());
        if sc.rank() != 2
            || su.rank() != 3
            || sc.dim(0) != su.dim(0)
            || sc.dim(1) != su.dim(1)
        {
            return Err(TensorError::Dimension {
                op: "coupling_sum",
                lhs: sc.clone(),
                rhs: su.clone(),
            });
        }
        let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
        let (dc, du) = (self.val(c).data(), self.val(u).data());
        let mut out = vec![T::zero(); m * k];
        for i in 0..n {
            for j in 0..m {
                let cij = dc[i * m + j];
                let base = (i * m + j) * k;
                for l in 0..k {
                    out[j * k + l] += cij * du[base + l];
                }
            }
        }
        let needs = self.needs(c) || self.needs(u);
        Ok(self.push(
            Tensor::new(Shape::matrix(m, k), out)?,
            needs,
            Op::CouplingSum(c, u),
        ))
    }

    /// Per-role agreement: `out[i][j] = a[j] . u[i][j]` for a[m,K], u[n,m,K].
    pub fn per_role_dot(&mut self, a: NodeId, u: NodeId) -> Result<NodeId, TensorError> {
        let (sa, su) = (self.val(a).shape(), self.val(u).shape());
        if sa.rank() != 2
            || su.rank() != 3
            || sa.dim(0) != su.dim(1)
            || sa.dim(1) != su.dim(2)
        {
            return Err(TensorError::Dimension {
                op: "per_role_dot",
                lhs: sa.clone(),
                rhs: su.clone(),
            });
        }
        let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
        let (da, du) = (self.val(a).data(), self.val(u).data());
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let base = (i * m + j) * k;
                let mut acc = T::zero();
                for l in 0..k {
                    acc += da[j * k + l] * du[base + l];
                }
                out[i * m + j] = acc;
            }
        }
        let needs = self.needs(a) || self.needs(u);
        Ok(self.push(
            Tensor::new(Shape::matrix(n, m), out)?,
            needs,
            Op::PerRoleDot(a, u),
        ))
    }

    /// Shared-vector agreement: `out[i][j] = w . u[i][j]` for w[K], u[n,m,K].
    pub fn dot_capsules(&mut self, w: NodeId, u: NodeId) -> Result<NodeId, TensorError> {
        let (sw, su) = (self.val(w).shape(), self.val(u).shape());
        if sw.rank() != 1 || su.rank() != 3 || sw.dim(0) != su.dim(2) {
            return Err(TensorError::Dimension {
                op: "dot_capsules",
                lhs: sw.clone(),
                rhs: su.clone(),
            });
        }
        let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
        let (dw, du) = (self.val(w).data(), self.val(u).data());
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let base = (i * m + j) * k;
                let mut acc = T::zero();
                for l in 0..k {
                    acc += dw[l] * du[base + l];
                }
                out[i * m + j] = acc;
            }
        }
        let needs = self.needs(w) || self.needs(u);
        Ok(self.push(
            Tensor::new(Shape::matrix(n, m), out)?,
            needs,
            Op::DotCapsules(w, u),
        ))
    }

    /// Gather one entry per row: `out[i] = d[i][ids[i]]`.
    pub fn pick_per_row(&mut self, a: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 2 || s.dim(0) != ids.len() {
            return Err(TensorError::UnsupportedShape {
                op: "pick_per_row",
                shape: s.clone(),
            });
        }
        let cols = s.dim(1);
        for (i, &y) in ids.iter().enumerate() {
            if y >= cols {
                return Err(TensorError::Index {
                    op: "pick_per_row",
                    index: i * cols + y,
                    shape: s.clone(),
                });
            }
        }
        let d = self.val(a).data();
        let out: Vec<T> = ids.iter().enumerate().map(|(i, &y)| d[i * cols + y]).collect();
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::vector(out),
            needs,
            Op::PickPerRow(a, ids.to_vec()),
        ))
    }

    /// Mean over the capsule axis: u[n,m,K] -> [n,m].
    pub fn mean_capsules(&mut self, u: NodeId) -> Result<NodeId, TensorError> {
        let s = self.val(u).shape();
        if s.rank() != 3 {
            return Err(TensorError::UnsupportedShape {
                op: "mean_capsules",
                shape: s.clone(),
            });
        }
        let (n, m, k) = (s.dim(0), s.dim(1), s.dim(2));
        let d = self.val(u).data();
        let kf = T::from_f64(k as f64);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let base = (i * m + j) * k;
                let mut acc = T::zero();
                for l in 0..k {
                    acc += d[base + l];
                }
                out[i * m + j] = acc / kf;
            }
        }
        let needs = self.needs(u);
        Ok(self.push(
            Tensor::new(Shape::matrix(n, m), out)?,
            needs,
            Op::MeanCapsules(u),
        ))
    }

    pub fn row_max(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 2 {
            return Err(TensorError::UnsupportedShape {
                op: "row_max",
                shape: s.clone(),
            });
        }
        let (m, n) = (s.dim(0), s.dim(1));
        let d = self.val(a).data();
        let mut out = vec![T::zero(); m];
        for r in 0..m {
            let row = &d[r * n..(r + 1) * n];
            let mut best = row[0];
            for &x in &row[1..] {
                if x > best {
                    best = x;
                }
            }
            out[r] = best;
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::vector(out), needs, Op::RowMax(a)))
    }

    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.val(a).shape();
        if s.rank() != 2 {
            return Err(TensorError::UnsupportedShape {
                op: "row_sum",
                shape: s.clone(),
            });
        }
        let (m, n) = (s.dim(0), s.dim(1));
        let d = self.val(a).data();
        let mut out = vec![T::zero(); m];
        for r in 0..m {
            out[r] = d[r * n..(r + 1) * n]
                .iter()
                .fold(T::zero(), |acc, &v| acc + v);
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::vector(out), needs, Op::RowSum(a)))
    }

    /// Mean negative log-likelihood of per-row probabilities at the gold
    /// indices: `-(1/n) sum_i ln(max(d[i][ids[i]], floor))`.
    pub fn nll(&mut self, dists: NodeId, ids: &[usize], floor: T) -> Result<NodeId, TensorError> {
        let picked = self.pick_per_row(dists, ids)?;
        let logs = self.log(picked, floor);
        let avg = self.mean(logs);
        Ok(self.scale(avg, -T::one()))
    }

    // ---- backward ----

    /// Reverse pass from a scalar node. Visits nodes in exact reverse
    /// construction order; gradients accumulate into every node with
    /// `needs_grad`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        let loss_shape = self.val(loss).shape().clone();
        if loss_shape.numel() != 1 || loss_shape.rank() != 0 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let grad = match self.nodes[id].grad.take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &grad);
            self.nodes[id].grad = Some(grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, target: NodeId, delta: &[T]) {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        let numel = self.nodes[target.0].value.shape().numel();
        let slot = self.nodes[target.0]
            .grad
            .get_or_insert_with(|| vec![T::zero(); numel]);
        for (g, &d) in slot.iter_mut().zip(delta) {
            *g += d;
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn propagate(&mut self, id: usize, g: &[T]) {
        // Ops are matched by value-copying the parent ids; parent data is
        // read immutably and deltas are buffered before accumulation.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let sa = self.val(a).shape().clone();
                let sb = self.val(b).shape().clone();
                let (m, k, n) = (sa.dim(0), sa.dim(1), sb.dim(1));
                if self.needs(a) {
                    let db = self.val(b).data();
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for l in 0..k {
                                da[i * k + l] += gij * db[l * n + j];
                            }
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.needs(b) {
                    let da_ = self.val(a).data();
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        for l in 0..k {
                            let ail = da_[i * k + l];
                            for j in 0..n {
                                db[l * n + j] += ail * g[i * n + j];
                            }
                        }
                    }
                    self.accumulate(b, &db);
                }
            }
            Op::MatVec(a, x) => {
                let (a, x) = (*a, *x);
                let sa = self.val(a).shape().clone();
                let (m, k) = (sa.dim(0), sa.dim(1));
                if self.needs(a) {
                    let dx = self.val(x).data();
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        for l in 0..k {
                            da[i * k + l] = g[i] * dx[l];
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.needs(x) {
                    let da_ = self.val(a).data();
                    let mut dx = vec![T::zero(); k];
                    for i in 0..m {
                        for l in 0..k {
                            dx[l] += da_[i * k + l] * g[i];
                        }
                    }
                    self.accumulate(x, &dx);
                }
            }
            Op::Bilinear(x, w, p) => {
                let (x, w, p) = (*x, *w, *p);
                let g0 = g[0];
                let sw = self.val(w).shape().clone();
                let (d1, d2) = (sw.dim(0), sw.dim(1));
                if self.needs(x) {
                    let (dw, dp) = (self.val(w).data(), self.val(p).data());
                    let mut dx = vec![T::zero(); d1];
                    for i in 0..d1 {
                        let mut acc = T::zero();
                        for j in 0..d2 {
                            acc += dw[i * d2 + j] * dp[j];
                        }
                        dx[i] = g0 * acc;
                    }
                    self.accumulate(x, &dx);
                }
                if self.needs(w) {
                    let (dx_, dp) = (self.val(x).data(), self.val(p).data());
                    let mut dw = vec![T::zero(); d1 * d2];
                    for i in 0..d1 {
                        for j in 0..d2 {
                            dw[i * d2 + j] = g0 * dx_[i] * dp[j];
                        }
                    }
                    self.accumulate(w, &dw);
                }
                if self.needs(p) {
                    let (dx_, dw) = (self.val(x).data(), self.val(w).data());
                    let mut dp = vec![T::zero(); d2];
                    for j in 0..d2 {
                        let mut acc = T::zero();
                        for i in 0..d1 {
                            acc += dx_[i] * dw[i * d2 + j];
                        }
                        dp[j] = g0 * acc;
                    }
                    self.accumulate(p, &dp);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let delta: Vec<T> =
                        g.iter().zip(self.val(b).data()).map(|(&gi, &bi)| gi * bi).collect();
                    self.accumulate(a, &delta);
                }
                if self.needs(b) {
                    let delta: Vec<T> =
                        g.iter().zip(self.val(a).data()).map(|(&gi, &ai)| gi * ai).collect();
                    self.accumulate(b, &delta);
                }
            }
            Op::Scale(a, factor) => {
                let (a, factor) = (*a, *factor);
                let delta: Vec<T> = g.iter().map(|&gi| gi * factor).collect();
                self.accumulate(a, &delta);
            }
            Op::Concat(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.val(p).shape().numel();
                    let delta = g[offset..offset + len].to_vec();
                    self.accumulate(p, &delta);
                    offset += len;
                }
            }
            Op::StackRows(parts) => {
                let parts = parts.clone();
                let m = self.val(parts[0]).shape().dim(0);
                for (q, p) in parts.into_iter().enumerate() {
                    let delta = g[q * m..(q + 1) * m].to_vec();
                    self.accumulate(p, &delta);
                }
            }
            Op::StackCols(parts) => {
                let parts = parts.clone();
                let k = parts.len();
                let n = self.val(parts[0]).shape().dim(0);
                for (q, p) in parts.into_iter().enumerate() {
                    let delta: Vec<T> = (0..n).map(|i| g[i * k + q]).collect();
                    self.accumulate(p, &delta);
                }
            }
            Op::Reshape(a) => {
                let a = *a;
                self.accumulate(a, g);
            }
            Op::Transpose(a) => {
                let a = *a;
                let s = self.val(a).shape().clone();
                let (m, n) = (s.dim(0), s.dim(1));
                let mut delta = vec![T::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        delta[i * n + j] = g[j * m + i];
                    }
                }
                self.accumulate(a, &delta);
            }
            Op::Row(a, i) => {
                let (a, i) = (*a, *i);
                let s = self.val(a).shape().clone();
                let (m, n) = (s.dim(0), s.dim(1));
                let mut delta = vec![T::zero(); m * n];
                delta[i * n..(i + 1) * n].copy_from_slice(g);
                self.accumulate(a, &delta);
            }
            Op::Segment(a, start, len) => {
                let (a, start, len) = (*a, *start, *len);
                let total = self.val(a).shape().numel();
                let mut delta = vec![T::zero(); total];
                delta[start..start + len].copy_from_slice(&g[..len]);
                self.accumulate(a, &delta);
            }
            Op::Mean(a) => {
                let a = *a;
                let n = self.val(a).shape().numel();
                let scale = g[0] / T::from_f64(n as f64);
                let delta = vec![scale; n];
                self.accumulate(a, &delta);
            }
            Op::Sum(a) => {
                let a = *a;
                let n = self.val(a).shape().numel();
                let delta = vec![g[0]; n];
                self.accumulate(a, &delta);
            }
            Op::Tanh(a) => {
                let a = *a;
                let y = self.nodes[id].value.data();
                let delta: Vec<T> = g
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| gi * (T::one() - yi * yi))
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let y = self.nodes[id].value.data();
                let delta: Vec<T> = g
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| gi * yi * (T::one() - yi))
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::Log(a, floor) => {
                let (a, floor) = (*a, *floor);
                let x = self.val(a).data();
                let delta: Vec<T> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > floor { gi / xi } else { T::zero() })
                    .collect();
                self.accumulate(a, &delta);
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                let y = self.nodes[id].value.data();
                let s = self.nodes[id].value.shape();
                let cols = s.dim(s.rank() - 1);
                let rows = s.numel() / cols;
                let mut delta = vec![T::zero(); y.len()];
                for r in 0..rows {
                    let base = r * cols;
                    let mut dot = T::zero();
                    for j in 0..cols {
                        dot += g[base + j] * y[base + j];
                    }
                    for j in 0..cols {
                        delta[base + j] = y[base + j] * (g[base + j] - dot);
                    }
                }
                self.accumulate(a, &delta);
            }
            Op::SquashRows(a, eps) => {
                let (a, eps) = (*a, *eps);
                let x = self.val(a).data();
                let s = self.nodes[id].value.shape();
                let cols = s.dim(s.rank() - 1);
                let rows = s.numel() / cols;
                let mut delta = vec![T::zero(); x.len()];
                for r in 0..rows {
                    let base = r * cols;
                    let row = &x[base..base + cols];
                    let norm_sq = row.iter().fold(T::zero(), |acc, &v| acc + v * v);
                    let norm = norm_sq.sqrt();
                    let denom = (T::one() + norm_sq) * (norm + eps);
                    let alpha = norm_sq / denom;
                    // d(alpha)/d(norm) via the quotient rule
                    let ddenom = (norm + norm) * (norm + eps) + (T::one() + norm_sq);
                    let dalpha = ((norm + norm) * denom - norm_sq * ddenom) / (denom * denom);
                    let mut gdot = T::zero();
                    for j in 0..cols {
                        gdot += g[base + j] * row[j];
                    }
                    let tiny = T::from_f64(1e-30);
                    for j in 0..cols {
                        let mut d = alpha * g[base + j];
                        if norm > tiny {
                            d += dalpha * (row[j] / norm) * gdot;
                        }
                        delta[base + j] = d;
                    }
                }
                self.accumulate(a, &delta);
            }
            Op::CouplingSum(c, u) => {
                let (c, u) = (*c, *u);
                let su = self.val(u).shape().clone();
                let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
                if self.needs(c) {
                    let du = self.val(u).data();
                    let mut dc = vec![T::zero(); n * m];
                    for i in 0..n {
                        for j in 0..m {
                            let base = (i * m + j) * k;
                            let mut acc = T::zero();
                            for l in 0..k {
                                acc += g[j * k + l] * du[base + l];
                            }
                            dc[i * m + j] = acc;
                        }
                    }
                    self.accumulate(c, &dc);
                }
                if self.needs(u) {
                    let dc_ = self.val(c).data();
                    let mut du = vec![T::zero(); n * m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let cij = dc_[i * m + j];
                            let base = (i * m + j) * k;
                            for l in 0..k {
                                du[base + l] = cij * g[j * k + l];
                            }
                        }
                    }
                    self.accumulate(u, &du);
                }
            }
            Op::PerRoleDot(a, u) => {
                let (a, u) = (*a, *u);
                let su = self.val(u).shape().clone();
                let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
                if self.needs(a) {
                    let du = self.val(u).data();
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let base = (i * m + j) * k;
                            for l in 0..k {
                                da[j * k + l] += gij * du[base + l];
                            }
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.needs(u) {
                    let da_ = self.val(a).data();
                    let mut du = vec![T::zero(); n * m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let base = (i * m + j) * k;
                            for l in 0..k {
                                du[base + l] = gij * da_[j * k + l];
                            }
                        }
                    }
                    self.accumulate(u, &du);
                }
            }
            Op::DotCapsules(w, u) => {
                let (w, u) = (*w, *u);
                let su = self.val(u).shape().clone();
                let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
                if self.needs(w) {
                    let du = self.val(u).data();
                    let mut dw = vec![T::zero(); k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let base = (i * m + j) * k;
                            for l in 0..k {
                                dw[l] += gij * du[base + l];
                            }
                        }
                    }
                    self.accumulate(w, &dw);
                }
                if self.needs(u) {
                    let dw_ = self.val(w).data();
                    let mut du = vec![T::zero(); n * m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let base = (i * m + j) * k;
                            for l in 0..k {
                                du[base + l] = gij * dw_[l];
                            }
                        }
                    }
                    self.accumulate(u, &du);
                }
            }
            Op::PickPerRow(a, ids) => {
                let a = *a;
                let ids = ids.clone();
                let s = self.val(a).shape().clone();
                let cols = s.dim(1);
                let mut delta = vec![T::zero(); s.numel()];
                for (i, &y) in ids.iter().enumerate() {
                    delta[i * cols + y] = g[i];
                }
                self.accumulate(a, &delta);
            }
            Op::MeanCapsules(u) => {
                let u = *u;
                let su = self.val(u).shape().clone();
                let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
                let kf = T::from_f64(k as f64);
                let mut du = vec![T::zero(); n * m * k];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g[i * m + j] / kf;
                        let base = (i * m + j) * k;
                        for l in 0..k {
                            du[base + l] = gij;
                        }
                    }
                }
                self.accumulate(u, &du);
            }
            Op::RowMax(a) => {
                let a = *a;
                let s = self.val(a).shape().clone();
                let (m, n) = (s.dim(0), s.dim(1));
                let x = self.val(a).data();
                let mut delta = vec![T::zero(); m * n];
                for r in 0..m {
                    let row = &x[r * n..(r + 1) * n];
                    let mut arg = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[arg] {
                            arg = j;
                        }
                    }
                    delta[r * n + arg] = g[r];
                }
                self.accumulate(a, &delta);
            }
            Op::RowSum(a) => {
                let a = *a;
                let s = self.val(a).shape().clone();
                let (m, n) = (s.dim(0), s.dim(1));
                let mut delta = vec![T::zero(); m * n];
                for r in 0..m {
                    for j in 0..n {
                        delta[r * n + j] = g[r];
                    }
                }
                self.accumulate(a, &delta);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn graph() -> Graph<f64> {
        Graph::new()
    }

    #[test]
    fn matmul_identity_and_scalar_cases() {
        let mut g = graph();
        let eye = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let out = g.matmul(eye, v).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0]);

        let a = g.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let b = g.constant(Tensor::matrix(1, 1, vec![5.0]).unwrap());
        let out = g.matmul(a, b).unwrap();
        assert_eq!(g.value(out).data(), &[10.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = graph();
        let a = g.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = g.constant(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2\u{d7}3]") && msg.contains("[2\u{d7}2]"), "{msg}");
    }

    #[test]
    fn bilinear_selects_basis_entry() {
        let mut g = graph();
        let x = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let w = g.constant(Tensor::matrix(2, 2, vec![10.0, 20.0, 30.0, 40.0]).unwrap());
        let p = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let out = g.bilinear(x, w, p).unwrap();
        assert_eq!(g.value(out).item(), 20.0);

        let zero = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let out = g.bilinear(zero, w, p).unwrap();
        assert_eq!(g.value(out).item(), 0.0);
    }

    #[test]
    fn bilinear_matches_explicit_sum() {
        // oracle: explicit sum over i,j of x_i W_ij p_j
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut expect = 0.0;
            for i in 0..3 {
                for j in 0..2 {
                    expect += x[i] * w[i * 2 + j] * p[j];
                }
            }
            let mut g = graph();
            let xn = g.constant(Tensor::vector(x));
            let wn = g.constant(Tensor::matrix(3, 2, w).unwrap());
            let pn = g.constant(Tensor::vector(p));
            let out = g.bilinear(xn, wn, pn).unwrap();
            assert!((g.value(out).item() - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_uniform_at_zero_logits() {
        let mut g = graph();
        let z = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let s = g.softmax(z).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let mut g = graph();
        let z = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let s = g.softmax(z).unwrap();
        let d = g.value(s).data();
        assert!((d[0] - 1.0).abs() <= 1e-9 && d[1].abs() <= 1e-9);
        assert!(g.value(s).is_finite());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        // oracle: exp(x_i) / sum exp(x_j), without max shifting
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let denom: f64 = x.iter().map(|v| v.exp()).sum();
            let expect: Vec<f64> = x.iter().map(|v| v.exp() / denom).collect();
            let mut g = graph();
            let xn = g.constant(Tensor::vector(x));
            let s = g.softmax(xn).unwrap();
            for (a, e) in g.value(s).data().iter().zip(&expect) {
                assert!((a - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let shifted: Vec<f64> = x.iter().map(|v| v + 123.456).collect();
            let mut g = graph();
            let a = g.constant(Tensor::vector(x));
            let b = g.constant(Tensor::vector(shifted));
            let sa = g.softmax(a).unwrap();
            let sb = g.softmax(b).unwrap();
            let sum: f64 = g.value(sa).data().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
            for (u, v) in g.value(sa).data().iter().zip(g.value(sb).data()) {
                assert!((u - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn softmax_rejects_scalar() {
        let mut g = graph();
        let s = g.constant(Tensor::scalar(1.0));
        assert!(g.softmax(s).is_err());
    }

    #[test]
    fn squash_zero_maps_to_zero() {
        let mut g = graph();
        let z = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let v = g.squash(z, 1e-9).unwrap();
        assert_eq!(g.value(v).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn squash_unit_vector_halves() {
        let mut g = graph();
        let u = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let v = g.squash(u, 1e-9).unwrap();
        let d = g.value(v).data();
        assert!((d[0] - 0.5).abs() <= 1e-8 && d[1].abs() <= 1e-12);
    }

    #[test]
    fn squash_norm_matches_scalar_formula() {
        // oracle: |v| = (|s|^2 / (1 + |s|^2)) * |s| / (|s| + eps)
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expect = (norm * norm) / (1.0 + norm * norm) * norm / (norm + 1e-9);
            let mut g = graph();
            let sn = g.constant(Tensor::vector(s));
            let v = g.squash(sn, 1e-9).unwrap();
            assert!((g.value(v).norm() - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn concat_and_mean_examples() {
        let mut g = graph();
        let a = g.constant(Tensor::vector(vec![1.0]));
        let b = g.constant(Tensor::vector(vec![2.0, 3.0]));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);

        let m = g.constant(Tensor::vector(vec![2.0, 4.0]));
        let avg = g.mean(m);
        assert_eq!(g.value(avg).item(), 3.0);
    }

    #[test]
    fn nll_of_onehot_is_zero_and_floor_counts() {
        let mut g = graph();
        let d = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let loss = g.nll(d, &[0, 1], 1e-12).unwrap();
        assert!(g.value(loss).item().abs() <= 1e-12);
        assert_eq!(g.log_floor_hits(), 0);

        let loss2 = g.nll(d, &[1, 0], 1e-12).unwrap();
        assert!(g.value(loss2).item() > 20.0);
        assert_eq!(g.log_floor_hits(), 2);
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let run = || {
            let mut rng = StdRng::seed_from_u64(77);
            let mut g = graph();
            let a = g.leaf(
                Tensor::matrix(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap(),
                true,
            );
            let b = g.leaf(
                Tensor::matrix(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap(),
                true,
            );
            let m = g.matmul(a, b).unwrap();
            let s = g.softmax(m).unwrap();
            let q = g.squash(s, 1e-9).unwrap();
            let loss = g.sum(q);
            g.backward(loss).unwrap();
            (
                g.grad(a).unwrap().into_data(),
                g.grad(b).unwrap().into_data(),
            )
        };
        let (ga1, gb1) = run();
        let (ga2, gb2) = run();
        assert!(ga1.iter().zip(&ga2).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(gb1.iter().zip(&gb2).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = graph();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(
            g.backward(a),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn constant_branches_get_no_grad() {
        let mut g = graph();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let c = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let s = g.add(a, c).unwrap();
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[1.0, 1.0]);
        assert!(g.grad(c).is_none());
    }
}
