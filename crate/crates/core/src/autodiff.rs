//! Reverse-mode automatic differentiation on a flat tape of matrix ops.
//!
//! The tape is define-by-run: every op evaluates eagerly as it is recorded,
//! so a forward pass builds the graph and [`Tape::backward`] replays it in
//! reverse. Tapes are cheap and meant to be rebuilt for every training step;
//! nothing is retained across steps except the parameter matrices owned by
//! the caller.
//!
//! Gradients accumulate: a node consumed by several downstream ops receives
//! the sum of their contributions, and calling `backward` twice adds the
//! second pass's gradients on top of the first. Use [`Tape::zero_grads`] to
//! reset between objectives on the same tape.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Handle to a node on a [`Tape`]. Copyable; only meaningful together with
/// the tape that produced it.
#[derive(Clone, Copy, Debug)]
pub struct Tensor {
    idx: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Transpose { a: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    AddConst { a: usize },
    AddRowBroadcast { a: usize, bias: usize },
    Relu { a: usize },
    LeakyRelu { a: usize, alpha: f64 },
    Tanh { a: usize },
    Exp { a: usize },
    Log { a: usize },
    LogSumExpRows { a: usize },
    L2NormalizeRows { a: usize },
    MeanAll { a: usize },
    SumAll { a: usize },
    SumRows { a: usize },
    MeanRows { a: usize },
    GatherRows { a: usize, idx: Vec<usize> },
    ConcatCols { a: usize, b: usize },
    ConcatRows { a: usize, b: usize },
}

struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    flip_tanh_rule: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Corrupt the backward rule for `tanh` by flipping its sign.
    ///
    /// Exists solely so gradient-validation harnesses can demonstrate that
    /// they detect a broken rule; nothing else enables it. Forward values
    /// are unaffected.
    pub fn flip_tanh_rule_for_validation(&mut self) {
        self.flip_tanh_rule = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Tensor {
        let (rows, cols) = value.shape();
        let grad = Matrix::zeros(rows, cols);
        self.nodes.push(Node { value, grad, op });
        Tensor { idx: self.nodes.len() - 1, rows, cols }
    }

    fn node(&self, t: Tensor) -> &Node {
        let n = &self.nodes[t.idx];
        debug_assert_eq!(n.value.shape(), (t.rows, t.cols), "tensor/tape mismatch");
        n
    }

    /// Record an input matrix. Leaves are where gradients are read back from;
    /// constants (masks, one-hot tables) are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: &Matrix) -> Result<Tensor> {
        if value.rows() == 0 || value.cols() == 0 {
            return Err(Error::EmptyDimension {
                op: "leaf",
                rows: value.rows(),
                cols: value.cols(),
            });
        }
        Ok(self.push(value.clone(), Op::Leaf))
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.node(t).value
    }

    pub fn grad(&self, t: Tensor) -> &Matrix {
        &self.node(t).grad
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self, t: Tensor) -> Result<f64> {
        if t.shape() != (1, 1) {
            return Err(Error::NonScalarObjective { rows: t.rows, cols: t.cols });
        }
        Ok(self.node(t).value.get(0, 0))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            for g in n.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    fn shape_err(
        op: &'static str,
        a: Tensor,
        b: Tensor,
    ) -> Error {
        Error::ShapeMismatch {
            op,
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        }
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(Self::shape_err("matmul", a, b));
        }
        let value = self.node(a).value.matmul(&self.node(b).value);
        Ok(self.push(value, Op::MatMul { a: a.idx, b: b.idx }))
    }

    pub fn transpose(&mut self, a: Tensor) -> Tensor {
        let value = self.node(a).value.transpose();
        self.push(value, Op::Transpose { a: a.idx })
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Self::shape_err("add", a, b));
        }
        let mut value = self.node(a).value.clone();
        value.add_scaled(&self.node(b).value, 1.0);
        Ok(self.push(value, Op::Add { a: a.idx, b: b.idx }))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Self::shape_err("sub", a, b));
        }
        let mut value = self.node(a).value.clone();
        value.add_scaled(&self.node(b).value, -1.0);
        Ok(self.push(value, Op::Sub { a: a.idx, b: b.idx }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Self::shape_err("mul", a, b));
        }
        let va = &self.node(a).value;
        let vb = &self.node(b).value;
        let data: Vec<f64> = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Matrix::new(a.rows, a.cols, data);
        Ok(self.push(value, Op::Mul { a: a.idx, b: b.idx }))
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let value = self.node(a).value.map(|x| c * x);
        self.push(value, Op::Scale { a: a.idx, c })
    }

    pub fn add_const(&mut self, a: Tensor, c: f64) -> Tensor {
        let value = self.node(a).value.map(|x| x + c);
        self.push(value, Op::AddConst { a: a.idx })
    }

    /// `a` (m x n) plus a bias row (1 x n) broadcast over all rows.
    pub fn add_row_broadcast(&mut self, a: Tensor, bias: Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != a.cols {
            return Err(Self::shape_err("add_row_broadcast", a, bias));
        }
        let va = &self.node(a).value;
        let vb = &self.node(bias).value;
        let mut value = va.clone();
        for i in 0..a.rows {
            for (x, &b) in value.row_mut(i).iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRowBroadcast { a: a.idx, bias: bias.idx }))
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let value = self.node(a).value.map(|x| x.max(0.0));
        self.push(value, Op::Relu { a: a.idx })
    }

    pub fn leaky_relu(&mut self, a: Tensor, alpha: f64) -> Tensor {
        let value = self.node(a).value.map(|x| if x > 0.0 { x } else { alpha * x });
        self.push(value, Op::LeakyRelu { a: a.idx, alpha })
    }

    pub fn tanh(&mut self, a: Tensor) -> Tensor {
        let value = self.node(a).value.map(f64::tanh);
        self.push(value, Op::Tanh { a: a.idx })
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        let value = self.node(a).value.map(f64::exp);
        self.push(value, Op::Exp { a: a.idx })
    }

    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        let va = &self.node(a).value;
        for (index, &x) in va.data().iter().enumerate() {
            if x <= 0.0 {
                return Err(Error::NonPositiveLog { value: x, index });
            }
        }
        let value = va.map(f64::ln);
        Ok(self.push(value, Op::Log { a: a.idx }))
    }

    /// Row-wise log(sum(exp(x))), max-subtracted for stability: m x n -> m x 1.
    pub fn log_sum_exp_rows(&mut self, a: Tensor) -> Tensor {
        let va = &self.node(a).value;
        let mut out = Vec::with_capacity(a.rows);
        for i in 0..a.rows {
            let row = va.row(i);
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let s: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
            out.push(mx + s.ln());
        }
        let value = Matrix::new(a.rows, 1, out);
        self.push(value, Op::LogSumExpRows { a: a.idx })
    }

    /// Scale every row to unit Euclidean norm: m x n -> m x n.
    /// Rows with norm below 1e-12 are rejected rather than silently inflated.
    pub fn l2_normalize_rows(&mut self, a: Tensor) -> Result<Tensor> {
        let va = &self.node(a).value;
        let mut value = va.clone();
        for i in 0..a.rows {
            let nrm = norm(va.row(i));
            if nrm < 1e-12 {
                return Err(Error::DegenerateEmbedding { row: i, norm: nrm });
            }
            let inv = 1.0 / nrm;
            for x in value.row_mut(i) {
                *x *= inv;
            }
        }
        Ok(self.push(value, Op::L2NormalizeRows { a: a.idx }))
    }

    pub fn mean_all(&mut self, a: Tensor) -> Tensor {
        let va = &self.node(a).value;
        let s: f64 = va.data().iter().sum();
        let value = Matrix::scalar(s / va.len() as f64);
        self.push(value, Op::MeanAll { a: a.idx })
    }

    pub fn sum_all(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.node(a).value.data().iter().sum();
        let value = Matrix::scalar(s);
        self.push(value, Op::SumAll { a: a.idx })
    }

    /// Sum across each row: m x n -> m x 1.
    pub fn sum_rows(&mut self, a: Tensor) -> Tensor {
        let va = &self.node(a).value;
        let data: Vec<f64> = (0..a.rows).map(|i| va.row(i).iter().sum()).collect();
        let value = Matrix::new(a.rows, 1, data);
        self.push(value, Op::SumRows { a: a.idx })
    }

    /// Mean across each row: m x n -> m x 1.
    pub fn mean_rows(&mut self, a: Tensor) -> Tensor {
        let va = &self.node(a).value;
        let n = a.cols as f64;
        let data: Vec<f64> = (0..a.rows).map(|i| va.row(i).iter().sum::<f64>() / n).collect();
        let value = Matrix::new(a.rows, 1, data);
        self.push(value, Op::MeanRows { a: a.idx })
    }

    /// Select rows by index (repeats allowed): out row k = a row idx[k].
    /// The backward pass scatter-adds, so repeated indices accumulate.
    pub fn gather_rows(&mut self, a: Tensor, idx: &[usize]) -> Result<Tensor> {
        if idx.is_empty() {
            return Err(Error::EmptyDimension { op: "gather_rows", rows: 0, cols: a.cols });
        }
        for &k in idx {
            if k >= a.rows {
                return Err(Error::LabelOutOfRange { label: k, num_classes: a.rows });
            }
        }
        let va = &self.node(a).value;
        let mut data = Vec::with_capacity(idx.len() * a.cols);
        for &k in idx {
            data.extend_from_slice(va.row(k));
        }
        let value = Matrix::new(idx.len(), a.cols, data);
        Ok(self.push(value, Op::GatherRows { a: a.idx, idx: idx.to_vec() }))
    }

    /// Concatenate side by side: (m x n1, m x n2) -> m x (n1+n2).
    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows {
            return Err(Self::shape_err("concat_cols", a, b));
        }
        let va = &self.node(a).value;
        let vb = &self.node(b).value;
        let mut data = Vec::with_capacity(a.rows * (a.cols + b.cols));
        for i in 0..a.rows {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        let value = Matrix::new(a.rows, a.cols + b.cols, data);
        Ok(self.push(value, Op::ConcatCols { a: a.idx, b: b.idx }))
    }

    /// Stack vertically: (m1 x n, m2 x n) -> (m1+m2) x n.
    pub fn concat_rows(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.cols {
            return Err(Self::shape_err("concat_rows", a, b));
        }
        let va = &self.node(a).value;
        let vb = &self.node(b).value;
        let mut data = Vec::with_capacity((a.rows + b.rows) * a.cols);
        data.extend_from_slice(va.data());
        data.extend_from_slice(vb.data());
        let value = Matrix::new(a.rows + b.rows, a.cols, data);
        Ok(self.push(value, Op::ConcatRows { a: a.idx, b: b.idx }))
    }

    /// Propagate d(objective)/d(node) to every node, adding into `grad`.
    ///
    /// The objective must be 1x1. Adjoints are staged in a scratch buffer so
    /// repeated calls always add one full, correct pass.
    pub fn backward(&mut self, objective: Tensor) -> Result<()> {
        if objective.shape() != (1, 1) {
            return Err(Error::NonScalarObjective {
                rows: objective.rows,
                cols: objective.cols,
            });
        }
        let mut adj: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        adj[objective.idx].set(0, 0, 1.0);

        for i in (0..=objective.idx).rev() {
            // Take the output adjoint; contributions to it are already
            // complete because consumers sit later on the tape.
            let g = std::mem::replace(&mut adj[i], Matrix::zeros(0, 0));
            if g.data().iter().all(|&x| x == 0.0) {
                adj[i] = g;
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let da = g.matmul_nt(&self.nodes[*b].value);
                    let db = self.nodes[*a].value.matmul_tn(&g);
                    adj[*a].add_scaled(&da, 1.0);
                    adj[*b].add_scaled(&db, 1.0);
                }
                Op::Transpose { a } => {
                    let gt = g.transpose();
                    adj[*a].add_scaled(&gt, 1.0);
                }
                Op::Add { a, b } => {
                    adj[*a].add_scaled(&g, 1.0);
                    adj[*b].add_scaled(&g, 1.0);
                }
                Op::Sub { a, b } => {
                    adj[*a].add_scaled(&g, 1.0);
                    adj[*b].add_scaled(&g, -1.0);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[b].value.data())
                        .map(|(&gx, &bx)| gx * bx)
                        .collect();
                    let db: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(&gx, &ax)| gx * ax)
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, da), 1.0);
                    adj[b].add_scaled(&Matrix::new(rows, cols, db), 1.0);
                }
                Op::Scale { a, c } => {
                    adj[*a].add_scaled(&g, *c);
                }
                Op::AddConst { a } => {
                    adj[*a].add_scaled(&g, 1.0);
                }
                Op::AddRowBroadcast { a, bias } => {
                    adj[*a].add_scaled(&g, 1.0);
                    let gb = adj[*bias].data_mut();
                    for i in 0..g.rows() {
                        for (gbj, &gij) in gb.iter_mut().zip(g.row(i)) {
                            *gbj += gij;
                        }
                    }
                }
                Op::Relu { a } => {
                    let a = *a;
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(&gx, &x)| if x > 0.0 { gx } else { 0.0 })
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, contrib), 1.0);
                }
                Op::LeakyRelu { a, alpha } => {
                    let (a, alpha) = (*a, *alpha);
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(&gx, &x)| if x > 0.0 { gx } else { alpha * gx })
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, contrib), 1.0);
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let sign = if self.flip_tanh_rule { -1.0 } else { 1.0 };
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[i].value.data())
                        .map(|(&gx, &y)| gx * sign * (1.0 - y * y))
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, contrib), 1.0);
                }
                Op::Exp { a } => {
                    let a = *a;
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[i].value.data())
                        .map(|(&gx, &y)| gx * y)
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, contrib), 1.0);
                }
                Op::Log { a } => {
                    let a = *a;
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(&gx, &x)| gx / x)
                        .collect();
                    let (rows, cols) = g.shape();
                    adj[a].add_scaled(&Matrix::new(rows, cols, contrib), 1.0);
                }
                Op::LogSumExpRows { a } => {
                    let a = *a;
                    let va = &self.nodes[a].value;
                    let lse = &self.nodes[i].value;
                    let (rows, cols) = va.shape();
                    let mut contrib = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.get(r, 0);
                        if gr == 0.0 {
                            continue;
                        }
                        let l = lse.get(r, 0);
                        for (c, &x) in contrib.row_mut(r).iter_mut().zip(va.row(r)) {
                            // softmax entry, stable because x <= lse.
                            *c = gr * (x - l).exp();
                        }
                    }
                    adj[a].add_scaled(&contrib, 1.0);
                }
                Op::L2NormalizeRows { a } => {
                    let a = *a;
                    let va = &self.nodes[a].value;
                    let y = &self.nodes[i].value;
                    let (rows, cols) = va.shape();
                    let mut contrib = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let nrm = norm(va.row(r));
                        let gy = dot(g.row(r), y.row(r));
                        for ((c, &gx), &yx) in
                            contrib.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r))
                        {
                            *c = (gx - gy * yx) / nrm;
                        }
                    }
                    adj[a].add_scaled(&contrib, 1.0);
                }
                Op::MeanAll { a } => {
                    let a = *a;
                    let scale = g.get(0, 0) / self.nodes[a].value.len() as f64;
                    for x in adj[a].data_mut() {
                        *x += scale;
                    }
                }
                Op::SumAll { a } => {
                    let a = *a;
                    let g0 = g.get(0, 0);
                    for x in adj[a].data_mut() {
                        *x += g0;
                    }
                }
                Op::SumRows { a } => {
                    let a = *a;
                    let rows = adj[a].rows();
                    for r in 0..rows {
                        let gr = g.get(r, 0);
                        for x in adj[a].row_mut(r) {
                            *x += gr;
                        }
                    }
                }
                Op::MeanRows { a } => {
                    let a = *a;
                    let rows = adj[a].rows();
                    let n = adj[a].cols() as f64;
                    for r in 0..rows {
                        let gr = g.get(r, 0) / n;
                        for x in adj[a].row_mut(r) {
                            *x += gr;
                        }
                    }
                }
                Op::GatherRows { a, idx } => {
                    let a = *a;
                    let idx = idx.clone();
                    for (k, &src) in idx.iter().enumerate() {
                        for (x, &gx) in adj[a].row_mut(src).iter_mut().zip(g.row(k)) {
                            *x += gx;
                        }
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (a, b) = (*a, *b);
                    let n1 = adj[a].cols();
                    let rows = g.rows();
                    for r in 0..rows {
                        let grow = g.row(r);
                        for (x, &gx) in adj[a].row_mut(r).iter_mut().zip(&grow[..n1]) {
                            *x += gx;
                        }
                        for (x, &gx) in adj[b].row_mut(r).iter_mut().zip(&grow[n1..]) {
                            *x += gx;
                        }
                    }
                }
                Op::ConcatRows { a, b } => {
                    let (a, b) = (*a, *b);
                    let m1 = adj[a].rows();
                    for r in 0..m1 {
                        for (x, &gx) in adj[a].row_mut(r).iter_mut().zip(g.row(r)) {
                            *x += gx;
                        }
                    }
                    for r in 0..adj[b].rows() {
                        for (x, &gx) in adj[b].row_mut(r).iter_mut().zip(g.row(m1 + r)) {
                            *x += gx;
                        }
                    }
                }
            }
            adj[i] = g;
        }

        for (node, a) in self.nodes.iter_mut().zip(&adj) {
            node.grad.add_scaled(a, 1.0);
        }
        Ok(())
    }
}

/// Compare the tape gradient of `f` at `x` against central finite
/// differences, returning the worst relative error
/// `|g_tape - g_fd| / max(1, |g_fd|)` over all elements of `x`.
///
/// `f` must record a scalar objective using `x` as its (sole checked) leaf;
/// it may create additional leaves internally. `eps` must lie in (0, 1e-2].
pub fn grad_check<F>(f: F, x: &Matrix, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Tensor) -> Result<Tensor>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Contract(format!(
            "finite-difference step {eps:e} outside (0, 1e-2]"
        )));
    }
    let mut tape = Tape::new();
    let xt = tape.leaf(x)?;
    let y = f(&mut tape, xt)?;
    if y.shape() != (1, 1) {
        return Err(Error::NonScalarObjective { rows: y.rows(), cols: y.cols() });
    }
    tape.backward(y)?;
    let analytic = tape.grad(xt).clone();

    let eval = |m: &Matrix| -> Result<f64> {
        let mut t = Tape::new();
        let xt = t.leaf(m)?;
        let y = f(&mut t, xt)?;
        t.scalar(y)
    };

    let mut worst = 0.0_f64;
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[k] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[k] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let ad = analytic.data()[k];
        let rel = (ad - fd).abs() / fd.abs().max(1.0);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_chain_gradient_is_exact() {
        // f(X) = sum(A X B); df/dX = A^T J B^T with J all-ones.
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 4.0]]);
        let b = Matrix::from_rows(&[vec![2.0, 0.0, 1.0], vec![-1.0, 3.0, 0.5]]);
        let x = Matrix::from_rows(&[vec![0.7, -0.3], vec![1.2, 0.4]]);

        let mut tape = Tape::new();
        let at = tape.leaf(&a).unwrap();
        let xt = tape.leaf(&x).unwrap();
        let bt = tape.leaf(&b).unwrap();
        let ax = tape.matmul(at, xt).unwrap();
        let axb = tape.matmul(ax, bt).unwrap();
        let s = tape.sum_all(axb);
        tape.backward(s).unwrap();

        let ones = Matrix::filled(3, 3, 1.0);
        let expect = a.matmul_tn(&ones).matmul_nt(&b);
        for (g, e) in tape.grad(xt).data().iter().zip(expect.data()) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn fan_out_accumulates() {
        // f(x) = sum(x*x + x): grad 2x + 1.
        let x = Matrix::row_vector(vec![1.5, -2.0, 0.25]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        let sq = tape.mul(xt, xt).unwrap();
        let sum = tape.add(sq, xt).unwrap();
        let s = tape.sum_all(sum);
        tape.backward(s).unwrap();
        for (g, &v) in tape.grad(xt).data().iter().zip(x.data()) {
            assert!((g - (2.0 * v + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_adds_another_pass() {
        let x = Matrix::scalar(3.0);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        let y = tape.mul(xt, xt).unwrap();
        tape.backward(y).unwrap();
        assert!((tape.grad(xt).get(0, 0) - 6.0).abs() < 1e-12);
        tape.backward(y).unwrap();
        assert!((tape.grad(xt).get(0, 0) - 12.0).abs() < 1e-12);
        tape.zero_grads();
        tape.backward(y).unwrap();
        assert!((tape.grad(xt).get(0, 0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Matrix::row_vector(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        assert!(matches!(
            tape.backward(xt),
            Err(Error::NonScalarObjective { rows: 1, cols: 2 })
        ));
    }

    #[test]
    fn log_rejects_non_positive() {
        let x = Matrix::row_vector(vec![1.0, 0.0]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        assert!(matches!(
            tape.log(xt),
            Err(Error::NonPositiveLog { index: 1, .. })
        ));
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        assert!(matches!(
            tape.l2_normalize_rows(xt),
            Err(Error::DegenerateEmbedding { row: 1, .. })
        ));
    }

    #[test]
    fn lse_matches_plain_formula_and_survives_large_inputs() {
        let x = Matrix::from_rows(&[vec![1000.0, 1000.0], vec![0.0, 0.0]]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        let l = tape.log_sum_exp_rows(xt);
        let v = tape.value(l);
        assert!((v.get(0, 0) - (1000.0 + 2.0_f64.ln())).abs() < 1e-9);
        assert!((v.get(1, 0) - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grad_check_passes_for_composite_expression() {
        let x = Matrix::from_rows(&[vec![0.3, -0.7, 1.1], vec![0.9, 0.2, -0.4]]);
        let err = grad_check(
            |t, xt| {
                let n = t.l2_normalize_rows(xt)?;
                let nt = t.transpose(n);
                let sims = t.matmul(n, nt)?;
                let e = t.tanh(sims);
                let l = t.log_sum_exp_rows(e);
                Ok(t.mean_all(l))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_rejects_bad_eps() {
        let x = Matrix::scalar(1.0);
        assert!(grad_check(|t, xt| Ok(t.sum_all(xt)), &x, 0.0).is_err());
        assert!(grad_check(|t, xt| Ok(t.sum_all(xt)), &x, 0.5).is_err());
    }

    #[test]
    fn concat_rows_stacks_and_routes_gradients() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let b = Matrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]);
        let mut tape = Tape::new();
        let at = tape.leaf(&a).unwrap();
        let bt = tape.leaf(&b).unwrap();
        let c = tape.concat_rows(at, bt).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        // f = sum(first row) + 3*sum(rest): route distinct weights per block.
        let w = Matrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 3.0], vec![3.0, 3.0]]);
        let wt = tape.leaf(&w).unwrap();
        let prod = tape.mul(c, wt).unwrap();
        let s = tape.sum_all(prod);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(at).data(), &[1.0, 1.0]);
        assert_eq!(tape.grad(bt).data(), &[3.0, 3.0, 3.0, 3.0]);

        // Same tensor on both sides: contributions accumulate.
        let mut tape = Tape::new();
        let bt = tape.leaf(&b).unwrap();
        let both = tape.concat_rows(bt, bt).unwrap();
        let s = tape.sum_all(both);
        tape.backward(s).unwrap();
        assert!(tape.grad(bt).data().iter().all(|&g| g == 2.0));

        let err = grad_check(
            |t, xt| {
                let shifted = t.add_const(xt, 0.5);
                let c = t.concat_rows(xt, shifted)?;
                let sq = t.mul(c, c)?;
                Ok(t.mean_all(sq))
            },
            &b,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }
}
