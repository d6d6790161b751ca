use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{mm, mm_nt, mm_tn, row_softmax, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScalarMul(Var, Var),
    RowSoftmax(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    MeanRows(Var),
    MaxCols(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    BroadcastAddCol(Var, Var),
    AddRow(Var, Var),
    Sum(Var),
    SoftmaxCrossEntropy(Var, usize),
    PlackettLuceNll(Var, Vec<usize>),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul-nt",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::ScalarMul(..) => "scalar-mul",
            Op::RowSoftmax(_) => "row-softmax",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::ConcatCols(_) => "concat-cols",
            Op::ConcatRows(_) => "concat-rows",
            Op::SliceCols(..) => "slice-cols",
            Op::MeanRows(_) => "mean-rows",
            Op::MaxCols(..) => "max-cols",
            Op::GatherRows(..) => "gather-rows",
            Op::BroadcastAddCol(..) => "broadcast-add-col",
            Op::AddRow(..) => "add-row",
            Op::Sum(_) => "sum",
            Op::SoftmaxCrossEntropy(..) => "softmax-cross-entropy",
            Op::PlackettLuceNll(..) => "plackett-luce-nll",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
}

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every input id is smaller than
/// the id of the node consuming it and the graph is acyclic by construction.
/// Calling [`Graph::backward`] repeatedly adds each sweep's adjoints into the
/// per-node accumulators.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dim_err(kind: &'static str, shapes: &[&Tensor]) -> AutodiffError {
    AutodiffError::Dimension {
        kind,
        shapes: shapes.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn v(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn matrix_check(&self, kind: &'static str, v: Var) -> Result<(), AutodiffError> {
        if self.v(v).is_matrix() {
            Ok(())
        } else {
            Err(dim_err(kind, &[self.v(v)]))
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.v(a), self.v(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(dim_err("matmul", &[ta, tb]));
        }
        let out = mm(ta, tb);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.v(a), self.v(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.cols() {
            return Err(dim_err("matmul-nt", &[ta, tb]));
        }
        let out = mm_nt(ta, tb);
        Ok(self.push(Op::MatMulNt(a, b), out))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.matrix_check("transpose", a)?;
        let out = self.v(a).transpose();
        Ok(self.push(Op::Transpose(a), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.v(a), self.v(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", &[ta, tb]));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.v(a), self.v(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("mul", &[ta, tb]));
        }
        let d = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), d).expect("same shape");
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Multiplication by a fixed constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.v(a).scale(s);
        self.push(Op::Scale(a, s), out)
    }

    /// Multiplication of `a` by the `[1, 1]` node `s`.
    pub fn scalar_mul(&mut self, a: Var, s: Var) -> Result<Var, AutodiffError> {
        let ts = self.v(s);
        if ts.len() != 1 {
            return Err(dim_err("scalar-mul", &[self.v(a), ts]));
        }
        let out = self.v(a).scale(ts.item());
        Ok(self.push(Op::ScalarMul(a, s), out))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.matrix_check("row-softmax", a)?;
        let out = row_softmax(self.v(a));
        Ok(self.push(Op::RowSoftmax(a), out))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.v(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.tanh()).collect())
            .expect("same shape");
        self.push(Op::Tanh(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.v(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.max(0.0)).collect())
            .expect("same shape");
        self.push(Op::Relu(a), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyInput("concat-cols"))?;
        let rows = self.v(*first).rows();
        if parts
            .iter()
            .any(|p| !self.v(*p).is_matrix() || self.v(*p).rows() != rows)
        {
            let ts: Vec<&Tensor> = parts.iter().map(|p| self.v(*p)).collect();
            return Err(dim_err("concat-cols", &ts));
        }
        let cols: usize = parts.iter().map(|p| self.v(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.v(*p).row(r));
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Tensor::matrix(rows, cols, out)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyInput("concat-rows"))?;
        let cols = self.v(*first).cols();
        if parts
            .iter()
            .any(|p| !self.v(*p).is_matrix() || self.v(*p).cols() != cols)
        {
            let ts: Vec<&Tensor> = parts.iter().map(|p| self.v(*p)).collect();
            return Err(dim_err("concat-rows", &ts));
        }
        let rows: usize = parts.iter().map(|p| self.v(*p).rows()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for p in parts {
            out.extend_from_slice(self.v(*p).data());
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Tensor::matrix(rows, cols, out)))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let t = self.v(a);
        if !t.is_matrix() || start >= end || end > t.cols() {
            return Err(dim_err("slice-cols", &[t]));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(t.rows() * w);
        for r in 0..t.rows() {
            out.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::matrix(t.rows(), w, out);
        Ok(self.push(Op::SliceCols(a, start, end), out))
    }

    /// Mean over rows: `n×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.matrix_check("mean-rows", a)?;
        let t = self.v(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(t.row(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        Ok(self.push(Op::MeanRows(a), Tensor::matrix(1, c, out)))
    }

    /// Column-wise maximum: `n×c → 1×c`. Ties route the gradient to the first row.
    pub fn max_cols(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.matrix_check("max-cols", a)?;
        let t = self.v(a);
        let (r, c) = (t.rows(), t.cols());
        let mut arg = vec![0usize; c];
        let mut out = t.row(0).to_vec();
        for i in 1..r {
            for (j, v) in t.row(i).iter().enumerate() {
                if *v > out[j] {
                    out[j] = *v;
                    arg[j] = i;
                }
            }
        }
        Ok(self.push(Op::MaxCols(a, arg), Tensor::matrix(1, c, out)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.v(a);
        if !t.is_matrix() || idx.is_empty() || idx.iter().any(|&i| i >= t.rows()) {
            return Err(dim_err("gather-rows", &[t]));
        }
        let c = t.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, out);
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), out))
    }

    /// `a + col · 1ᵀ`: adds the `n×1` column to every column of `a`.
    pub fn broadcast_add_col(&mut self, a: Var, col: Var) -> Result<Var, AutodiffError> {
        let (ta, tc) = (self.v(a), self.v(col));
        if !ta.is_matrix() || !tc.is_matrix() || tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(dim_err("broadcast-add-col", &[ta, tc]));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, chunk) in out.data_mut().chunks_mut(c).enumerate() {
            let z = tc.data()[i];
            for v in chunk {
                *v += z;
            }
        }
        Ok(self.push(Op::BroadcastAddCol(a, col), out))
    }

    /// `a + 1 · row`: adds the `1×c` row to every row of `a` (bias).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (ta, tr) = (self.v(a), self.v(row));
        if !ta.is_matrix() || !tr.is_matrix() || tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(dim_err("add-row", &[ta, tr]));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(tr.data()) {
                *v += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.v(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// `−log softmax(a)[target]` for a `1×M` score row.
    pub fn softmax_cross_entropy(&mut self, a: Var, target: usize) -> Result<Var, AutodiffError> {
        let t = self.v(a);
        if !t.is_matrix() || t.rows() != 1 || target >= t.cols() {
            return Err(dim_err("softmax-cross-entropy", &[t]));
        }
        let loss = super::losses::softmax_cross_entropy(t.data(), target);
        Ok(self.push(Op::SoftmaxCrossEntropy(a, target), Tensor::scalar(loss)))
    }

    /// Plackett-Luce negative log-likelihood of `order` under the `1×M` scores.
    pub fn plackett_luce_nll(&mut self, a: Var, order: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.v(a);
        if !t.is_matrix() || t.rows() != 1 || order.len() != t.cols() {
            return Err(dim_err("plackett-luce-nll", &[t]));
        }
        let loss = super::losses::plackett_luce_nll(t.data(), order);
        Ok(self.push(Op::PlackettLuceNll(a, order.to_vec()), Tensor::scalar(loss)))
    }

    /// Reverse sweep from the scalar `loss`, adding into every node's gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.v(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.v(loss).shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::new(self.v(loss).shape().to_vec(), vec![1.0]).expect("scalar"));

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.propagate(id, &g, &mut adj);
            match &mut self.nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        fn acc(adj: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        }
        let node = &self.nodes[id];
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                acc(adj, *a, mm_nt(g, self.v(*b)));
                acc(adj, *b, mm_tn(self.v(*a), g));
            }
            Op::MatMulNt(a, b) => {
                // c = a bᵀ: da = g b, db = gᵀ a
                acc(adj, *a, mm(g, self.v(*b)));
                acc(adj, *b, mm_tn(g, self.v(*a)));
            }
            Op::Transpose(a) => acc(adj, *a, g.transpose()),
            Op::Add(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.v(*a), self.v(*b));
                let da = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(adj, *a, Tensor::new(ta.shape().to_vec(), da).expect("same shape"));
                acc(adj, *b, Tensor::new(tb.shape().to_vec(), db).expect("same shape"));
            }
            Op::Scale(a, s) => acc(adj, *a, g.scale(*s)),
            Op::ScalarMul(a, s) => {
                acc(adj, *a, g.scale(self.v(*s).item()));
                let ds: f64 = g.data().iter().zip(self.v(*a).data()).map(|(x, y)| x * y).sum();
                acc(adj, *s, Tensor::new(self.v(*s).shape().to_vec(), vec![ds]).expect("scalar"));
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut out = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        out[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(adj, *a, Tensor::matrix(y.rows(), c, out));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let d = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                acc(adj, *a, Tensor::new(y.shape().to_vec(), d).expect("same shape"));
            }
            Op::Relu(a) => {
                let x = self.v(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(adj, *a, Tensor::new(x.shape().to_vec(), d).expect("same shape"));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.v(*p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    acc(adj, *p, Tensor::matrix(rows, w, d));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                for p in parts {
                    let r = self.v(*p).rows();
                    let d = g.data()[offset * c..(offset + r) * c].to_vec();
                    acc(adj, *p, Tensor::matrix(r, c, d));
                    offset += r;
                }
            }
            Op::SliceCols(a, start, end) => {
                let x = self.v(*a);
                let (rows, cols) = (x.rows(), x.cols());
                let w = end - start;
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                acc(adj, *a, Tensor::matrix(rows, cols, d));
            }
            Op::MeanRows(a) => {
                let x = self.v(*a);
                let (rows, cols) = (x.rows(), x.cols());
                let inv = 1.0 / rows as f64;
                let mut d = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    d.extend(g.data().iter().map(|v| v * inv));
                }
                acc(adj, *a, Tensor::matrix(rows, cols, d));
            }
            Op::MaxCols(a, arg) => {
                let x = self.v(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                for (j, &r) in arg.iter().enumerate() {
                    d[r * cols + j] = g.data()[j];
                }
                acc(adj, *a, Tensor::matrix(x.rows(), cols, d));
            }
            Op::GatherRows(a, idx) => {
                let x = self.v(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                for (k, &r) in idx.iter().enumerate() {
                    for j in 0..cols {
                        d[r * cols + j] += g.data()[k * cols + j];
                    }
                }
                acc(adj, *a, Tensor::matrix(x.rows(), cols, d));
            }
            Op::BroadcastAddCol(a, col) => {
                acc(adj, *a, g.clone());
                let c = g.cols();
                let d = g.data().chunks(c).map(|ch| ch.iter().sum()).collect();
                acc(adj, *col, Tensor::matrix(g.rows(), 1, d));
            }
            Op::AddRow(a, row) => {
                acc(adj, *a, g.clone());
                let c = g.cols();
                let mut d = vec![0.0; c];
                for ch in g.data().chunks(c) {
                    for (o, v) in d.iter_mut().zip(ch) {
                        *o += v;
                    }
                }
                acc(adj, *row, Tensor::matrix(1, c, d));
            }
            Op::Sum(a) => {
                let x = self.v(*a);
                let gv = g.item();
                acc(adj, *a, Tensor::new(x.shape().to_vec(), vec![gv; x.len()]).expect("same shape"));
            }
            Op::SoftmaxCrossEntropy(a, target) => {
                let x = self.v(*a);
                let gv = g.item();
                let mut d = super::losses::softmax(x.data());
                d[*target] -= 1.0;
                d.iter_mut().for_each(|v| *v *= gv);
                acc(adj, *a, Tensor::matrix(1, x.cols(), d));
            }
            Op::PlackettLuceNll(a, order) => {
                let x = self.v(*a);
                let gv = g.item();
                let mut d = super::losses::plackett_luce_grad(x.data(), order);
                d.iter_mut().for_each(|v| *v *= gv);
                acc(adj, *a, Tensor::matrix(1, x.cols(), d));
            }
        }
    }

    /// Gradients per parameter, summed over every leaf that references it.
    /// Parameters the loss never reached get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Gradients {
        let mut grads = Gradients::zeros_like(store);
        for node in &self.nodes {
            if let (Op::Param(id), Some(g)) = (&node.op, &node.grad) {
                grads.get_mut(*id).add_assign(g);
            }
        }
        grads
    }

    /// Name of the op that produced `v`.
    pub fn kind(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.kind()
    }
}
