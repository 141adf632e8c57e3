//! Reverse-mode differentiation over an append-only record of primitive
//! applications.
//!
//! Every primitive application pushes one node holding its output value. Inputs
//! always refer to earlier nodes, so the record is topologically ordered by
//! construction and the backward sweep is a single reverse pass.

use std::sync::Arc;

use super::{matmul, matmul_nt, matmul_tn, CsrMatrix, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to inputs of [`Primitive::Log`].
pub const LOG_FLOOR: f64 = 1e-30;

/// Smallest row norm used when normalizing rows for cosine similarity.
const NORM_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive set. Binary elementwise primitives broadcast any operand
/// dimension of size 1.
#[derive(Clone, Debug)]
pub enum Primitive {
    MatMul,
    Transpose,
    Add,
    Subtract,
    ElementwiseMultiply,
    ScalarMultiply(f64),
    Tanh,
    Relu,
    RowSoftmax,
    /// Natural log of the input clamped below at [`LOG_FLOOR`].
    Log,
    Exp,
    ConcatColumns,
    SliceColumns {
        start: usize,
        end: usize,
    },
    SliceRows {
        start: usize,
        end: usize,
    },
    RowSelectByMask(Vec<bool>),
    /// Row `k` of the output is row `indices[k]` of the input; repeats allowed.
    GatherRows(Vec<usize>),
    /// Inverse placement of `GatherRows` without repeats: input row `k` lands on
    /// output row `indices[k]`, other rows are zero.
    ScatterRows {
        indices: Vec<usize>,
        rows: usize,
    },
    /// Column-wise mean over rows: `r x c -> 1 x c`.
    MeanRows,
    /// Sum across columns: `r x c -> r x 1`.
    SumColumns,
    Sum,
    SquaredL2,
    /// All-pairs cosine similarity between the rows of two matrices: `n x d, m x d -> n x m`.
    CosineSimilarityRows,
    /// Constant sparse left operand times the input.
    SparseMatMul(Arc<CsrMatrix>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Add => "add",
            Primitive::Subtract => "subtract",
            Primitive::ElementwiseMultiply => "elementwise_multiply",
            Primitive::ScalarMultiply(_) => "scalar_multiply",
            Primitive::Tanh => "tanh",
            Primitive::Relu => "relu",
            Primitive::RowSoftmax => "row_softmax",
            Primitive::Log => "log",
            Primitive::Exp => "exp",
            Primitive::ConcatColumns => "concat_columns",
            Primitive::SliceColumns { .. } => "slice_columns",
            Primitive::SliceRows { .. } => "slice_rows",
            Primitive::RowSelectByMask(_) => "row_select_by_mask",
            Primitive::GatherRows(_) => "gather_rows",
            Primitive::ScatterRows { .. } => "scatter_rows",
            Primitive::MeanRows => "mean_rows",
            Primitive::SumColumns => "sum_columns",
            Primitive::Sum => "sum",
            Primitive::SquaredL2 => "squared_l2",
            Primitive::CosineSimilarityRows => "cosine_similarity_rows",
            Primitive::SparseMatMul(_) => "sparse_matmul",
        }
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Option<(Primitive, Vec<Var>)>,
}

/// The computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    consumed: bool,
    pair_evaluations: u64,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded values (leaves and primitive applications).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of row-pair similarity evaluations performed by
    /// [`Primitive::CosineSimilarityRows`] on this tape.
    pub fn pair_evaluations(&self) -> u64 {
        self.pair_evaluations
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn param_bindings(&self) -> &[(ParamId, Var)] {
        &self.params
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.push(value, requires_grad, None))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Records a trainable parameter as a gradient-tracking leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), true, None);
        self.params.push((id, v));
        v
    }

    /// Records a parameter's current value without tracking its gradient.
    pub fn frozen(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), false, None)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Option<(Primitive, Vec<Var>)>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Applies `prim` to `inputs`, recording the application.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            forward(&prim, &vals)?
        };
        if let Primitive::CosineSimilarityRows = prim {
            self.pair_evaluations += (value.rows() * value.cols()) as u64;
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: prim.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, requires_grad, Some((prim, inputs.to_vec()))))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[a])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Subtract, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::ElementwiseMultiply, &[a, b])
    }
    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.apply(Primitive::ScalarMultiply(k), &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }
    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::RowSoftmax, &[a])
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Exp, &[a])
    }
    pub fn concat_columns(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::ConcatColumns, parts)
    }
    pub fn slice_columns(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(Primitive::SliceColumns { start, end }, &[a])
    }
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(Primitive::SliceRows { start, end }, &[a])
    }
    pub fn row_select_by_mask(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        self.apply(Primitive::RowSelectByMask(mask.to_vec()), &[a])
    }
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        self.apply(Primitive::GatherRows(indices.to_vec()), &[a])
    }
    pub fn scatter_rows(&mut self, a: Var, indices: &[usize], rows: usize) -> Result<Var> {
        self.apply(
            Primitive::ScatterRows {
                indices: indices.to_vec(),
                rows,
            },
            &[a],
        )
    }
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::MeanRows, &[a])
    }
    pub fn sum_columns(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::SumColumns, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn squared_l2(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::SquaredL2, &[a])
    }
    pub fn cosine_similarity_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::CosineSimilarityRows, &[a, b])
    }
    pub fn sparse_matmul(&mut self, adj: &Arc<CsrMatrix>, x: Var) -> Result<Var> {
        self.apply(Primitive::SparseMatMul(Arc::clone(adj)), &[x])
    }

    /// Sum of several scalars.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::Contract("add_all needs at least one term".into()))?;
        let mut acc = *first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Propagates `∂loss/∂·` back through the record.
    ///
    /// The record can be consumed only once. Every leaf that requires gradients
    /// receives one; leaves unreachable from `loss` receive zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::RecordConsumed);
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some((prim, inputs)) = &node.op else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let in_vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let wanted: Vec<bool> = inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let in_grads = backward_step(prim, &in_vals, &node.value, &g, &wanted);
            for ((v, gi), want) in inputs.iter().zip(in_grads).zip(wanted) {
                if !want {
                    continue;
                }
                let Some(gi) = gi else { continue };
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.is_none() && node.requires_grad && grads[i].is_none() {
                let (r, c) = node.value.shape();
                grads[i] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Gradients { grads })
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    fn dim(x: usize, y: usize) -> Option<usize> {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    }
    match (dim(a.rows(), b.rows()), dim(a.cols(), b.cols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape()))),
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == shape && b.shape() == shape {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(shape.0, shape.1, data).expect("shape");
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for i in 0..shape.0 {
        let ai = if a.rows() == 1 { 0 } else { i };
        let bi = if b.rows() == 1 { 0 } else { i };
        for j in 0..shape.1 {
            let aj = if a.cols() == 1 { 0 } else { j };
            let bj = if b.cols() == 1 { 0 } else { j };
            out.set(i, j, f(a.get(ai, aj), b.get(bi, bj)));
        }
    }
    out
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: &Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        let oi = if shape.0 == 1 { 0 } else { i };
        for j in 0..g.cols() {
            let oj = if shape.1 == 1 { 0 } else { j };
            out.set(oi, oj, out.get(oi, oj) + g.get(i, j));
        }
    }
    out
}

fn normalize_rows(a: &Tensor) -> (Tensor, Vec<f64>) {
    let mut out = a.clone();
    let mut norms = Vec::with_capacity(a.rows());
    for r in 0..a.rows() {
        let n = a.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        let n = n.max(NORM_FLOOR);
        norms.push(n);
        out.row_mut(r).iter_mut().for_each(|x| *x /= n);
    }
    (out, norms)
}

/// Pulls a gradient on normalized rows back to the raw rows.
fn normalize_rows_backward(gy: &Tensor, y: &Tensor, raw: &Tensor, norms: &[f64]) -> Tensor {
    let mut out = gy.clone();
    for (r, &n) in norms.iter().enumerate() {
        let raw_norm = raw.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        let orow = out.row_mut(r);
        if raw_norm > NORM_FLOOR {
            let proj: f64 = gy.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
            for (o, yv) in orow.iter_mut().zip(y.row(r)) {
                *o = (*o - proj * yv) / n;
            }
        } else {
            orow.iter_mut().for_each(|o| *o /= n);
        }
    }
    out
}

fn expect_arity(prim: &Primitive, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::dim(
            prim.name(),
            format!("expected {n} inputs, got {}", inputs.len()),
        ));
    }
    Ok(())
}

fn forward(prim: &Primitive, x: &[&Tensor]) -> Result<Tensor> {
    let name = prim.name();
    match prim {
        Primitive::ConcatColumns => {
            if x.is_empty() {
                return Err(Error::dim(name, "no inputs"));
            }
            let rows = x[0].rows();
            if x.iter().any(|t| t.rows() != rows) {
                let shapes: Vec<_> = x.iter().map(|t| t.shape()).collect();
                return Err(Error::dim(name, format!("row counts differ: {shapes:?}")));
            }
            let cols: usize = x.iter().map(|t| t.cols()).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for t in x {
                    out.extend_from_slice(t.row(r));
                }
            }
            return Tensor::from_vec(rows, cols, out);
        }
        Primitive::MatMul
        | Primitive::Add
        | Primitive::Subtract
        | Primitive::ElementwiseMultiply
        | Primitive::CosineSimilarityRows => expect_arity(prim, x, 2)?,
        _ => expect_arity(prim, x, 1)?,
    }
    let a = x[0];
    Ok(match prim {
        Primitive::MatMul => {
            let b = x[1];
            if a.cols() != b.rows() {
                return Err(Error::dim(name, format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            matmul(a, b)
        }
        Primitive::Transpose => a.transpose(),
        Primitive::Add => zip_broadcast(a, x[1], broadcast_shape(name, a, x[1])?, |p, q| p + q),
        Primitive::Subtract => zip_broadcast(a, x[1], broadcast_shape(name, a, x[1])?, |p, q| p - q),
        Primitive::ElementwiseMultiply => zip_broadcast(a, x[1], broadcast_shape(name, a, x[1])?, |p, q| p * q),
        Primitive::ScalarMultiply(k) => a.scale(*k),
        Primitive::Tanh => a.map(f64::tanh),
        Primitive::Relu => a.map(|v| v.max(0.0)),
        Primitive::RowSoftmax => a.row_softmax(),
        Primitive::Log => a.map(|v| v.max(LOG_FLOOR).ln()),
        Primitive::Exp => a.map(f64::exp),
        Primitive::ConcatColumns => unreachable!(),
        Primitive::SliceColumns { start, end } => {
            if start > end || *end > a.cols() {
                return Err(Error::dim(name, format!("{start}..{end} of {:?}", a.shape())));
            }
            let w = end - start;
            let mut out = Vec::with_capacity(a.rows() * w);
            for r in 0..a.rows() {
                out.extend_from_slice(&a.row(r)[*start..*end]);
            }
            Tensor::from_vec(a.rows(), w, out)?
        }
        Primitive::SliceRows { start, end } => {
            if start > end || *end > a.rows() {
                return Err(Error::dim(name, format!("{start}..{end} of {:?}", a.shape())));
            }
            a.slice_rows(*start, *end)
        }
        Primitive::RowSelectByMask(mask) => {
            if mask.len() != a.rows() {
                return Err(Error::dim(
                    name,
                    format!("mask length {} for {:?}", mask.len(), a.shape()),
                ));
            }
            let mut out = Vec::new();
            let mut n = 0;
            for (r, &keep) in mask.iter().enumerate() {
                if keep {
                    out.extend_from_slice(a.row(r));
                    n += 1;
                }
            }
            Tensor::from_vec(n, a.cols(), out)?
        }
        Primitive::GatherRows(idx) => {
            let mut out = Vec::with_capacity(idx.len() * a.cols());
            for &i in idx {
                if i >= a.rows() {
                    return Err(Error::dim(name, format!("row {i} of {:?}", a.shape())));
                }
                out.extend_from_slice(a.row(i));
            }
            Tensor::from_vec(idx.len(), a.cols(), out)?
        }
        Primitive::ScatterRows { indices, rows } => {
            if indices.len() != a.rows() {
                return Err(Error::dim(
                    name,
                    format!("{} indices for {:?}", indices.len(), a.shape()),
                ));
            }
            let mut out = Tensor::zeros(*rows, a.cols());
            for (k, &i) in indices.iter().enumerate() {
                if i >= *rows {
                    return Err(Error::dim(name, format!("target row {i} of {rows}")));
                }
                out.row_mut(i).copy_from_slice(a.row(k));
            }
            out
        }
        Primitive::MeanRows => {
            if a.rows() == 0 {
                return Err(Error::dim(name, "mean over zero rows"));
            }
            let mut out = Tensor::zeros(1, a.cols());
            for r in 0..a.rows() {
                for (o, v) in out.data_mut().iter_mut().zip(a.row(r)) {
                    *o += v;
                }
            }
            out.scale(1.0 / a.rows() as f64)
        }
        Primitive::SumColumns => {
            let data = (0..a.rows()).map(|r| a.row(r).iter().sum()).collect();
            Tensor::from_vec(a.rows(), 1, data)?
        }
        Primitive::Sum => Tensor::scalar(a.sum()),
        Primitive::SquaredL2 => Tensor::scalar(a.data().iter().map(|v| v * v).sum()),
        Primitive::CosineSimilarityRows => {
            let b = x[1];
            if a.cols() != b.cols() {
                return Err(Error::dim(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            let (an, _) = normalize_rows(a);
            let (bn, _) = normalize_rows(b);
            matmul_nt(&an, &bn)
        }
        Primitive::SparseMatMul(adj) => {
            if adj.cols() != a.rows() {
                return Err(Error::dim(
                    name,
                    format!("{}x{} x {:?}", adj.rows(), adj.cols(), a.shape()),
                ));
            }
            adj.matmul(a)
        }
    })
}

fn backward_step(prim: &Primitive, x: &[&Tensor], y: &Tensor, g: &Tensor, wanted: &[bool]) -> Vec<Option<Tensor>> {
    let a = x[0];
    match prim {
        Primitive::MatMul => {
            let b = x[1];
            vec![wanted[0].then(|| matmul_nt(g, b)), wanted[1].then(|| matmul_tn(a, g))]
        }
        Primitive::Transpose => vec![Some(g.transpose())],
        Primitive::Add => vec![
            wanted[0].then(|| reduce_to(g, a.shape())),
            wanted[1].then(|| reduce_to(g, x[1].shape())),
        ],
        Primitive::Subtract => vec![
            wanted[0].then(|| reduce_to(g, a.shape())),
            wanted[1].then(|| reduce_to(&g.scale(-1.0), x[1].shape())),
        ],
        Primitive::ElementwiseMultiply => {
            let b = x[1];
            let shape = g.shape();
            vec![
                wanted[0].then(|| reduce_to(&zip_broadcast(g, b, shape, |p, q| p * q), a.shape())),
                wanted[1].then(|| reduce_to(&zip_broadcast(g, a, shape, |p, q| p * q), b.shape())),
            ]
        }
        Primitive::ScalarMultiply(k) => vec![Some(g.scale(*k))],
        Primitive::Tanh => vec![Some(zip_broadcast(g, y, g.shape(), |gv, yv| gv * (1.0 - yv * yv)))],
        Primitive::Relu => vec![Some(zip_broadcast(
            g,
            a,
            g.shape(),
            |gv, av| {
                if av > 0.0 {
                    gv
                } else {
                    0.0
                }
            },
        ))],
        Primitive::RowSoftmax => {
            let mut out = Tensor::zeros(y.rows(), y.cols());
            for r in 0..y.rows() {
                let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                for ((o, gv), yv) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(out)]
        }
        Primitive::Log => vec![Some(zip_broadcast(g, a, g.shape(), |gv, av| {
            if av > LOG_FLOOR {
                gv / av
            } else {
                0.0
            }
        }))],
        Primitive::Exp => vec![Some(zip_broadcast(g, y, g.shape(), |gv, yv| gv * yv))],
        Primitive::ConcatColumns => {
            let mut offset = 0;
            x.iter()
                .zip(wanted)
                .map(|(t, &w)| {
                    let (start, end) = (offset, offset + t.cols());
                    offset = end;
                    w.then(|| {
                        let mut out = Vec::with_capacity(t.rows() * t.cols());
                        for r in 0..g.rows() {
                            out.extend_from_slice(&g.row(r)[start..end]);
                        }
                        Tensor::from_vec(t.rows(), t.cols(), out).expect("shape")
                    })
                })
                .collect()
        }
        Primitive::SliceColumns { start, .. } => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for r in 0..a.rows() {
                out.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
            }
            vec![Some(out)]
        }
        Primitive::SliceRows { start, .. } => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for r in 0..g.rows() {
                out.row_mut(start + r).copy_from_slice(g.row(r));
            }
            vec![Some(out)]
        }
        Primitive::RowSelectByMask(mask) => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            let mut k = 0;
            for (r, &keep) in mask.iter().enumerate() {
                if keep {
                    out.row_mut(r).copy_from_slice(g.row(k));
                    k += 1;
                }
            }
            vec![Some(out)]
        }
        Primitive::GatherRows(idx) => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (o, gv) in out.row_mut(i).iter_mut().zip(g.row(k)) {
                    *o += gv;
                }
            }
            vec![Some(out)]
        }
        Primitive::ScatterRows { indices, .. } => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for (k, &i) in indices.iter().enumerate() {
                out.row_mut(k).copy_from_slice(g.row(i));
            }
            vec![Some(out)]
        }
        Primitive::MeanRows => {
            let k = 1.0 / a.rows() as f64;
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for r in 0..a.rows() {
                for (o, gv) in out.row_mut(r).iter_mut().zip(g.data()) {
                    *o = gv * k;
                }
            }
            vec![Some(out)]
        }
        Primitive::SumColumns => {
            let mut out = Tensor::zeros(a.rows(), a.cols());
            for r in 0..a.rows() {
                let gv = g.get(r, 0);
                out.row_mut(r).iter_mut().for_each(|o| *o = gv);
            }
            vec![Some(out)]
        }
        Primitive::Sum => vec![Some(Tensor::full(a.rows(), a.cols(), g.item()))],
        Primitive::SquaredL2 => vec![Some(a.scale(2.0 * g.item()))],
        Primitive::CosineSimilarityRows => {
            let b = x[1];
            let (an, a_norms) = normalize_rows(a);
            let (bn, b_norms) = normalize_rows(b);
            vec![
                wanted[0].then(|| normalize_rows_backward(&matmul(g, &bn), &an, a, &a_norms)),
                wanted[1].then(|| normalize_rows_backward(&matmul_tn(g, &an), &bn, b, &b_norms)),
            ]
        }
        Primitive::SparseMatMul(adj) => vec![Some(adj.transpose_matmul(g))],
    }
}
