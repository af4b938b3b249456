//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every operation evaluates eagerly and appends a node holding its value and
//! the handles of its operands. [`Tape::backward`] walks the nodes in exact
//! reverse order of recording. Nodes that do not depend on any parameter are
//! skipped, so inputs and targets never accumulate adjoints.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, Matrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    Reshape(Var),
    ConcatCols(Var, Var),
    RowVecMat { probs: Var, confusion: Var },
    SoftCrossEntropy { probs: Var, targets: Matrix, floor: f64 },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
    params: Vec<Var>,
}

impl Gradients {
    /// Adjoint of `v`; all zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.adjoints[v.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    /// Adjoints of all registered parameters in registration order.
    pub fn params(&self) -> Vec<Matrix> {
        self.params.iter().map(|&p| self.wrt(p)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a parameter; its adjoint is reported by [`Gradients::params`].
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Copies `v` into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    /// `a + bias` with `bias` a row vector broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        let g = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddRow(a, bias), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x + y)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let g = self.needs(a);
        self.push(value, Op::Scale(a, factor), g)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let g = self.needs(a);
        self.push(value, Op::LeakyRelu(a, slope), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        let g = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshape(rows, cols)?;
        let g = self.needs(a);
        Ok(self.push(value, Op::Reshape(a), g))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatCols(a, b), g))
    }

    /// Row-wise `probs[i]ᵀ × confusion[i]`, where row `i` of `confusion`
    /// holds a `C × C` matrix flattened row-major.
    pub fn row_vec_mat(&mut self, probs: Var, confusion: Var) -> Result<Var> {
        let p = self.value(probs);
        let conf = self.value(confusion);
        let c = p.cols();
        if conf.rows() != p.rows() || conf.cols() != c * c {
            return Err(Error::shape(
                "row_vec_mat",
                format!(
                    "probs {}x{} with confusion {}x{}",
                    p.rows(),
                    c,
                    conf.rows(),
                    conf.cols()
                ),
            ));
        }
        let mut out = Matrix::zeros(p.rows(), c);
        for b in 0..p.rows() {
            let pr = p.row(b);
            let cm = conf.row(b);
            let or = out.row_mut(b);
            for (i, &pi) in pr.iter().enumerate() {
                for (o, &v) in or.iter_mut().zip(&cm[i * c..(i + 1) * c]) {
                    *o += pi * v;
                }
            }
        }
        let g = self.needs(probs) || self.needs(confusion);
        Ok(self.push(out, Op::RowVecMat { probs, confusion }, g))
    }

    /// Mean over rows of `-Σ_c targets[c] · ln(max(probs[c], floor))`.
    pub fn soft_cross_entropy(&mut self, probs: Var, targets: &Matrix, floor: f64) -> Result<Var> {
        let p = self.value(probs);
        if p.shape() != targets.shape() {
            return Err(Error::shape(
                "soft_cross_entropy",
                format!(
                    "probs {}x{} vs targets {}x{}",
                    p.rows(),
                    p.cols(),
                    targets.rows(),
                    targets.cols()
                ),
            ));
        }
        let loss = cross_entropy_value(p, targets, floor);
        let g = self.needs(probs);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftCrossEntropy {
                probs,
                targets: targets.clone(),
                floor,
            },
            g,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        let g = self.needs(a);
        self.push(Matrix::filled(1, 1, total), Op::Sum(a), g)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(upstream) = adj[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(upstream);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let d = upstream.matmul_t(self.value(*b))?;
                        accumulate(&mut adj, *a, d)?;
                    }
                    if self.needs(*b) {
                        let d = self.value(*a).t_matmul(&upstream)?;
                        accumulate(&mut adj, *b, d)?;
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        accumulate(&mut adj, *bias, upstream.sum_rows())?;
                    }
                    if self.needs(*a) {
                        accumulate(&mut adj, *a, upstream.clone())?;
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut adj, *a, upstream.clone())?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj, *b, upstream.clone())?;
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let d = upstream.zip_with(self.value(*b), |u, y| u * y)?;
                        accumulate(&mut adj, *a, d)?;
                    }
                    if self.needs(*b) {
                        let d = upstream.zip_with(self.value(*a), |u, x| u * x)?;
                        accumulate(&mut adj, *b, d)?;
                    }
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut adj, *a, upstream.map(|u| u * f))?;
                }
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let d = upstream.zip_with(self.value(*a), |u, x| if x > 0.0 { u } else { s * u })?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let ur = upstream.row(r);
                        let inner = dot(yr, ur);
                        for ((o, &yv), &uv) in d.row_mut(r).iter_mut().zip(yr).zip(ur) {
                            *o = yv * (uv - inner);
                        }
                    }
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, upstream.reshape(r, c)?)?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let rows = upstream.rows();
                    let mut da = Matrix::zeros(rows, ca);
                    let mut db = Matrix::zeros(rows, cb);
                    for r in 0..rows {
                        let ur = upstream.row(r);
                        da.row_mut(r).copy_from_slice(&ur[..ca]);
                        db.row_mut(r).copy_from_slice(&ur[ca..]);
                    }
                    if self.needs(*a) {
                        accumulate(&mut adj, *a, da)?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj, *b, db)?;
                    }
                }
                Op::RowVecMat { probs, confusion } => {
                    let p = self.value(*probs);
                    let conf = self.value(*confusion);
                    let c = p.cols();
                    if self.needs(*probs) {
                        let mut dp = Matrix::zeros(p.rows(), c);
                        for b in 0..p.rows() {
                            let ur = upstream.row(b);
                            let cm = conf.row(b);
                            for (i, o) in dp.row_mut(b).iter_mut().enumerate() {
                                *o = dot(&cm[i * c..(i + 1) * c], ur);
                            }
                        }
                        accumulate(&mut adj, *probs, dp)?;
                    }
                    if self.needs(*confusion) {
                        let mut dc = Matrix::zeros(conf.rows(), conf.cols());
                        for b in 0..p.rows() {
                            let ur = upstream.row(b);
                            let pr = p.row(b);
                            let dr = dc.row_mut(b);
                            for (i, &pi) in pr.iter().enumerate() {
                                for (o, &u) in dr[i * c..(i + 1) * c].iter_mut().zip(ur) {
                                    *o = pi * u;
                                }
                            }
                        }
                        accumulate(&mut adj, *confusion, dc)?;
                    }
                }
                Op::SoftCrossEntropy { probs, targets, floor } => {
                    let scale = upstream.get(0, 0) / targets.rows().max(1) as f64;
                    let floor = *floor;
                    let d =
                        self.value(*probs)
                            .zip_with(targets, |q, t| if q > floor { -scale * t / q } else { 0.0 })?;
                    accumulate(&mut adj, *probs, d)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, upstream.get(0, 0)))?;
                }
            }
        }

        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            params: self.params.clone(),
        })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, d: Matrix) -> Result<()> {
    match &mut adj[v.0] {
        Some(existing) => existing.axpy(1.0, &d),
        slot @ None => {
            *slot = Some(d);
            Ok(())
        }
    }
}

/// Batch mean of the floored soft cross-entropy.
pub fn cross_entropy_value(probs: &Matrix, targets: &Matrix, floor: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..probs.rows() {
        for (&q, &t) in probs.row(r).iter().zip(targets.row(r)) {
            if t != 0.0 {
                total -= t * q.max(floor).ln();
            }
        }
    }
    total / probs.rows().max(1) as f64
}
