//! Reverse-mode differentiation over dense matrices, with constant sparse
//! left-multiplication by the normalized adjacency.
//!
//! Every value is a 2-D array; vectors are `1×d` rows and scalars `1×1`.
//! Binary elementwise ops broadcast dimensions of length 1 on either side.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::graph::{spmm, NormalizedAdjacency};
use crate::propagation::{clip, fmp_gradient_delta, softmax_rows};
use crate::rng::seeded;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Deliberate backward bugs, used to prove the gradient checks can fail.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Drops the `−⟨g, y⟩` term of the softmax backward.
    SoftmaxBackward,
    /// Drops the row-sum correction of the incident projection backward.
    IncidentProjectBackward,
}

enum Op<'a> {
    Leaf,
    Const,
    MatMul(usize, usize),
    Spmm(&'a NormalizedAdjacency, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    RowSoftmax(usize),
    Relu(usize),
    Sum(usize),
    RowSum(usize),
    L1Norm(usize),
    CrossEntropy { logits: usize, labels: Vec<usize>, mask: Vec<bool>, count: usize },
    IncidentProject(usize, Array1<f64>),
    ClampAbs(usize, f64),
}

struct Node<'a> {
    value: Array2<f64>,
    op: Op<'a>,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
pub struct Tape<'a> {
    id: u64,
    nodes: Vec<Node<'a>>,
    backward_done: bool,
    fault: Fault,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every tape value.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `v`; zeros if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Array2<f64> {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.index]
            .clone()
            .unwrap_or_else(|| Array2::zeros(v.shape()))
    }
}

fn reduce_to(g: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, _) => Some(b),
        (_, 1) => Some(a),
        _ => None,
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
            fault: Fault::None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = fault;
    }

    fn push(&mut self, value: Array2<f64>, op: Op<'a>, requires_grad: bool) -> Var {
        let (rows, cols) = value.dim();
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1, rows, cols }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward(v.index));
        }
        Ok(v.index)
    }

    fn needs(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.index].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        if a.cols != b.rows {
            return Err(Error::ShapeMismatch(format!("matmul {:?} · {:?}", a.shape(), b.shape())));
        }
        let v = self.nodes[ia].value.dot(&self.nodes[ib].value);
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(v, Op::MatMul(ia, ib), rg))
    }

    /// `Ã · x` with `Ã` held constant. Backward uses `Ãᵀ = Ã`.
    pub fn spmm_const(&mut self, a: &'a NormalizedAdjacency, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let v = spmm(a, self.nodes[ix].value.view()).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let rg = self.needs(&[ix]);
        Ok(self.push(v, Op::Spmm(a, ix), rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str) -> Result<(usize, usize, Array2<f64>, Array2<f64>)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let shape = broadcast_dim(a.rows, b.rows).zip(broadcast_dim(a.cols, b.cols)).ok_or_else(|| {
            Error::ShapeMismatch(format!("{name} {:?} with {:?}", a.shape(), b.shape()))
        })?;
        let va = self.nodes[ia].value.broadcast(shape).expect("checked").to_owned();
        let vb = self.nodes[ib].value.broadcast(shape).expect("checked").to_owned();
        Ok((ia, ib, va, vb))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary(a, b, "add")?;
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(va + vb, Op::Add(ia, ib), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary(a, b, "sub")?;
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(va - vb, Op::Sub(ia, ib), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, va, vb) = self.binary(a, b, "mul")?;
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(va * vb, Op::Mul(ia, ib), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value * c;
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::Scale(ia, c), rg))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = softmax_rows(self.nodes[ia].value.view());
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::RowSoftmax(ia), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.mapv(|x| x.max(0.0));
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::Relu(ia), rg))
    }

    /// Sum of all entries, as a `1×1` value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = Array2::from_elem((1, 1), self.nodes[ia].value.sum());
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::Sum(ia), rg))
    }

    /// Per-row sums as an `n×1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::RowSum(ia), rg))
    }

    /// Sum of absolute values; the subgradient at 0 is 0.
    pub fn l1_norm(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = Array2::from_elem((1, 1), self.nodes[ia].value.iter().map(|x| x.abs()).sum());
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::L1Norm(ia), rg))
    }

    /// Mean negative log-likelihood of `labels` under `SF(logits)` over the
    /// rows where `mask` is set.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[bool]) -> Result<Var> {
        let il = self.check(logits)?;
        if labels.len() != logits.rows || mask.len() != logits.rows {
            return Err(Error::ShapeMismatch(format!(
                "cross_entropy: {} logit rows, {} labels, {} mask entries",
                logits.rows,
                labels.len(),
                mask.len()
            )));
        }
        if let Some(&bad) = labels.iter().zip(mask).find(|(&y, &m)| m && y >= logits.cols).map(|(y, _)| y) {
            return Err(Error::ShapeMismatch(format!("label {bad} out of range for {} classes", logits.cols)));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::InvalidParameter("cross_entropy mask selects no rows".into()));
        }
        let x = &self.nodes[il].value;
        let mut total = 0.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            if !mask[i] {
                continue;
            }
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let v = Array2::from_elem((1, 1), total / count as f64);
        let rg = self.needs(&[il]);
        let op = Op::CrossEntropy { logits: il, labels: labels.to_vec(), mask: mask.to_vec(), count };
        Ok(self.push(v, op, rg))
    }

    /// `Δᵀ SF(f)` as a `1×d` row, for an incident vector `Δ`.
    pub fn incident_project(&mut self, f: Var, delta: &Array1<f64>) -> Result<Var> {
        let i = self.check(f)?;
        if delta.len() != f.rows {
            return Err(Error::ShapeMismatch(format!("incident vector of length {} for {} rows", delta.len(), f.rows)));
        }
        let v = delta.dot(&softmax_rows(self.nodes[i].value.view())).insert_axis(Axis(0));
        let rg = self.needs(&[i]);
        Ok(self.push(v, Op::IncidentProject(i, delta.clone()), rg))
    }

    /// Clip to `[−r, r]`. Gradient passes where `|a| < r` and is 0 elsewhere.
    pub fn clamp_abs(&mut self, a: Var, r: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.mapv(|x| clip(x, r));
        let rg = self.needs(&[ia]);
        Ok(self.push(v, Op::ClampAbs(ia, r), rg))
    }

    /// Copy of `a` that blocks gradient flow.
    pub fn detach(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.clone();
        Ok(self.push(v, Op::Const, false))
    }

    /// Reverse sweep from a `1×1` loss. A tape supports one sweep.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let il = self.check(loss)?;
        if self.backward_done {
            return Err(Error::BackwardAlreadyRun);
        }
        if loss.shape() != (1, 1) {
            return Err(Error::NonScalarLoss { rows: loss.rows, cols: loss.cols });
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[il] = Some(Array2::ones((1, 1)));
        for k in (0..=il).rev() {
            let Some(g) = grads[k].take() else { continue };
            if self.nodes[k].requires_grad {
                self.propagate(k, &g, &mut grads);
            }
            grads[k] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, k: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |i: usize| &self.nodes[i].value;
        let mut send = |i: usize, gi: Array2<f64>| {
            if self.nodes[i].requires_grad {
                accumulate(&mut grads[i], gi);
            }
        };
        match &self.nodes[k].op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                send(*a, g.dot(&val(*b).t()));
                send(*b, val(*a).t().dot(g));
            }
            Op::Spmm(adj, x) => {
                send(*x, spmm(adj, g.view()).expect("shape fixed at forward"));
            }
            Op::Add(a, b) => {
                send(*a, reduce_to(g.clone(), val(*a).dim()));
                send(*b, reduce_to(g.clone(), val(*b).dim()));
            }
            Op::Sub(a, b) => {
                send(*a, reduce_to(g.clone(), val(*a).dim()));
                send(*b, reduce_to(-g, val(*b).dim()));
            }
            Op::Mul(a, b) => {
                let shape = g.dim();
                let va = val(*a).broadcast(shape).expect("shape fixed at forward");
                let vb = val(*b).broadcast(shape).expect("shape fixed at forward");
                send(*a, reduce_to(g * &vb, val(*a).dim()));
                send(*b, reduce_to(g * &va, val(*b).dim()));
            }
            Op::Scale(a, c) => send(*a, g * *c),
            Op::RowSoftmax(a) => {
                let y = &self.nodes[k].value;
                let mut out = g * y;
                if self.fault != Fault::SoftmaxBackward {
                    let dots = out.sum_axis(Axis(1));
                    Zip::from(out.rows_mut()).and(y.rows()).and(&dots).for_each(|mut o, yr, &d| {
                        o.scaled_add(-d, &yr);
                    });
                }
                send(*a, out);
            }
            Op::Relu(a) => {
                let mut out = g.clone();
                Zip::from(&mut out).and(val(*a)).for_each(|o, &x| {
                    if x <= 0.0 {
                        *o = 0.0;
                    }
                });
                send(*a, out);
            }
            Op::Sum(a) => send(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::RowSum(a) => {
                let shape = val(*a).dim();
                send(*a, g.broadcast(shape).expect("n×1 column").to_owned());
            }
            Op::L1Norm(a) => {
                let s = g[[0, 0]];
                send(*a, val(*a).mapv(|x| if x > 0.0 { s } else if x < 0.0 { -s } else { 0.0 }));
            }
            Op::CrossEntropy { logits, labels, mask, count } => {
                let mut out = softmax_rows(val(*logits).view());
                let w = g[[0, 0]] / *count as f64;
                for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                    if mask[i] {
                        row[labels[i]] -= 1.0;
                        row *= w;
                    } else {
                        row.fill(0.0);
                    }
                }
                send(*logits, out);
            }
            Op::IncidentProject(f, delta) => {
                let u = g.row(0);
                let out = if self.fault == Fault::IncidentProjectBackward {
                    let mut p = softmax_rows(val(*f).view());
                    Zip::from(p.rows_mut()).and(delta).for_each(|mut row, &d| {
                        row.zip_mut_with(&u, |p, &uj| *p *= d * uj);
                    });
                    p
                } else {
                    fmp_gradient_delta(val(*f).view(), u, delta.view()).expect("shape fixed at forward")
                };
                send(*f, out);
            }
            Op::ClampAbs(a, r) => {
                let mut out = g.clone();
                Zip::from(&mut out).and(val(*a)).for_each(|o, &x| {
                    if !(x.abs() < *r) {
                        *o = 0.0;
                    }
                });
                send(*a, out);
            }
        }
    }
}

/// Largest relative discrepancy between an analytic gradient and central
/// differences of `f` at `point`.
///
/// `f` returns `(value, gradient)`. Each coordinate's error is
/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)` where `floor` is
/// `1e-3` times the largest analytic magnitude. Inputs with more than 400
/// entries are checked on a seeded random subset of 200 coordinates.
pub fn finite_diff_check<F>(mut f: F, point: &Array2<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {h} must be positive")));
    }
    let (_, analytic) = f(point)?;
    if analytic.dim() != point.dim() {
        return Err(Error::ShapeMismatch("gradient shape differs from the point".into()));
    }
    let total = point.len();
    let coords: Vec<usize> = if total > 400 {
        let mut idx = sample(&mut seeded(total as u64), total, 200).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };
    let max_abs = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * max_abs).max(1e-10);
    let cols = point.ncols();
    let mut worst = 0.0f64;
    for c in coords {
        let (i, j) = (c / cols, c % cols);
        let mut p = point.clone();
        p[[i, j]] = point[[i, j]] + h;
        let (up, _) = f(&p)?;
        p[[i, j]] = point[[i, j]] - h;
        let (down, _) = f(&p)?;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[[i, j]];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}
