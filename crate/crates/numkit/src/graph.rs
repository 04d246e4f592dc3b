//! Tape-style reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every differentiable operation as a node holding the
//! op's output value plus references to its parents. Calling
//! [`Graph::backward`] on a scalar loss walks the tape in reverse creation
//! order, accumulating gradients into every leaf that was installed with
//! `requires_grad`. A graph is single-use: after `backward` it refuses both
//! further recording and a second backward pass.
//!
//! The op set is intentionally small — exactly what convolutional
//! encoder/decoder stacks with dot-product attention need. Several forwards
//! may share one graph (losses are combined with `add`/`scale`), which is
//! how batches accumulate gradients in a fixed, deterministic order.

use crate::error::{NumError, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node in one specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRef(u32);

impl NodeRef {
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// Padding mode for 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Zero-pad `(W−1)/2` on each side; output position `t` sees a centered
    /// window. Requires odd kernel width.
    Same,
    /// Zero-pad `W−1` on the left only; output position `t` depends only on
    /// inputs at positions ≤ `t`.
    Causal,
}

enum Op<S: Scalar> {
    Leaf,
    Add { a: NodeRef, b: NodeRef },
    AddRow { x: NodeRef, row: NodeRef },
    Scale { a: NodeRef, factor: S },
    Linear { x: NodeRef, w: NodeRef, b: Option<NodeRef> },
    MatMul { a: NodeRef, b: NodeRef },
    MatMulNT { a: NodeRef, b: NodeRef },
    Conv1d { x: NodeRef, w: NodeRef, mode: PadMode },
    Glu { x: NodeRef },
    GatherRows { table: NodeRef, idx: Vec<u32> },
    ConcatCols { a: NodeRef, b: NodeRef },
    // The mask is not stored: masked outputs are exactly zero, which makes
    // the softmax Jacobian handle them without special cases.
    SoftmaxRows { x: NodeRef },
    CrossEntropySum { logits: NodeRef, targets: Vec<u32> },
    SumAll { x: NodeRef },
    Dropout { x: NodeRef, mask: Vec<S> },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
    /// True when some `requires_grad` leaf feeds this node; nodes without it
    /// are skipped during gradient accumulation.
    needs_grad: bool,
}

/// The recording tape. See the module docs for the lifecycle.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
    consumed: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    /// Install a tensor as a leaf. Its `requires_grad` flag decides whether
    /// `backward` produces a gradient for it.
    pub fn leaf(&mut self, t: Tensor<S>) -> Result<NodeRef> {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Install a constant leaf (no gradient), regardless of the tensor flag.
    pub fn constant(&mut self, t: Tensor<S>) -> Result<NodeRef> {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, n: NodeRef) -> &Tensor<S> {
        &self.nodes[n.index()].value
    }

    pub fn shape(&self, n: NodeRef) -> &[usize] {
        self.nodes[n.index()].value.shape()
    }

    fn needs(&self, n: NodeRef) -> bool {
        self.nodes[n.index()].needs_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Result<NodeRef> {
        if self.consumed {
            return Err(NumError::GraphConsumed);
        }
        if !value.all_finite() {
            return Err(NumError::NonFinite { op: op_name(&op) });
        }
        let id = NodeRef(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(id)
    }

    // ----- element-wise and shape ops ------------------------------------

    /// Element-wise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(NumError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let mut out = ta.clone();
        kernels::add_assign(tb.data(), out.data_mut());
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Add { a, b }, needs)
    }

    /// Broadcast-add a row vector `[n]` to every row of `x: [m×n]`.
    pub fn add_row(&mut self, x: NodeRef, row: NodeRef) -> Result<NodeRef> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tx.ndim() != 2 || tr.ndim() != 1 || tx.cols() != tr.len() {
            return Err(NumError::ShapeMismatch {
                op: "add_row",
                detail: format!("{:?} vs {:?}", tx.shape(), tr.shape()),
            });
        }
        let mut out = tx.clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            kernels::add_assign(tr.data(), &mut out.data_mut()[r * cols..(r + 1) * cols]);
        }
        let needs = self.needs(x) || self.needs(row);
        self.push(out, Op::AddRow { x, row }, needs)
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: NodeRef, factor: S) -> Result<NodeRef> {
        let mut out = self.value(a).clone();
        kernels::scale_assign(factor, out.data_mut());
        let needs = self.needs(a);
        self.push(out, Op::Scale { a, factor }, needs)
    }

    /// Column-wise concatenation of `[m×d1]` and `[m×d2]` into `[m×(d1+d2)]`.
    pub fn concat_cols(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.rows() != tb.rows() {
            return Err(NumError::ShapeMismatch {
                op: "concat_cols",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let (m, d1, d2) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(&[m, d1 + d2]);
        for r in 0..m {
            out.data_mut()[r * (d1 + d2)..r * (d1 + d2) + d1].copy_from_slice(ta.row(r));
            out.data_mut()[r * (d1 + d2) + d1..(r + 1) * (d1 + d2)].copy_from_slice(tb.row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::ConcatCols { a, b }, needs)
    }

    /// Sum of all elements, producing a scalar node.
    pub fn sum_all(&mut self, x: NodeRef) -> Result<NodeRef> {
        let total: S = self.value(x).data().iter().cloned().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::SumAll { x }, needs)
    }

    // ----- linear algebra -------------------------------------------------

    /// `x·wᵀ (+ b)`: `x: [m×din]`, `w: [dout×din]`, `b: [dout]`.
    pub fn linear(&mut self, x: NodeRef, w: NodeRef, b: Option<NodeRef>) -> Result<NodeRef> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.ndim() != 2 || tw.ndim() != 2 || tx.cols() != tw.cols() {
            return Err(NumError::ShapeMismatch {
                op: "linear",
                detail: format!("x {:?} vs w {:?}", tx.shape(), tw.shape()),
            });
        }
        let (m, dout) = (tx.rows(), tw.rows());
        if let Some(bn) = b {
            let tb = self.value(bn);
            if tb.ndim() != 1 || tb.len() != dout {
                return Err(NumError::ShapeMismatch {
                    op: "linear",
                    detail: format!("bias {:?} vs dout {}", tb.shape(), dout),
                });
            }
        }
        let (tx, tw) = (self.value(x), self.value(w));
        let mut out = Tensor::zeros(&[m, dout]);
        for i in 0..m {
            let xrow = tx.row(i);
            let orow = &mut out.data_mut()[i * dout..(i + 1) * dout];
            for o in 0..dout {
                orow[o] = kernels::dot(xrow, tw.row(o));
            }
        }
        if let Some(bn) = b {
            let tb = self.value(bn);
            for i in 0..m {
                kernels::add_assign(tb.data(), &mut out.data_mut()[i * dout..(i + 1) * dout]);
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.map_or(false, |bn| self.needs(bn));
        self.push(out, Op::Linear { x, w, b }, needs)
    }

    /// Ordinary matrix product: `a: [m×k] · b: [k×n] → [m×n]`.
    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.cols() != tb.rows() {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let arow = ta.row(i);
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for p in 0..k {
                kernels::axpy(arow[p], tb.row(p), orow);
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul { a, b }, needs)
    }

    /// Product with the second operand transposed:
    /// `a: [m×d] · bᵀ, b: [n×d] → [m×n]`. This is the attention-score shape.
    pub fn matmul_nt(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.cols() != tb.cols() {
            return Err(NumError::ShapeMismatch {
                op: "matmul_nt",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let (m, n) = (ta.rows(), tb.rows());
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let arow = ta.row(i);
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for (j, o) in orow.iter_mut().enumerate() {
                *o = kernels::dot(arow, tb.row(j));
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMulNT { a, b }, needs)
    }

    // ----- sequence ops ---------------------------------------------------

    /// 1-D convolution over time: `x: [T×Cin]`, `kernels: [Cout×Cin×W]`,
    /// output `[T×Cout]`. `Same` mode requires odd `W`; `Causal` mode sees
    /// only positions ≤ t. Bias is deliberately separate (`add_row`).
    pub fn conv1d(&mut self, x: NodeRef, w: NodeRef, mode: PadMode) -> Result<NodeRef> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.ndim() != 2 || tw.ndim() != 3 || tw.shape()[1] != tx.cols() {
            return Err(NumError::ShapeMismatch {
                op: "conv1d",
                detail: format!("x {:?} vs kernels {:?}", tx.shape(), tw.shape()),
            });
        }
        if tx.rows() == 0 {
            return Err(NumError::Invalid {
                op: "conv1d",
                detail: "empty input sequence".into(),
            });
        }
        let width = tw.shape()[2];
        if mode == PadMode::Same && width % 2 == 0 {
            return Err(NumError::Invalid {
                op: "conv1d",
                detail: format!("`same` mode requires odd kernel width, got {}", width),
            });
        }
        let out = conv1d_forward(tx, tw, mode);
        let needs = self.needs(x) || self.needs(w);
        self.push(out, Op::Conv1d { x, w, mode }, needs)
    }

    /// Gated linear unit over columns: `x: [T×2C] → [T×C]`,
    /// `out = x[:, :C] ⊙ σ(x[:, C:])`.
    pub fn glu(&mut self, x: NodeRef) -> Result<NodeRef> {
        let tx = self.value(x);
        if tx.ndim() != 2 || tx.cols() % 2 != 0 {
            return Err(NumError::ShapeMismatch {
                op: "glu",
                detail: format!("wants [T×2C], got {:?}", tx.shape()),
            });
        }
        let (t_len, c2) = (tx.rows(), tx.cols());
        let c = c2 / 2;
        let mut out = Tensor::zeros(&[t_len, c]);
        for t in 0..t_len {
            let xrow = tx.row(t);
            let orow = &mut out.data_mut()[t * c..(t + 1) * c];
            for j in 0..c {
                orow[j] = xrow[j] * kernels::sigmoid(xrow[c + j]);
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Glu { x }, needs)
    }

    /// Row lookup: `table: [V×d]`, `idx` of length L → `[L×d]`. The backward
    /// pass scatter-adds into the table gradient, so repeated indices
    /// accumulate.
    pub fn gather_rows(&mut self, table: NodeRef, idx: &[u32]) -> Result<NodeRef> {
        let tt = self.value(table);
        if tt.ndim() != 2 {
            return Err(NumError::ShapeMismatch {
                op: "gather_rows",
                detail: format!("table must be 2-D, got {:?}", tt.shape()),
            });
        }
        let v = tt.rows();
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= v) {
            return Err(NumError::Invalid {
                op: "gather_rows",
                detail: format!("index {} out of range for table with {} rows", bad, v),
            });
        }
        let d = tt.cols();
        let mut out = Tensor::zeros(&[idx.len(), d]);
        for (r, &i) in idx.iter().enumerate() {
            out.data_mut()[r * d..(r + 1) * d].copy_from_slice(tt.row(i as usize));
        }
        let needs = self.needs(table);
        self.push(
            out,
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            needs,
        )
    }

    /// Row-wise softmax of `[m×n]`. With a mask, positions where
    /// `allowed[j]` is false receive exactly zero weight in every row;
    /// errors if the mask excludes everything.
    pub fn masked_softmax_rows(&mut self, x: NodeRef, allowed: Option<&[bool]>) -> Result<NodeRef> {
        let tx = self.value(x);
        if tx.ndim() != 2 {
            return Err(NumError::ShapeMismatch {
                op: "softmax_rows",
                detail: format!("wants 2-D, got {:?}", tx.shape()),
            });
        }
        if let Some(m) = allowed {
            if m.len() != tx.cols() {
                return Err(NumError::ShapeMismatch {
                    op: "softmax_rows",
                    detail: format!("mask length {} vs {} columns", m.len(), tx.cols()),
                });
            }
        }
        let (m, n) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(&[m, n]);
        for r in 0..m {
            let p = kernels::masked_softmax_row(tx.row(r), allowed)?;
            out.data_mut()[r * n..(r + 1) * n].copy_from_slice(&p);
        }
        let needs = self.needs(x);
        self.push(out, Op::SoftmaxRows { x }, needs)
    }

    /// Unmasked row-wise softmax.
    pub fn softmax_rows(&mut self, x: NodeRef) -> Result<NodeRef> {
        self.masked_softmax_rows(x, None)
    }

    /// Summed cross-entropy of logit rows against target indices, producing
    /// a scalar: `Σ_i −log softmax(logits[i])[targets[i]]`.
    pub fn cross_entropy_sum(&mut self, logits: NodeRef, targets: &[u32]) -> Result<NodeRef> {
        let tl = self.value(logits);
        if tl.ndim() != 2 || tl.rows() != targets.len() {
            return Err(NumError::ShapeMismatch {
                op: "cross_entropy_sum",
                detail: format!("logits {:?} vs {} targets", tl.shape(), targets.len()),
            });
        }
        let mut total = S::zero();
        for (r, &t) in targets.iter().enumerate() {
            total = total + kernels::cross_entropy(tl.row(r), t as usize)?;
        }
        let needs = self.needs(logits);
        self.push(
            Tensor::scalar(total),
            Op::CrossEntropySum {
                logits,
                targets: targets.to_vec(),
            },
            needs,
        )
    }

    /// Inverted dropout: each element is zeroed with probability `p` and
    /// survivors are scaled by `1/(1−p)`, so the expectation is unchanged.
    /// The sampled mask is recorded on the tape and reused in backward.
    pub fn dropout<R: rand::Rng + ?Sized>(
        &mut self,
        x: NodeRef,
        p: f64,
        rng: &mut R,
    ) -> Result<NodeRef> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumError::Invalid {
                op: "dropout",
                detail: format!("rate must be in [0,1), got {}", p),
            });
        }
        let tx = self.value(x);
        let keep_scale = S::from_f64(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..tx.len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    S::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let mut out = tx.clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o = *o * m;
        }
        let needs = self.needs(x);
        self.push(out, Op::Dropout { x, mask }, needs)
    }

    // ----- backward -------------------------------------------------------

    /// Reverse-mode gradient of a scalar `loss` with respect to every
    /// `requires_grad` leaf. Consumes the graph: recording more ops or
    /// calling `backward` again afterwards is an error.
    pub fn backward(&mut self, loss: NodeRef) -> Result<()> {
        if self.consumed {
            return Err(NumError::GraphConsumed);
        }
        let lt = &self.nodes[loss.index()].value;
        if !lt.is_scalar() {
            return Err(NumError::NonScalarLoss(lt.shape().to_vec()));
        }
        self.consumed = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.index()] = Some(Tensor::scalar(S::one()));

        for i in (0..=loss.index()).rev() {
            if !self.nodes[i].needs_grad {
                self.grads[i] = None;
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue; // keep leaf gradients for the caller
            }
            let Some(gout) = self.grads[i].take() else {
                continue; // not on the path to the loss
            };
            self.propagate(i, &gout);
        }
        Ok(())
    }

    /// Gradient of a leaf after `backward`. `None` means the loss does not
    /// depend on this leaf (i.e. the gradient is identically zero) or the
    /// leaf was not marked `requires_grad`.
    pub fn grad(&self, n: NodeRef) -> Option<&Tensor<S>> {
        self.grads.get(n.index()).and_then(|g| g.as_ref())
    }

    /// Like [`Graph::grad`] but materializes the zero tensor.
    pub fn grad_or_zeros(&self, n: NodeRef) -> Tensor<S> {
        match self.grad(n) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shape(n)),
        }
    }

    fn slot(&mut self, n: NodeRef) -> &mut Tensor<S> {
        let shape = self.nodes[n.index()].value.shape().to_vec();
        let entry = &mut self.grads[n.index()];
        entry.get_or_insert_with(|| Tensor::zeros(&shape))
    }

    fn propagate(&mut self, i: usize, gout: &Tensor<S>) {
        // Ownership dance: `op` fields are Copy (NodeRefs) or cloned small
        // vectors; node values are read through raw indices while `grads`
        // slots are mutated, which is safe because they are disjoint fields.
        match &self.nodes[i].op {
            Op::Leaf => unreachable!("leaf handled in backward loop"),
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    kernels::add_assign(gout.data(), self.slot(a).data_mut());
                }
                if self.needs(b) {
                    kernels::add_assign(gout.data(), self.slot(b).data_mut());
                }
            }
            Op::AddRow { x, row } => {
                let (x, row) = (*x, *row);
                if self.needs(x) {
                    kernels::add_assign(gout.data(), self.slot(x).data_mut());
                }
                if self.needs(row) {
                    let grow = self.slot(row);
                    for r in 0..gout.rows() {
                        kernels::add_assign(gout.row(r), grow.data_mut());
                    }
                }
            }
            Op::Scale { a, factor } => {
                let (a, factor) = (*a, *factor);
                if self.needs(a) {
                    let ga = self.slot(a);
                    kernels::axpy(factor, gout.data(), ga.data_mut());
                }
            }
            Op::Linear { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                let m = gout.rows();
                let dout = gout.cols();
                if self.needs(x) {
                    let mut gx = Tensor::zeros(self.nodes[x.index()].value.shape());
                    {
                        let tw = &self.nodes[w.index()].value;
                        let din = tw.cols();
                        for i in 0..m {
                            let grow = gout.row(i);
                            let xrow = &mut gx.data_mut()[i * din..(i + 1) * din];
                            for o in 0..dout {
                                kernels::axpy(grow[o], tw.row(o), xrow);
                            }
                        }
                    }
                    kernels::add_assign(gx.data(), self.slot(x).data_mut());
                }
                if self.needs(w) {
                    let mut gw = Tensor::zeros(self.nodes[w.index()].value.shape());
                    {
                        let tx = &self.nodes[x.index()].value;
                        let din = tx.cols();
                        for i in 0..m {
                            let grow = gout.row(i);
                            let xrow = tx.row(i);
                            for o in 0..dout {
                                kernels::axpy(
                                    grow[o],
                                    xrow,
                                    &mut gw.data_mut()[o * din..(o + 1) * din],
                                );
                            }
                        }
                    }
                    kernels::add_assign(gw.data(), self.slot(w).data_mut());
                }
                if let Some(bn) = b {
                    if self.needs(bn) {
                        let gb = self.slot(bn);
                        for r in 0..m {
                            kernels::add_assign(gout.row(r), gb.data_mut());
                        }
                    }
                }
            }
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, n) = (gout.rows(), gout.cols());
                if self.needs(a) {
                    // ga = gout · bᵀ
                    let mut ga = Tensor::zeros(self.nodes[a.index()].value.shape());
                    {
                        let tb = &self.nodes[b.index()].value;
                        let k = tb.rows();
                        for i in 0..m {
                            let grow = gout.row(i);
                            let garow = &mut ga.data_mut()[i * k..(i + 1) * k];
                            for (p, g) in garow.iter_mut().enumerate() {
                                *g = *g + kernels::dot(grow, tb.row(p));
                            }
                        }
                    }
                    kernels::add_assign(ga.data(), self.slot(a).data_mut());
                }
                if self.needs(b) {
                    // gb = aᵀ · gout
                    let mut gb = Tensor::zeros(self.nodes[b.index()].value.shape());
                    {
                        let ta = &self.nodes[a.index()].value;
                        for i in 0..m {
                            let arow = ta.row(i);
                            let grow = gout.row(i);
                            for (p, &av) in arow.iter().enumerate() {
                                kernels::axpy(av, grow, &mut gb.data_mut()[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    kernels::add_assign(gb.data(), self.slot(b).data_mut());
                }
            }
            Op::MatMulNT { a, b } => {
                let (a, b) = (*a, *b);
                let (m, n) = (gout.rows(), gout.cols());
                if self.needs(a) {
                    // ga = gout · b
                    let mut ga = Tensor::zeros(self.nodes[a.index()].value.shape());
                    {
                        let tb = &self.nodes[b.index()].value;
                        let d = tb.cols();
                        for i in 0..m {
                            let grow = gout.row(i);
                            let garow = &mut ga.data_mut()[i * d..(i + 1) * d];
                            for j in 0..n {
                                kernels::axpy(grow[j], tb.row(j), garow);
                            }
                        }
                    }
                    kernels::add_assign(ga.data(), self.slot(a).data_mut());
                }
                if self.needs(b) {
                    // gb = goutᵀ · a
                    let mut gb = Tensor::zeros(self.nodes[b.index()].value.shape());
                    {
                        let ta = &self.nodes[a.index()].value;
                        let d = ta.cols();
                        for i in 0..m {
                            let grow = gout.row(i);
                            let arow = ta.row(i);
                            for j in 0..n {
                                kernels::axpy(grow[j], arow, &mut gb.data_mut()[j * d..(j + 1) * d]);
                            }
                        }
                    }
                    kernels::add_assign(gb.data(), self.slot(b).data_mut());
                }
            }
            Op::Conv1d { x, w, mode } => {
                let (x, w, mode) = (*x, *w, *mode);
                if self.needs(x) {
                    let gx = {
                        let tw = &self.nodes[w.index()].value;
                        conv1d_backward_input(gout, tw, mode)
                    };
                    kernels::add_assign(gx.data(), self.slot(x).data_mut());
                }
                if self.needs(w) {
                    let gw = {
                        let tx = &self.nodes[x.index()].value;
                        let tw = &self.nodes[w.index()].value;
                        conv1d_backward_kernels(gout, tx, tw.shape(), mode)
                    };
                    kernels::add_assign(gw.data(), self.slot(w).data_mut());
                }
            }
            Op::Glu { x } => {
                let x = *x;
                if self.needs(x) {
                    let mut gx = Tensor::zeros(self.nodes[x.index()].value.shape());
                    {
                        let tx = &self.nodes[x.index()].value;
                        let c = gout.cols();
                        for t in 0..gout.rows() {
                            let xrow = tx.row(t);
                            let grow = gout.row(t);
                            let gxrow = &mut gx.data_mut()[t * 2 * c..(t + 1) * 2 * c];
                            for j in 0..c {
                                let s = kernels::sigmoid(xrow[c + j]);
                                gxrow[j] = gxrow[j] + grow[j] * s;
                                gxrow[c + j] =
                                    gxrow[c + j] + grow[j] * xrow[j] * s * (S::one() - s);
                            }
                        }
                    }
                    kernels::add_assign(gx.data(), self.slot(x).data_mut());
                }
            }
            Op::GatherRows { table, idx } => {
                let (table, idx) = (*table, idx.clone());
                if self.needs(table) {
                    let d = gout.cols();
                    let gt = self.slot(table);
                    for (r, &i) in idx.iter().enumerate() {
                        kernels::add_assign(
                            gout.row(r),
                            &mut gt.data_mut()[i as usize * d..(i as usize + 1) * d],
                        );
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let (a, b) = (*a, *b);
                let d1 = self.nodes[a.index()].value.cols();
                let dt = gout.cols();
                if self.needs(a) {
                    let ga = self.slot(a);
                    for r in 0..gout.rows() {
                        kernels::add_assign(&gout.row(r)[..d1], ga.row_mut(r));
                    }
                }
                if self.needs(b) {
                    let gb = self.slot(b);
                    for r in 0..gout.rows() {
                        kernels::add_assign(&gout.row(r)[d1..dt], gb.row_mut(r));
                    }
                }
            }
            Op::SoftmaxRows { x } => {
                let x = *x;
                if self.needs(x) {
                    let mut gx = Tensor::zeros(self.nodes[i].value.shape());
                    {
                        let y = &self.nodes[i].value; // softmax output
                        let n = y.cols();
                        for r in 0..y.rows() {
                            let yrow = y.row(r);
                            let grow = gout.row(r);
                            let inner = kernels::dot(grow, yrow);
                            let gxrow = &mut gx.data_mut()[r * n..(r + 1) * n];
                            for j in 0..n {
                                gxrow[j] = yrow[j] * (grow[j] - inner);
                            }
                        }
                    }
                    kernels::add_assign(gx.data(), self.slot(x).data_mut());
                }
            }
            Op::CrossEntropySum { logits, targets } => {
                let (logits, targets) = (*logits, targets.clone());
                if self.needs(logits) {
                    let g = gout.scalar_value();
                    let mut gl = Tensor::zeros(self.nodes[logits.index()].value.shape());
                    {
                        let tl = &self.nodes[logits.index()].value;
                        let v = tl.cols();
                        for (r, &t) in targets.iter().enumerate() {
                            let p = kernels::softmax_row(tl.row(r))
                                .expect("forward validated this row");
                            let grow = &mut gl.data_mut()[r * v..(r + 1) * v];
                            for j in 0..v {
                                let delta = if j == t as usize { S::one() } else { S::zero() };
                                grow[j] = g * (p[j] - delta);
                            }
                        }
                    }
                    kernels::add_assign(gl.data(), self.slot(logits).data_mut());
                }
            }
            Op::SumAll { x } => {
                let x = *x;
                if self.needs(x) {
                    let g = gout.scalar_value();
                    let gx = self.slot(x);
                    for v in gx.data_mut() {
                        *v = *v + g;
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let (x, mask) = (*x, mask.clone());
                if self.needs(x) {
                    let gx = self.slot(x);
                    for ((g, &m), o) in gout.data().iter().zip(&mask).zip(gx.data_mut()) {
                        *o = *o + *g * m;
                    }
                }
            }
        }
    }
}

fn op_name<S: Scalar>(op: &Op<S>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add { .. } => "add",
        Op::AddRow { .. } => "add_row",
        Op::Scale { .. } => "scale",
        Op::Linear { .. } => "linear",
        Op::MatMul { .. } => "matmul",
        Op::MatMulNT { .. } => "matmul_nt",
        Op::Conv1d { .. } => "conv1d",
        Op::Glu { .. } => "glu",
        Op::GatherRows { .. } => "gather_rows",
        Op::ConcatCols { .. } => "concat_cols",
        Op::SoftmaxRows { .. } => "softmax_rows",
        Op::CrossEntropySum { .. } => "cross_entropy_sum",
        Op::SumAll { .. } => "sum_all",
        Op::Dropout { .. } => "dropout",
    }
}

fn pad_of(mode: PadMode, width: usize) -> usize {
    match mode {
        PadMode::Same => (width - 1) / 2,
        PadMode::Causal => width - 1,
    }
}

/// Forward convolution. Kernels are transposed once into `[W][Cin][Cout]`
/// scratch so the inner loop is a contiguous axpy over output channels.
fn conv1d_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, mode: PadMode) -> Tensor<S> {
    let (t_len, cin) = (x.rows(), x.cols());
    let (cout, _, width) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let pad = pad_of(mode, width) as isize;
    let mut wt = vec![S::zero(); width * cin * cout];
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..width {
                wt[(k * cin + ci) * cout + co] = w.data()[(co * cin + ci) * width + k];
            }
        }
    }
    let mut out = Tensor::zeros(&[t_len, cout]);
    for t in 0..t_len {
        let orow = &mut out.data_mut()[t * cout..(t + 1) * cout];
        for k in 0..width {
            let s = t as isize + k as isize - pad;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let xrow = x.row(s as usize);
            for (ci, &xv) in xrow.iter().enumerate() {
                if xv != S::zero() {
                    kernels::axpy(xv, &wt[(k * cin + ci) * cout..(k * cin + ci + 1) * cout], orow);
                }
            }
        }
    }
    out
}

/// Gradient of conv1d w.r.t. its input.
fn conv1d_backward_input<S: Scalar>(gout: &Tensor<S>, w: &Tensor<S>, mode: PadMode) -> Tensor<S> {
    let (t_len, cout) = (gout.rows(), gout.cols());
    let (_, cin, width) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let pad = pad_of(mode, width) as isize;
    // wt2[k][co][ci] for contiguous axpy over input channels.
    let mut wt2 = vec![S::zero(); width * cout * cin];
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..width {
                wt2[(k * cout + co) * cin + ci] = w.data()[(co * cin + ci) * width + k];
            }
        }
    }
    let mut gx = Tensor::zeros(&[t_len, cin]);
    for t in 0..t_len {
        let grow = gout.row(t);
        for k in 0..width {
            let s = t as isize + k as isize - pad;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let gxrow = &mut gx.data_mut()[s as usize * cin..(s as usize + 1) * cin];
            for (co, &gv) in grow.iter().enumerate() {
                if gv != S::zero() {
                    kernels::axpy(gv, &wt2[(k * cout + co) * cin..(k * cout + co + 1) * cin], gxrow);
                }
            }
        }
    }
    gx
}

/// Gradient of conv1d w.r.t. its kernels, returned in `[Cout×Cin×W]` layout.
fn conv1d_backward_kernels<S: Scalar>(
    gout: &Tensor<S>,
    x: &Tensor<S>,
    wshape: &[usize],
    mode: PadMode,
) -> Tensor<S> {
    let (t_len, cout) = (gout.rows(), gout.cols());
    let (cin, width) = (wshape[1], wshape[2]);
    let pad = pad_of(mode, width) as isize;
    // Accumulate in [W][Cout][Cin] scratch, then transpose back.
    let mut gwt = vec![S::zero(); width * cout * cin];
    for t in 0..t_len {
        let grow = gout.row(t);
        for k in 0..width {
            let s = t as isize + k as isize - pad;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let xrow = x.row(s as usize);
            for (co, &gv) in grow.iter().enumerate() {
                if gv != S::zero() {
                    kernels::axpy(gv, xrow, &mut gwt[(k * cout + co) * cin..(k * cout + co + 1) * cin]);
                }
            }
        }
    }
    let mut gw = Tensor::zeros(wshape);
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..width {
                gw.data_mut()[(co * cin + ci) * width + k] = gwt[(k * cout + co) * cin + ci];
            }
        }
    }
    gw
}
