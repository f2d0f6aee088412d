//! Reverse-mode differentiation over a linear record of 2-D operations.
//!
//! Every node holds a `[rows × cols]` row-major value. Vectors are stored as
//! single-column matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::gemm;
use super::{ParamId, ParamSet, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add(NodeId, NodeId),
    AddBias { x: NodeId, bias: NodeId },
    Scale(NodeId, f64),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNormCols { x: NodeId, gamma: NodeId, beta: NodeId },
    Im2Col { x: NodeId, kernel: usize, stride: usize, pad: usize },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize },
    MeanCols(NodeId),
    AvgPoolCols { x: NodeId, factor: usize },
    BceWithLogits { z: NodeId, label: f64 },
}

#[derive(Debug, Clone)]
struct Node<S> {
    rows: usize,
    cols: usize,
    value: Vec<S>,
    // Saved forward quantities: normalized values followed by per-column
    // inverse standard deviations for layer norm.
    aux: Vec<S>,
    op: Op,
    needs_grad: bool,
}

/// Forward record for one evaluation. Build the graph by calling the op
/// methods, then call [`Tape::backward`] on a scalar node.
#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    param_nodes: Vec<Option<NodeId>>,
    perturb: Option<(ParamId, usize, f64)>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    nodes: Vec<Option<Vec<S>>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<S: Real> Gradients<S> {
    pub fn node(&self, id: NodeId) -> Option<&[S]> {
        self.nodes[id.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[S]> {
        let node = (*self.param_nodes.get(id.0)?)?;
        self.node(node)
    }

    /// Per-parameter gradients indexed by [`ParamId`], `None` for parameters
    /// the loss does not depend on.
    pub fn into_param_grads(mut self) -> Vec<Option<Vec<S>>> {
        self.param_nodes
            .iter()
            .map(|n| n.and_then(|n| self.nodes[n.0].take()))
            .collect()
    }
}

const LN_EPS: f64 = 1e-5;

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            perturb: None,
        }
    }

    /// Tape on which element `index` of parameter `id` reads as its stored
    /// value plus `delta`, evaluated in `S`.
    pub fn with_perturbation(id: ParamId, index: usize, delta: f64) -> Self {
        Self {
            perturb: Some((id, index, delta)),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[S] {
        &self.nodes[id.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, id: NodeId) -> S {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<S>, op: Op, needs_grad: bool) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by {op:?}"
        );
        self.push_aux(rows, cols, value, Vec::new(), op, needs_grad)
    }

    fn push_aux(
        &mut self,
        rows: usize,
        cols: usize,
        value: Vec<S>,
        aux: Vec<S>,
        op: Op,
        needs_grad: bool,
    ) -> NodeId {
        self.nodes.push(Node {
            rows,
            cols,
            value,
            aux,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id.0]
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].needs_grad)
    }

    /// Constant input that receives no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, data: &[f32]) -> Result<NodeId> {
        check_len(rows, cols, data.len())?;
        let value = data.iter().map(|&v| S::from_f32(v)).collect();
        Ok(self.push(rows, cols, value, Op::Leaf, false))
    }

    /// Constant input given directly in the tape's scalar type.
    pub fn constant_s(&mut self, rows: usize, cols: usize, value: Vec<S>) -> Result<NodeId> {
        check_len(rows, cols, value.len())?;
        Ok(self.push(rows, cols, value, Op::Leaf, false))
    }

    /// Input whose gradient is tracked and readable via [`Gradients::node`].
    pub fn variable(&mut self, rows: usize, cols: usize, value: Vec<S>) -> Result<NodeId> {
        check_len(rows, cols, value.len())?;
        Ok(self.push(rows, cols, value, Op::Leaf, true))
    }

    /// Leaf for a parameter tensor. Repeated calls for the same id return
    /// the same node. 1-D tensors become single columns, n-D tensors are
    /// viewed as `dims[0] × rest`.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        if let Some(Some(n)) = self.param_nodes.get(id.0) {
            return *n;
        }
        let t = params.get(id);
        let rows = t.dims().first().copied().unwrap_or(1);
        let cols = if rows == 0 { 0 } else { t.len() / rows };
        let mut value: Vec<S> = t.data().iter().map(|&v| S::from_f32(v)).collect();
        if let Some((pid, index, delta)) = self.perturb {
            if pid == id {
                value[index] += S::from_f64(delta);
            }
        }
        let node = self.push(rows, cols, value, Op::Param, true);
        if self.param_nodes.len() <= id.0 {
            self.param_nodes.resize(id.0 + 1, None);
        }
        self.param_nodes[id.0] = Some(node);
        node
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims differ: op(a) is {m}×{k}, op(b) is {k2}×{n}"
            )));
        }
        let mut out = vec![S::zero(); m * n];
        gemm(m, n, k, &self.node(a).value, ta, &self.node(b).value, tb, &mut out, false);
        let ng = self.ng(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMul { a, b, ta, tb }, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self
            .node(a)
            .value
            .iter()
            .zip(&self.node(b).value)
            .map(|(&x, &y)| x + y)
            .collect();
        let (r, c) = self.shape(a);
        let ng = self.ng(&[a, b]);
        Ok(self.push(r, c, out, Op::Add(a, b), ng))
    }

    /// Adds a per-row bias (length `rows`) to every column.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if self.node(bias).value.len() != r {
            return Err(Error::shape(format!(
                "bias of length {} for {r} rows",
                self.node(bias).value.len()
            )));
        }
        let b = &self.node(bias).value;
        let out = self
            .node(x)
            .value
            .chunks_exact(c.max(1))
            .zip(b)
            .flat_map(|(row, &bv)| row.iter().map(move |&v| v + bv))
            .collect();
        let ng = self.ng(&[x, bias]);
        Ok(self.push(r, c, out, Op::AddBias { x, bias }, ng))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let sv = S::from_f64(s);
        let out = self.node(a).value.iter().map(|&v| v * sv).collect();
        let (r, c) = self.shape(a);
        let ng = self.ng(&[a]);
        self.push(r, c, out, Op::Scale(a, s), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self
            .node(a)
            .value
            .iter()
            .map(|&v| if v > S::zero() { v } else { S::zero() })
            .collect();
        let (r, c) = self.shape(a);
        let ng = self.ng(&[a]);
        self.push(r, c, out, Op::Relu(a), ng)
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut out = self.node(a).value.clone();
        for row in out.chunks_exact_mut(c.max(1)) {
            let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let ng = self.ng(&[a]);
        self.push(r, c, out, Op::SoftmaxRows(a), ng)
    }

    /// Normalizes each column over its rows, then applies per-row gain and
    /// offset.
    pub fn layer_norm_cols(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if self.node(gamma).value.len() != r || self.node(beta).value.len() != r {
            return Err(Error::shape(format!("layer norm parameters do not match {r} rows")));
        }
        let xv = &self.node(x).value;
        let g = &self.node(gamma).value;
        let b = &self.node(beta).value;
        let rs = S::from_f64(r as f64);
        let eps = S::from_f64(LN_EPS);
        let mut xhat = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); c];
        let mut out = vec![S::zero(); r * c];
        for t in 0..c {
            let mean = (0..r).map(|i| xv[i * c + t]).sum::<S>() / rs;
            let var = (0..r)
                .map(|i| {
                    let d = xv[i * c + t] - mean;
                    d * d
                })
                .sum::<S>()
                / rs;
            let is = S::one() / (var + eps).sqrt();
            inv_std[t] = is;
            for i in 0..r {
                let h = (xv[i * c + t] - mean) * is;
                xhat[i * c + t] = h;
                out[i * c + t] = g[i] * h + b[i];
            }
        }
        xhat.extend(inv_std);
        let ng = self.ng(&[x, gamma, beta]);
        Ok(self.push_aux(r, c, out, xhat, Op::LayerNormCols { x, gamma, beta }, ng))
    }

    /// Unfolds `[C × L]` into `[(C·kernel) × L_out]` patches with zero padding;
    /// row `c·kernel + j` holds input channel `c` at tap `j`.
    pub fn im2col(&mut self, x: NodeId, kernel: usize, stride: usize, pad: usize) -> Result<NodeId> {
        let (ch, len) = self.shape(x);
        if kernel == 0 || stride == 0 || len + 2 * pad < kernel {
            return Err(Error::arg(format!(
                "convolution kernel {kernel}, stride {stride}, pad {pad} on length {len}"
            )));
        }
        let out_len = (len + 2 * pad - kernel) / stride + 1;
        let xv = &self.node(x).value;
        let mut out = vec![S::zero(); ch * kernel * out_len];
        for c in 0..ch {
            for j in 0..kernel {
                let row = &mut out[(c * kernel + j) * out_len..(c * kernel + j + 1) * out_len];
                for (t, o) in row.iter_mut().enumerate() {
                    let src = (t * stride + j) as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        *o = xv[c * len + src as usize];
                    }
                }
            }
        }
        let ng = self.ng(&[x]);
        Ok(self.push(ch * kernel, out_len, out, Op::Im2Col { x, kernel, stride, pad }, ng))
    }

    /// Stacks nodes with equal column counts along rows.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::arg("concat of zero tensors"));
        };
        let c = self.shape(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pc != c {
                return Err(Error::shape(format!("row concat of widths {c} and {pc}")));
            }
            rows += pr;
            out.extend_from_slice(&self.node(p).value);
        }
        let ng = self.ng(parts);
        Ok(self.push(rows, c, out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Joins nodes with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::arg("concat of zero tensors"));
        };
        let r = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pr != r {
                return Err(Error::shape(format!("column concat of heights {r} and {pr}")));
            }
            cols += pc;
        }
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                out.extend_from_slice(&self.node(p).value[i * pc..(i + 1) * pc]);
            }
        }
        let ng = self.ng(parts);
        Ok(self.push(r, cols, out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start + len > r {
            return Err(Error::shape(format!("rows {start}..{} of {r}", start + len)));
        }
        let out = self.node(x).value[start * c..(start + len) * c].to_vec();
        let ng = self.ng(&[x]);
        Ok(self.push(len, c, out, Op::SliceRows { x, start }, ng))
    }

    /// Per-row mean over columns, giving a single column.
    pub fn mean_cols(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(Error::shape("mean over an empty time axis"));
        }
        let cs = S::from_f64(c as f64);
        let out = self
            .node(x)
            .value
            .chunks_exact(c)
            .map(|row| row.iter().copied().sum::<S>() / cs)
            .collect();
        let ng = self.ng(&[x]);
        Ok(self.push(r, 1, out, Op::MeanCols(x), ng))
    }

    /// Non-overlapping mean pooling along columns.
    pub fn avg_pool_cols(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if factor == 0 || c % factor != 0 {
            return Err(Error::arg(format!(
                "length {c} is not divisible by pooling factor {factor}"
            )));
        }
        let oc = c / factor;
        let fs = S::from_f64(factor as f64);
        let xv = &self.node(x).value;
        let mut out = vec![S::zero(); r * oc];
        for i in 0..r {
            for t in 0..oc {
                let s: S = xv[i * c + t * factor..i * c + (t + 1) * factor].iter().copied().sum();
                out[i * oc + t] = s / fs;
            }
        }
        let ng = self.ng(&[x]);
        Ok(self.push(r, oc, out, Op::AvgPoolCols { x, factor }, ng))
    }

    /// Binary cross-entropy of a `1 × 1` logit against a `{0, 1}` label.
    pub fn bce_with_logits(&mut self, z: NodeId, label: f64) -> Result<NodeId> {
        if self.shape(z) != (1, 1) {
            return Err(Error::shape(format!("logit has shape {:?}", self.shape(z))));
        }
        let zv = self.scalar(z);
        let loss = bce_value(zv, S::from_f64(label));
        let ng = self.ng(&[z]);
        Ok(self.push(1, 1, vec![loss], Op::BceWithLogits { z, label }, ng))
    }

    /// Which ReLU inputs are positive, over all ReLU nodes in recording
    /// order. Two evaluations of the same graph with equal masks lie on the
    /// same linear piece of every ReLU.
    pub fn relu_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                out.extend(self.node(a).value.iter().map(|&v| v > S::zero()));
            }
        }
        out
    }

    /// Back-propagates from a `1 × 1` node.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<S>> {
        if self.shape(root) != (1, 1) {
            return Err(Error::shape(format!(
                "backward from a non-scalar node of shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![S::one()]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // Keep only what callers can ask for.
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf | Op::Param) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            nodes: grads,
            param_nodes: self.param_nodes.clone(),
        })
    }

    fn backprop(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let (r, c) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                let (ar, ac) = self.shape(a);
                let (br, bc) = self.shape(b);
                let k = if ta { ar } else { ac };
                let av = &self.node(a).value;
                let bv = &self.node(b).value;
                if self.node(a).needs_grad {
                    let ga = slot(grads, a, ar * ac);
                    if ta {
                        // a is k×m: dA = op(B) · gᵀ
                        gemm(k, r, c, bv, tb, g, true, ga, true);
                    } else {
                        // a is m×k: dA = g · op(B)ᵀ
                        gemm(r, k, c, g, false, bv, !tb, ga, true);
                    }
                }
                if self.node(b).needs_grad {
                    let gb = slot(grads, b, br * bc);
                    if tb {
                        // b is n×k: dB = gᵀ · op(A)
                        gemm(c, k, r, g, true, av, ta, gb, true);
                    } else {
                        // b is k×n: dB = op(A)ᵀ · g
                        gemm(k, c, r, av, !ta, g, false, gb, true);
                    }
                }
            }
            Op::Add(a, b) => {
                for &x in [a, b] {
                    if self.node(x).needs_grad {
                        add_into(slot(grads, x, r * c), g);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.node(*x).needs_grad {
                    add_into(slot(grads, *x, r * c), g);
                }
                if self.node(*bias).needs_grad {
                    let gb = slot(grads, *bias, r);
                    for (i, row) in g.chunks_exact(c.max(1)).enumerate() {
                        gb[i] += row.iter().copied().sum::<S>();
                    }
                }
            }
            Op::Scale(a, s) => {
                let sv = S::from_f64(*s);
                let ga = slot(grads, *a, r * c);
                for (d, &v) in ga.iter_mut().zip(g) {
                    *d += v * sv;
                }
            }
            Op::Relu(a) => {
                let ga = slot(grads, *a, r * c);
                for ((d, &v), &y) in ga.iter_mut().zip(g).zip(&node.value) {
                    if y > S::zero() {
                        *d += v;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let ga = slot(grads, *a, r * c);
                for ((drow, grow), yrow) in ga
                    .chunks_exact_mut(c)
                    .zip(g.chunks_exact(c))
                    .zip(node.value.chunks_exact(c))
                {
                    let dot: S = grow.iter().zip(yrow).map(|(&gv, &y)| gv * y).sum();
                    for ((d, &gv), &y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += y * (gv - dot);
                    }
                }
            }
            Op::LayerNormCols { x, gamma, beta } => {
                let (xhat, inv_std) = node.aux.split_at(r * c);
                let gv = &self.node(*gamma).value;
                if self.node(*gamma).needs_grad {
                    let gg = slot(grads, *gamma, r);
                    for i in 0..r {
                        for t in 0..c {
                            gg[i] += g[i * c + t] * xhat[i * c + t];
                        }
                    }
                }
                if self.node(*beta).needs_grad {
                    let gb = slot(grads, *beta, r);
                    for (i, row) in g.chunks_exact(c).enumerate() {
                        gb[i] += row.iter().copied().sum::<S>();
                    }
                }
                if self.node(*x).needs_grad {
                    let gx = slot(grads, *x, r * c);
                    let rs = S::from_f64(r as f64);
                    for t in 0..c {
                        let mut m1 = S::zero();
                        let mut m2 = S::zero();
                        for i in 0..r {
                            let dh = g[i * c + t] * gv[i];
                            m1 += dh;
                            m2 += dh * xhat[i * c + t];
                        }
                        m1 /= rs;
                        m2 /= rs;
                        for i in 0..r {
                            let dh = g[i * c + t] * gv[i];
                            gx[i * c + t] += inv_std[t] * (dh - m1 - xhat[i * c + t] * m2);
                        }
                    }
                }
            }
            Op::Im2Col { x, kernel, stride, pad } => {
                let (ch, len) = self.shape(*x);
                let gx = slot(grads, *x, ch * len);
                for cc in 0..ch {
                    for j in 0..*kernel {
                        let row = &g[(cc * kernel + j) * c..(cc * kernel + j + 1) * c];
                        for (t, &v) in row.iter().enumerate() {
                            let src = (t * stride + j) as isize - *pad as isize;
                            if src >= 0 && (src as usize) < len {
                                gx[cc * len + src as usize] += v;
                            }
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.node(p).value.len();
                    if self.node(p).needs_grad {
                        add_into(slot(grads, p, n), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    if self.node(p).needs_grad {
                        let gp = slot(grads, p, pr * pc);
                        for i in 0..pr {
                            add_into(&mut gp[i * pc..(i + 1) * pc], &g[i * c + col..i * c + col + pc]);
                        }
                    }
                    col += pc;
                }
            }
            Op::SliceRows { x, start } => {
                let n = self.node(*x).value.len();
                let gx = slot(grads, *x, n);
                add_into(&mut gx[start * c..(start + r) * c], g);
            }
            Op::MeanCols(x) => {
                let (xr, xc) = self.shape(*x);
                let inv = S::one() / S::from_f64(xc as f64);
                let gx = slot(grads, *x, xr * xc);
                for (row, &gv) in gx.chunks_exact_mut(xc).zip(g) {
                    for d in row {
                        *d += gv * inv;
                    }
                }
            }
            Op::AvgPoolCols { x, factor } => {
                let (xr, xc) = self.shape(*x);
                let inv = S::one() / S::from_f64(*factor as f64);
                let gx = slot(grads, *x, xr * xc);
                for i in 0..xr {
                    for t in 0..xc {
                        gx[i * xc + t] += g[i * c + t / factor] * inv;
                    }
                }
            }
            Op::BceWithLogits { z, label } => {
                let zv = self.scalar(*z);
                let d = sigmoid(zv) - S::from_f64(*label);
                slot(grads, *z, 1)[0] += g[0] * d;
            }
        }
    }
}

fn check_len(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows * cols != len {
        return Err(Error::shape(format!("{rows}×{cols} input with {len} values")));
    }
    Ok(())
}

fn slot<S: Real>(grads: &mut [Option<Vec<S>>], id: NodeId, len: usize) -> &mut [S] {
    grads[id.0].get_or_insert_with(|| vec![S::zero(); len])
}

fn add_into<S: Real>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid<S: Real>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `max(z, 0) − z·y + log(1 + e^{−|z|})`, stable for large `|z|`.
pub fn bce_value<S: Real>(z: S, label: S) -> S {
    z.max(S::zero()) - z * label + (-z.abs()).exp().ln_1p()
}
