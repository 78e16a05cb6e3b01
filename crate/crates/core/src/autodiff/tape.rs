//! The Wengert tape: records forward operations, replays them in reverse.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Index of a node on its tape. Nodes are created in topological order, so
/// every node's inputs have smaller ids.
pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Square { a: NodeId },
    Sqrt { a: NodeId },
    Exp { a: NodeId },
    Ln { a: NodeId },
    Abs { a: NodeId },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Mean { a: NodeId },
    Sum { a: NodeId },
    Cosine { u: NodeId, v: NodeId },
    Reshape { a: NodeId },
    Concat { parts: Vec<NodeId> },
    Slice { a: NodeId, offset: usize, len: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Define-by-run recording tape. Single-threaded; build one per step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the given node, if any flowed to it.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed at a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn check_id(&self, id: NodeId) -> Result<()> {
        if id < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "tape node",
                index: id,
                len: self.nodes.len(),
            })
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, name: &str) -> Result<NodeId> {
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{name} output"),
            });
        }
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node { op, value });
        Ok(self.nodes.len() - 1)
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Record an input value. Parameters, constants, and samples all enter
    /// the tape this way; the caller keeps track of which ids matter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
        });
        self.nodes.len() - 1
    }

    /// A `[1]`-shaped constant.
    pub fn scalar(&mut self, value: f64) -> Result<NodeId> {
        Ok(self.leaf(Tensor::scalar(value)?))
    }

    // ── Linear algebra ──────────────────────────────────────────────────

    /// Matrix product of two rank-2 tensors `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Op::Matmul { a, b }, vec![m, n], out, "matmul")
    }

    // ── Elementwise binary ops (equal shapes, or scalar broadcast) ──────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(name, ta, tb)?;
        let numel: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let mut out = Vec::with_capacity(numel);
        for i in 0..numel {
            let x = if da.len() == 1 { da[0] } else { da[i] };
            let y = if db.len() == 1 { db[0] } else { db[i] };
            out.push(f(x, y));
        }
        self.push(op, shape, out, name)
    }

    // ── Elementwise unary ops ───────────────────────────────────────────

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("square", a, |x| x * x, Op::Square { a })
    }

    /// Entrywise square root. The reverse rule uses subgradient 0 at 0.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt { a })
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("exp", a, f64::exp, Op::Exp { a })
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("ln", a, f64::ln, Op::Ln { a })
    }

    /// Entrywise absolute value, subgradient 0 at 0.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("abs", a, f64::abs, Op::Abs { a })
    }

    /// max(0, x); subgradient 0 at x = 0.
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("sigmoid", a, sigmoid_stable, Op::Sigmoid { a })
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.check_id(a)?;
        let ta = self.value(a);
        let shape = ta.shape().to_vec();
        let out: Vec<f64> = ta.data().iter().map(|&x| f(x)).collect();
        self.push(op, shape, out, name)
    }

    // ── Reductions ──────────────────────────────────────────────────────

    /// Mean over all entries, as a `[1]` scalar.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id(a)?;
        let ta = self.value(a);
        if ta.numel() == 0 {
            return Err(Error::EmptyTensor { op: "mean" });
        }
        let m = ta.data().iter().sum::<f64>() / ta.numel() as f64;
        self.push(Op::Mean { a }, vec![1], vec![m], "mean")
    }

    /// Sum over all entries, as a `[1]` scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id(a)?;
        let ta = self.value(a);
        if ta.numel() == 0 {
            return Err(Error::EmptyTensor { op: "sum" });
        }
        let s = ta.data().iter().sum::<f64>();
        self.push(Op::Sum { a }, vec![1], vec![s], "sum")
    }

    /// Cosine similarity of two 1-D vectors, differentiable through both.
    ///
    /// Errors with [`Error::DegenerateVector`] when either norm is below
    /// 1e-12; a hit indicates a bug upstream, so it fails loudly instead of
    /// epsilon-padding.
    pub fn cosine_similarity(&mut self, u: NodeId, v: NodeId) -> Result<NodeId> {
        self.check_id(u)?;
        self.check_id(v)?;
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.shape().len() != 1 || tu.shape() != tv.shape() {
            return Err(Error::ShapeMismatch {
                op: "cosine_similarity",
                lhs: tu.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let (nu, nv) = (tu.norm(), tv.norm());
        if nu < 1e-12 {
            return Err(Error::DegenerateVector { norm: nu });
        }
        if nv < 1e-12 {
            return Err(Error::DegenerateVector { norm: nv });
        }
        let dot: f64 = tu
            .data()
            .iter()
            .zip(tv.data())
            .map(|(x, y)| x * y)
            .sum();
        let c = dot / (nu * nv);
        self.push(Op::Cosine { u, v }, vec![1], vec![c], "cosine_similarity")
    }

    // ── Shape plumbing ──────────────────────────────────────────────────

    /// Same data, new shape (products must match).
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.check_id(a)?;
        let ta = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != ta.numel() || shape.contains(&0) || shape.is_empty() {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape,
                reason: format!("incompatible with {} elements", ta.numel()),
            });
        }
        let data = ta.data().to_vec();
        self.push(Op::Reshape { a }, shape, data, "reshape")
    }

    /// Concatenate 1-D vectors into one 1-D vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyTensor { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            self.check_id(p)?;
            let tp = self.value(p);
            if tp.shape().len() != 1 {
                return Err(Error::InvalidShape {
                    op: "concat",
                    shape: tp.shape().to_vec(),
                    reason: "only 1-D parts can be concatenated".into(),
                });
            }
            data.extend_from_slice(tp.data());
        }
        let n = data.len();
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            vec![n],
            data,
            "concat",
        )
    }

    /// A contiguous window of a 1-D vector.
    pub fn slice(&mut self, a: NodeId, offset: usize, len: usize) -> Result<NodeId> {
        self.check_id(a)?;
        let ta = self.value(a);
        if ta.shape().len() != 1 || len == 0 || offset + len > ta.numel() {
            return Err(Error::InvalidShape {
                op: "slice",
                shape: ta.shape().to_vec(),
                reason: format!("window {offset}..{} out of range", offset + len),
            });
        }
        let data = ta.data()[offset..offset + len].to_vec();
        self.push(Op::Slice { a, offset, len }, vec![len], data, "slice")
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node. Returns the gradient of the
    /// loss w.r.t. every node that influences it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check_id(loss)?;
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss + 1];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let mut out = Vec::with_capacity(grads.len());
        for (id, g) in grads.into_iter().enumerate() {
            match g {
                None => out.push(None),
                Some(data) => {
                    if !data.iter().all(|x| x.is_finite()) {
                        return Err(Error::NonFinite {
                            context: format!("gradient of node #{id}"),
                        });
                    }
                    let shape = self.nodes[id].value.shape().to_vec();
                    out.push(Some(Tensor::new(shape, data)?));
                }
            }
        }
        Ok(Gradients { grads: out })
    }

    fn backprop_node(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                // d_a = g . b^T, d_b = a^T . g
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                let (ad, bd) = (ta.data(), tb.data());
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * bd[p * n + j];
                            db[p * n + j] += ad[i * k + p] * gij;
                        }
                    }
                }
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::Add { a, b } => {
                self.accumulate_broadcast(grads, *a, g, |_, _| 1.0, *b);
                self.accumulate_broadcast(grads, *b, g, |_, _| 1.0, *a);
            }
            Op::Sub { a, b } => {
                self.accumulate_broadcast(grads, *a, g, |_, _| 1.0, *b);
                self.accumulate_broadcast(grads, *b, g, |_, _| -1.0, *a);
            }
            Op::Mul { a, b } => {
                self.accumulate_broadcast(grads, *a, g, |_, other| other, *b);
                self.accumulate_broadcast(grads, *b, g, |_, other| other, *a);
            }
            Op::Square { a } => {
                let ad = self.value(*a).data();
                let da: Vec<f64> = g.iter().zip(ad).map(|(gi, x)| 2.0 * x * gi).collect();
                accumulate(grads, *a, &da);
            }
            Op::Sqrt { a } => {
                let yd = node.value.data();
                let da: Vec<f64> = g
                    .iter()
                    .zip(yd)
                    .map(|(gi, y)| if *y > 0.0 { 0.5 / y * gi } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Exp { a } => {
                let yd = node.value.data();
                let da: Vec<f64> = g.iter().zip(yd).map(|(gi, y)| y * gi).collect();
                accumulate(grads, *a, &da);
            }
            Op::Ln { a } => {
                let ad = self.value(*a).data();
                let da: Vec<f64> = g.iter().zip(ad).map(|(gi, x)| gi / x).collect();
                accumulate(grads, *a, &da);
            }
            Op::Abs { a } => {
                let ad = self.value(*a).data();
                let da: Vec<f64> = g
                    .iter()
                    .zip(ad)
                    .map(|(gi, x)| gi * if *x > 0.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Relu { a } => {
                let ad = self.value(*a).data();
                let da: Vec<f64> = g
                    .iter()
                    .zip(ad)
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Sigmoid { a } => {
                let yd = node.value.data();
                let da: Vec<f64> = g.iter().zip(yd).map(|(gi, y)| y * (1.0 - y) * gi).collect();
                accumulate(grads, *a, &da);
            }
            Op::Mean { a } => {
                let n = self.value(*a).numel();
                let share = g[0] / n as f64;
                accumulate(grads, *a, &vec![share; n]);
            }
            Op::Sum { a } => {
                let n = self.value(*a).numel();
                accumulate(grads, *a, &vec![g[0]; n]);
            }
            Op::Cosine { u, v } => {
                let (tu, tv) = (self.value(*u), self.value(*v));
                let (nu, nv) = (tu.norm(), tv.norm());
                let c = node.value.data()[0];
                let g0 = g[0];
                let du: Vec<f64> = tu
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(ui, vi)| g0 * (vi / (nu * nv) - c * ui / (nu * nu)))
                    .collect();
                let dv: Vec<f64> = tu
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(ui, vi)| g0 * (ui / (nu * nv) - c * vi / (nv * nv)))
                    .collect();
                accumulate(grads, *u, &du);
                accumulate(grads, *v, &dv);
            }
            Op::Reshape { a } => {
                accumulate(grads, *a, g);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    accumulate(grads, p, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Slice { a, offset, len } => {
                let mut da = vec![0.0; self.value(*a).numel()];
                da[*offset..*offset + *len].copy_from_slice(g);
                accumulate(grads, *a, &da);
            }
        }
    }

    /// Accumulate a binary-op VJP into `target`, handling the scalar
    /// broadcast cases. `factor(x_target, x_other)` is the local partial.
    fn accumulate_broadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: NodeId,
        g: &[f64],
        factor: impl Fn(f64, f64) -> f64,
        other: NodeId,
    ) {
        let tt = self.value(target);
        let to = self.value(other);
        let (td, od) = (tt.data(), to.data());
        if tt.numel() == 1 && g.len() > 1 {
            // target was broadcast over the output: sum all contributions
            let mut s = 0.0;
            for (i, gi) in g.iter().enumerate() {
                let o = if od.len() == 1 { od[0] } else { od[i] };
                s += gi * factor(td[0], o);
            }
            accumulate(grads, target, &[s]);
        } else {
            let da: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(i, gi)| {
                    let x = td[i];
                    let o = if od.len() == 1 { od[0] } else { od[i] };
                    gi * factor(x, o)
                })
                .collect();
            accumulate(grads, target, &da);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, contribution: &[f64]) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        None => grads[id] = Some(contribution.to_vec()),
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else if b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else {
        Err(Error::ShapeMismatch {
            op: match op {
                "add" => "add",
                "sub" => "sub",
                _ => "mul",
            },
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    out
}

fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
