//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Training needs `∂loss/∂θ` where the loss looks through an unrolled
//! integrator whose right-hand side already contains `∇H` — a gradient.
//! Rather than deriving second-order adjoints by hand, the energy gradient
//! is *built out of first-order tape primitives* (the classic reverse sweep
//! `W₁ᵀ D₁ W₂ᵀ D₂ ⋯` written as forward ops). One plain backward pass over
//! the tape then differentiates through it exactly.
//!
//! Values live in a single bump buffer (`node = (offset, len)`), so building
//! and re-building per sample costs no per-op allocations. `backward` walks
//! the op list once in reverse. All arithmetic is in a fixed order: the same
//! graph on the same inputs reproduces bit-identical gradients.

use crate::nn::Mlp;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = W x, W row-major `[rows × cols]`.
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    /// out = Wᵀ x, W row-major `[rows × cols]`, x has `rows` entries.
    MatTVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// out = a + k·b.
    AddScaled { a: NodeId, b: NodeId, k: f64 },
    Scale { a: NodeId, k: f64 },
    Mul { a: NodeId, b: NodeId },
    Tanh { a: NodeId },
    /// out = 1 − a² (tanh′ when fed tanh output).
    OneMinusSquare { a: NodeId },
    /// out[i..] = a[half..], out[half..] = −a[..half]: multiply by J.
    JApply { a: NodeId },
    Concat { parts: Vec<NodeId> },
    Slice { a: NodeId, start: usize },
    Dot { a: NodeId, b: NodeId },
    SumSquares { a: NodeId },
    /// Packed lower-triangular vector → dense `[n × n]` lower-triangular
    /// matrix with softplus applied to the diagonal entries.
    TriSoftplusDiag { v: NodeId, n: usize },
}

struct Node {
    off: usize,
    len: usize,
    op: Op,
}

/// The tape. Create once, [`Tape::reset`] between samples.
#[derive(Default)]
pub struct Tape {
    buf: Vec<f64>,
    grad: Vec<f64>,
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    // Stable for large |x|.
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Drops all nodes but keeps allocated capacity.
    pub fn reset(&mut self) {
        self.buf.clear();
        self.grad.clear();
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.buf[n.off..n.off + n.len]
    }

    /// Gradient of the last [`Tape::backward`] target w.r.t. node `id`.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.grad[n.off..n.off + n.len]
    }

    pub fn node_len(&self, id: NodeId) -> usize {
        self.nodes[id.0].len
    }

    fn push(&mut self, len: usize, op: Op) -> NodeId {
        let off = self.buf.len();
        self.buf.resize(off + len, 0.0);
        self.nodes.push(Node { off, len, op });
        NodeId(self.nodes.len() - 1)
    }

    fn off(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.off, n.len)
    }

    pub fn leaf(&mut self, values: &[f64]) -> NodeId {
        let id = self.push(values.len(), Op::Leaf);
        let (off, len) = self.off(id);
        self.buf[off..off + len].copy_from_slice(values);
        id
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(&[v])
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(self.node_len(w), rows * cols);
        debug_assert_eq!(self.node_len(x), cols);
        let (woff, _) = self.off(w);
        let (xoff, _) = self.off(x);
        let id = self.push(rows, Op::MatVec { w, x, rows, cols });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        for r in 0..rows {
            let row = &pre[woff + r * cols..woff + (r + 1) * cols];
            let xv = &pre[xoff..xoff + cols];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(xv) {
                acc += wi * xi;
            }
            out[r] = acc;
        }
        id
    }

    pub fn mat_t_vec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(self.node_len(w), rows * cols);
        debug_assert_eq!(self.node_len(x), rows);
        let (woff, _) = self.off(w);
        let (xoff, _) = self.off(x);
        let id = self.push(cols, Op::MatTVec { w, x, rows, cols });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        for r in 0..rows {
            let xr = pre[xoff + r];
            let row = &pre[woff + r * cols..woff + (r + 1) * cols];
            for (o, wi) in out.iter_mut().zip(row) {
                *o += wi * xr;
            }
        }
        id
    }

    fn binary_elementwise(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let (aoff, alen) = self.off(a);
        let (boff, blen) = self.off(b);
        debug_assert_eq!(alen, blen);
        let id = self.push(alen, op);
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        for i in 0..alen {
            out[i] = f(pre[aoff + i], pre[boff + i]);
        }
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_elementwise(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_elementwise(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    /// a + k·b.
    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, k: f64) -> NodeId {
        self.binary_elementwise(a, b, Op::AddScaled { a, b, k }, move |x, y| x + k * y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_elementwise(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    fn unary_elementwise(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let (aoff, alen) = self.off(a);
        let id = self.push(alen, op);
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        for i in 0..alen {
            out[i] = f(pre[aoff + i]);
        }
        id
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.unary_elementwise(a, Op::Scale { a, k }, move |x| k * x)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary_elementwise(a, Op::Tanh { a }, f64::tanh)
    }

    pub fn one_minus_square(&mut self, a: NodeId) -> NodeId {
        self.unary_elementwise(a, Op::OneMinusSquare { a }, |x| 1.0 - x * x)
    }

    pub fn j_apply(&mut self, a: NodeId) -> NodeId {
        let (aoff, alen) = self.off(a);
        debug_assert_eq!(alen % 2, 0);
        let half = alen / 2;
        let id = self.push(alen, Op::JApply { a });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        for i in 0..half {
            out[i] = pre[aoff + half + i];
            out[half + i] = -pre[aoff + i];
        }
        id
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let total: usize = parts.iter().map(|&p| self.node_len(p)).sum();
        let offs: Vec<(usize, usize)> = parts.iter().map(|&p| self.off(p)).collect();
        let id = self.push(total, Op::Concat { parts: parts.to_vec() });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        let mut cur = 0;
        for (poff, plen) in offs {
            out[cur..cur + plen].copy_from_slice(&pre[poff..poff + plen]);
            cur += plen;
        }
        id
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (aoff, alen) = self.off(a);
        debug_assert!(start + len <= alen);
        let id = self.push(len, Op::Slice { a, start });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        out.copy_from_slice(&pre[aoff + start..aoff + start + len]);
        id
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (aoff, alen) = self.off(a);
        let (boff, blen) = self.off(b);
        debug_assert_eq!(alen, blen);
        let id = self.push(1, Op::Dot { a, b });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        let mut acc = 0.0;
        for i in 0..alen {
            acc += pre[aoff + i] * pre[boff + i];
        }
        out[0] = acc;
        id
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let (aoff, alen) = self.off(a);
        let id = self.push(1, Op::SumSquares { a });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        out[0] = pre[aoff..aoff + alen].iter().map(|x| x * x).sum();
        id
    }

    /// Packed length must be n(n+1)/2, rows in order (0,0), (1,0), (1,1), …
    pub fn tri_softplus_diag(&mut self, v: NodeId, n: usize) -> NodeId {
        debug_assert_eq!(self.node_len(v), n * (n + 1) / 2);
        let (voff, _) = self.off(v);
        let id = self.push(n * n, Op::TriSoftplusDiag { v, n });
        let (ooff, _) = self.off(id);
        let (pre, out) = self.buf.split_at_mut(ooff);
        let mut pk = 0;
        for i in 0..n {
            for j in 0..=i {
                let raw = pre[voff + pk];
                out[i * n + j] = if i == j { softplus(raw) } else { raw };
                pk += 1;
            }
        }
        id
    }

    /// Reverse sweep from a scalar node; gradients of every node (leaves
    /// included) are then available through [`Tape::grad`].
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(self.node_len(loss), 1, "backward needs a scalar target");
        self.grad.clear();
        self.grad.resize(self.buf.len(), 0.0);
        let (loff, _) = self.off(loss);
        self.grad[loff] = 1.0;
        for idx in (0..self.nodes.len()).rev() {
            let (ooff, olen) = {
                let n = &self.nodes[idx];
                (n.off, n.len)
            };
            // The output's grad slice sits strictly after every operand's,
            // so split keeps reads and writes disjoint.
            let op = self.nodes[idx].op.clone();
            let buf = &self.buf;
            let (gpre, gout) = self.grad.split_at_mut(ooff);
            let gout = &gout[..olen];
            match op {
                Op::Leaf => {}
                Op::MatVec { w, x, rows, cols } => {
                    let (woff, _) = (self.nodes[w.0].off, ());
                    let (xoff, _) = (self.nodes[x.0].off, ());
                    for r in 0..rows {
                        let gr = gout[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            gpre[woff + r * cols + c] += gr * buf[xoff + c];
                            gpre[xoff + c] += gr * buf[woff + r * cols + c];
                        }
                    }
                }
                Op::MatTVec { w, x, rows, cols } => {
                    let woff = self.nodes[w.0].off;
                    let xoff = self.nodes[x.0].off;
                    for r in 0..rows {
                        let xr = buf[xoff + r];
                        let mut acc = 0.0;
                        for c in 0..cols {
                            gpre[woff + r * cols + c] += xr * gout[c];
                            acc += buf[woff + r * cols + c] * gout[c];
                        }
                        gpre[xoff + r] += acc;
                    }
                }
                Op::Add { a, b } => {
                    let aoff = self.nodes[a.0].off;
                    let boff = self.nodes[b.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += gout[i];
                        gpre[boff + i] += gout[i];
                    }
                }
                Op::Sub { a, b } => {
                    let aoff = self.nodes[a.0].off;
                    let boff = self.nodes[b.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += gout[i];
                        gpre[boff + i] -= gout[i];
                    }
                }
                Op::AddScaled { a, b, k } => {
                    let aoff = self.nodes[a.0].off;
                    let boff = self.nodes[b.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += gout[i];
                        gpre[boff + i] += k * gout[i];
                    }
                }
                Op::Scale { a, k } => {
                    let aoff = self.nodes[a.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += k * gout[i];
                    }
                }
                Op::Mul { a, b } => {
                    let aoff = self.nodes[a.0].off;
                    let boff = self.nodes[b.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += gout[i] * buf[boff + i];
                        gpre[boff + i] += gout[i] * buf[aoff + i];
                    }
                }
                Op::Tanh { a } => {
                    let aoff = self.nodes[a.0].off;
                    for i in 0..olen {
                        let y = buf[ooff + i];
                        gpre[aoff + i] += gout[i] * (1.0 - y * y);
                    }
                }
                Op::OneMinusSquare { a } => {
                    let aoff = self.nodes[a.0].off;
                    for i in 0..olen {
                        gpre[aoff + i] += gout[i] * (-2.0 * buf[aoff + i]);
                    }
                }
                Op::JApply { a } => {
                    // Jᵀ = −J: grad_a = [−g_p; g_q].
                    let aoff = self.nodes[a.0].off;
                    let half = olen / 2;
                    for i in 0..half {
                        gpre[aoff + half + i] += gout[i];
                        gpre[aoff + i] -= gout[half + i];
                    }
                }
                Op::Concat { parts } => {
                    let mut cur = 0;
                    for p in parts {
                        let poff = self.nodes[p.0].off;
                        let plen = self.nodes[p.0].len;
                        for i in 0..plen {
                            gpre[poff + i] += gout[cur + i];
                        }
                        cur += plen;
                    }
                }
                Op::Slice { a, start } => {
                    let aoff = self.nodes[a.0].off;
                    for i in 0..olen {
                        gpre[aoff + start + i] += gout[i];
                    }
                }
                Op::Dot { a, b } => {
                    let aoff = self.nodes[a.0].off;
                    let boff = self.nodes[b.0].off;
                    let alen = self.nodes[a.0].len;
                    let g0 = gout[0];
                    for i in 0..alen {
                        gpre[aoff + i] += g0 * buf[boff + i];
                        gpre[boff + i] += g0 * buf[aoff + i];
                    }
                }
                Op::SumSquares { a } => {
                    let aoff = self.nodes[a.0].off;
                    let alen = self.nodes[a.0].len;
                    let g0 = gout[0];
                    for i in 0..alen {
                        gpre[aoff + i] += 2.0 * g0 * buf[aoff + i];
                    }
                }
                Op::TriSoftplusDiag { v, n } => {
                    let voff = self.nodes[v.0].off;
                    let mut pk = 0;
                    for i in 0..n {
                        for j in 0..=i {
                            let g = gout[i * n + j];
                            if i == j {
                                gpre[voff + pk] += g * sigmoid(buf[voff + pk]);
                            } else {
                                gpre[voff + pk] += g;
                            }
                            pk += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Node handles for one MLP's parameters on a tape, plus its layer shapes.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub ws: Vec<NodeId>,
    pub bs: Vec<NodeId>,
    pub shapes: Vec<(usize, usize)>, // (in_dim, out_dim) per layer
}

/// Registers every weight and bias of `net` as leaves, in layer order
/// (w then b). The same order is used when reading gradients back out.
pub fn leaf_mlp(tape: &mut Tape, net: &Mlp) -> MlpNodes {
    let mut ws = Vec::with_capacity(net.layers.len());
    let mut bs = Vec::with_capacity(net.layers.len());
    let mut shapes = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        ws.push(tape.leaf(&layer.w));
        bs.push(tape.leaf(&layer.b));
        shapes.push((layer.in_dim, layer.out_dim));
    }
    MlpNodes { ws, bs, shapes }
}

/// Forward pass (tanh hidden, linear output). Returns the output node.
pub fn mlp_forward(tape: &mut Tape, net: &MlpNodes, x: NodeId) -> NodeId {
    mlp_forward_trace(tape, net, x).0
}

/// Forward pass that also returns the post-tanh hidden nodes, needed to
/// build the gradient network.
pub fn mlp_forward_trace(tape: &mut Tape, net: &MlpNodes, x: NodeId) -> (NodeId, Vec<NodeId>) {
    let last = net.shapes.len() - 1;
    let mut cur = x;
    let mut hidden = Vec::with_capacity(last);
    for (l, &(ind, outd)) in net.shapes.iter().enumerate() {
        let lin = tape.matvec(net.ws[l], cur, outd, ind);
        let aff = tape.add(lin, net.bs[l]);
        cur = if l != last {
            let t = tape.tanh(aff);
            hidden.push(t);
            t
        } else {
            aff
        };
    }
    (cur, hidden)
}

/// Builds `∇ₓ y` of a scalar-output MLP *as tape ops*, so that a later
/// backward pass differentiates through the gradient itself. Returns
/// `(y, ∇ₓ y)`.
pub fn mlp_scalar_grad(tape: &mut Tape, net: &MlpNodes, x: NodeId) -> (NodeId, NodeId) {
    let last = net.shapes.len() - 1;
    debug_assert_eq!(net.shapes[last].1, 1, "scalar-output net expected");
    let (y, hidden) = mlp_forward_trace(tape, net, x);
    // u ← W_Lᵀ · 1
    let one = tape.scalar(1.0);
    let (rows, cols) = (net.shapes[last].1, net.shapes[last].0);
    let mut u = tape.mat_t_vec(net.ws[last], one, rows, cols);
    for l in (0..last).rev() {
        let d = tape.one_minus_square(hidden[l]);
        let du = tape.mul(d, u);
        let (ind, outd) = net.shapes[l];
        u = tape.mat_t_vec(net.ws[l], du, outd, ind);
    }
    (y, u)
}
