//! Reverse-mode tape.
//!
//! A forward pass records one node per operation; nodes only ever reference
//! earlier nodes, so the tape is acyclic and a single reverse sweep visits
//! each node exactly once. One forward/backward pass owns its tape; sharing
//! across threads happens at the granularity of independent samples.
//!
//! Gradients accumulate: calling `backward` twice without a fresh tape doubles
//! every leaf gradient.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{as_chw, check_same_shape, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum TapeOp<S: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddScalar(usize),
    ScalarMul(usize, S),
    Neg(usize),
    Abs(usize),
    Ln(usize),
    Sqrt(usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Clamp { x: usize, lo: S, hi: S },
    Conv2d { x: usize, w: usize, b: usize, dims: ConvDims },
    Upsample2x(usize),
    Sum(usize),
    Mean(usize),
    DiffU(usize),
    DiffV(usize),
    MaskMul { x: usize, m: usize },
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
}

struct Node<S: Scalar> {
    op: TapeOp<S>,
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
    needs_grad: bool,
}

/// Wengert list for one forward/backward pass.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Tape<S> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: TapeOp<S>, shape: Vec<usize>, data: Vec<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            shape,
            data,
            grad: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<S> {
        &self.nodes[v.0]
    }

    /// Register a tensor; it tracks gradients iff `requires_grad` is set on it.
    pub fn leaf(&mut self, t: &Tensor<S>) -> Var {
        self.push(
            TapeOp::Leaf,
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad(),
        )
    }

    /// Register a tensor that never tracks gradients.
    pub fn constant(&mut self, t: &Tensor<S>) -> Var {
        self.push(TapeOp::Leaf, t.shape().to_vec(), t.data().to_vec(), false)
    }

    /// Register a tensor that always tracks gradients (a trainable parameter).
    pub fn param(&mut self, t: &Tensor<S>) -> Var {
        self.push(TapeOp::Leaf, t.shape().to_vec(), t.data().to_vec(), true)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn data(&self, v: Var) -> &[S] {
        &self.node(v).data
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<S> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.data.clone()).expect("tape node is well-formed")
    }

    /// The single element of a scalar-valued node.
    pub fn item(&self, v: Var) -> Result<S> {
        let n = self.node(v);
        if n.data.len() != 1 {
            return Err(Error::shape(
                "item",
                format!("expected scalar node, shape is {:?}", n.shape),
            ));
        }
        Ok(n.data[0])
    }

    pub fn grad_data(&self, v: Var) -> Option<&[S]> {
        self.node(v).grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<S>> {
        let n = self.node(v);
        n.grad
            .as_ref()
            .map(|g| Tensor::new(n.shape.clone(), g.clone()).expect("grad matches node shape"))
    }

    /// Copy this node's gradient into the tensor's `grad` buffer.
    pub fn write_grad(&self, v: Var, t: &mut Tensor<S>) -> Result<()> {
        let n = self.node(v);
        if n.shape != t.shape() {
            return Err(Error::shape(
                "write_grad",
                format!("node {:?} vs tensor {:?}", n.shape, t.shape()),
            ));
        }
        t.set_grad(n.grad.clone());
        Ok(())
    }

    // ---- elementwise ----------------------------------------------------

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: impl Fn(usize, usize) -> TapeOp<S>,
    ) -> Result<Var> {
        check_same_shape(name, &self.node(a).shape, &self.node(b).shape)?;
        let (na, nb) = (self.node(a), self.node(b));
        let data = na
            .data
            .iter()
            .zip(&nb.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = na.needs_grad || nb.needs_grad;
        Ok(self.push(op(a.0, b.0), na.shape.clone(), data, needs))
    }

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(S) -> S,
        op: impl Fn(usize) -> TapeOp<S>,
    ) -> Var {
        let na = self.node(a);
        let data = na.data.iter().map(|&x| f(x)).collect();
        let (shape, needs) = (na.shape.clone(), na.needs_grad);
        self.push(op(a.0), shape, data, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, TapeOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, TapeOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, TapeOp::Mul)
    }

    /// Elementwise division. Any exactly-zero divisor is a domain error.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if let Some(i) = self.node(b).data.iter().position(|&v| v == S::ZERO) {
            return Err(Error::domain("div", format!("zero divisor at index {i}")));
        }
        self.binary("div", a, b, |x, y| x / y, TapeOp::Div)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let cs = S::from_f64(c);
        self.unary(a, |x| x + cs, |i| TapeOp::AddScalar(i))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let cs = S::from_f64(c);
        self.unary(a, |x| x * cs, |i| TapeOp::ScalarMul(i, cs))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, TapeOp::Neg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.abs(), TapeOp::Abs)
    }

    /// Natural log; every element must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if let Some((i, &v)) = self
            .node(a)
            .data
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > S::ZERO))
        {
            return Err(Error::domain(
                "ln",
                format!("non-positive value {v} at index {i}"),
            ));
        }
        Ok(self.unary(a, |x| x.ln(), TapeOp::Ln))
    }

    /// Square root; every element must be non-negative.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some((i, &v)) = self
            .node(a)
            .data
            .iter()
            .enumerate()
            .find(|(_, &v)| v < S::ZERO)
        {
            return Err(Error::domain(
                "sqrt",
                format!("negative value {v} at index {i}"),
            ));
        }
        Ok(self.unary(a, |x| x.sqrt(), TapeOp::Sqrt))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.maxv(S::ZERO), TapeOp::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid_scalar, TapeOp::Sigmoid)
    }

    /// ln(1 + exp(x)), evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus_scalar, TapeOp::Softplus)
    }

    /// Elementwise clamp into [lo, hi]. Backward passes gradient only where
    /// the input lies strictly inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo <= hi) {
            return Err(Error::arg("clamp", format!("lo {lo} > hi {hi}")));
        }
        let (ls, hs) = (S::from_f64(lo), S::from_f64(hi));
        Ok(self.unary(
            a,
            |x| x.maxv(ls).minv(hs),
            |i| TapeOp::Clamp { x: i, lo: ls, hi: hs },
        ))
    }

    // ---- reductions ------------------------------------------------------

    /// Sum of all elements, accumulated in f64 in index order.
    pub fn sum(&mut self, a: Var) -> Var {
        let na = self.node(a);
        let mut acc = 0.0f64;
        for &v in &na.data {
            acc += v.to_f64();
        }
        let needs = na.needs_grad;
        self.push(TapeOp::Sum(a.0), Vec::new(), vec![S::from_f64(acc)], needs)
    }

    /// Mean of all elements, accumulated in f64 in index order.
    pub fn mean(&mut self, a: Var) -> Var {
        let na = self.node(a);
        let n = na.data.len();
        let mut acc = 0.0f64;
        for &v in &na.data {
            acc += v.to_f64();
        }
        let needs = na.needs_grad;
        self.push(
            TapeOp::Mean(a.0),
            Vec::new(),
            vec![S::from_f64(acc / n as f64)],
            needs,
        )
    }

    // ---- spatial ops -----------------------------------------------------

    /// 2-D cross-correlation of `[C_in,H,W]` with `[C_out,C_in,k,k]` plus bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (c_in, h, wd) = as_chw("conv2d", &self.node(x).shape)?;
        let wshape = &self.node(w).shape;
        let (c_out, wc_in, kh, kw) = match wshape[..] {
            [a, b2, c, d] => (a, b2, c, d),
            _ => {
                return Err(Error::shape(
                    "conv2d",
                    format!("weight must be [C_out,C_in,k,k], got {wshape:?}"),
                ))
            }
        };
        if kh != kw {
            return Err(Error::shape("conv2d", format!("kernel must be square, got {kh}x{kw}")));
        }
        let k = kh;
        if k % 2 == 0 {
            return Err(Error::arg("conv2d", format!("kernel size {k} must be odd")));
        }
        if wc_in != c_in {
            return Err(Error::shape(
                "conv2d",
                format!("weight expects {wc_in} input channels, input has {c_in}"),
            ));
        }
        if self.node(b).shape != [c_out] {
            return Err(Error::shape(
                "conv2d",
                format!("bias must be [{c_out}], got {:?}", self.node(b).shape),
            ));
        }
        if stride == 0 {
            return Err(Error::arg("conv2d", "stride must be positive"));
        }
        // Floor division, as in standard conv arithmetic: a stride-2 k=3 p=1
        // block halves even extents.
        let span_h = h + 2 * padding;
        let span_w = wd + 2 * padding;
        if span_h < k || span_w < k {
            return Err(Error::arg(
                "conv2d",
                format!(
                    "no valid output extent for input {h}x{wd}, k={k}, stride={stride}, padding={padding}"
                ),
            ));
        }
        let dims = ConvDims {
            c_in,
            h,
            w: wd,
            c_out,
            k,
            stride,
            padding,
            h_out: (span_h - k) / stride + 1,
            w_out: (span_w - k) / stride + 1,
        };
        let data = conv_forward(
            &self.node(x).data,
            &self.node(w).data,
            &self.node(b).data,
            &dims,
        );
        let needs =
            self.node(x).needs_grad || self.node(w).needs_grad || self.node(b).needs_grad;
        Ok(self.push(
            TapeOp::Conv2d { x: x.0, w: w.0, b: b.0, dims },
            vec![dims.c_out, dims.h_out, dims.w_out],
            data,
            needs,
        ))
    }

    /// Bilinear 2x upsampling (align-corners = false) of `[C,H,W]`.
    pub fn upsample2x(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = as_chw("bilinear_upsample2x", &self.node(a).shape)?;
        let data = upsample_forward(&self.node(a).data, c, h, w);
        let needs = self.node(a).needs_grad;
        Ok(self.push(TapeOp::Upsample2x(a.0), vec![c, 2 * h, 2 * w], data, needs))
    }

    /// Forward difference along width: `out[c,h,w] = a[c,h,w+1] - a[c,h,w]`,
    /// zero in the last column.
    pub fn diff_u(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = as_chw("diff_u", &self.node(a).shape)?;
        let x = &self.node(a).data;
        let mut out = vec![S::ZERO; x.len()];
        for ci in 0..c {
            for row in 0..h {
                let base = (ci * h + row) * w;
                for col in 0..w - 1 {
                    out[base + col] = x[base + col + 1] - x[base + col];
                }
            }
        }
        let needs = self.node(a).needs_grad;
        Ok(self.push(TapeOp::DiffU(a.0), vec![c, h, w], out, needs))
    }

    /// Forward difference along height, zero in the last row.
    pub fn diff_v(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = as_chw("diff_v", &self.node(a).shape)?;
        let x = &self.node(a).data;
        let mut out = vec![S::ZERO; x.len()];
        for ci in 0..c {
            for row in 0..h - 1 {
                let base = (ci * h + row) * w;
                for col in 0..w {
                    out[base + col] = x[base + w + col] - x[base + col];
                }
            }
        }
        let needs = self.node(a).needs_grad;
        Ok(self.push(TapeOp::DiffV(a.0), vec![c, h, w], out, needs))
    }

    /// Multiply every channel of `[C,H,W]` by a single-channel `[1,H,W]` mask.
    pub fn mask_mul(&mut self, x: Var, m: Var) -> Result<Var> {
        let (c, h, w) = as_chw("mask_mul", &self.node(x).shape)?;
        let (mc, mh, mw) = as_chw("mask_mul", &self.node(m).shape)?;
        if mc != 1 || mh != h || mw != w {
            return Err(Error::shape(
                "mask_mul",
                format!("mask [1,{h},{w}] required, got [{mc},{mh},{mw}]"),
            ));
        }
        let (nx, nm) = (self.node(x), self.node(m));
        let plane = h * w;
        let mut out = Vec::with_capacity(c * plane);
        for ci in 0..c {
            let xs = &nx.data[ci * plane..(ci + 1) * plane];
            for (xv, mv) in xs.iter().zip(&nm.data) {
                out.push(*xv * *mv);
            }
        }
        let needs = nx.needs_grad || nm.needs_grad;
        Ok(self.push(TapeOp::MaskMul { x: x.0, m: m.0 }, vec![c, h, w], out, needs))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss. Populates gradients of every
    /// gradient-tracking node reachable from `loss`; repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let idx = loss.0;
        let ln = &self.nodes[idx];
        if ln.data.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, shape is {:?}", ln.shape),
            ));
        }
        if !ln.needs_grad {
            return Err(Error::arg(
                "backward",
                "loss is detached: no gradient-tracking leaf feeds it",
            ));
        }
        // Leaf gradients persist across calls (repeated backward accumulates);
        // intermediate gradients are per-sweep scratch.
        for node in &mut self.nodes {
            if !matches!(node.op, TapeOp::Leaf) {
                node.grad = None;
            }
        }
        accumulate(&mut self.nodes[idx], vec![S::ONE]);

        for i in (0..=idx).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let g = node.grad.as_ref().expect("checked above");
            match node.op {
                TapeOp::Leaf => {}
                TapeOp::Add(a, b) => {
                    if before[a].needs_grad {
                        accumulate(&mut before[a], g.clone());
                    }
                    if before[b].needs_grad {
                        accumulate(&mut before[b], g.clone());
                    }
                }
                TapeOp::Sub(a, b) => {
                    if before[a].needs_grad {
                        accumulate(&mut before[a], g.clone());
                    }
                    if before[b].needs_grad {
                        accumulate(&mut before[b], g.iter().map(|&v| -v).collect());
                    }
                }
                TapeOp::Mul(a, b) => {
                    if before[a].needs_grad {
                        let c: Vec<S> =
                            g.iter().zip(&before[b].data).map(|(&gv, &bv)| gv * bv).collect();
                        accumulate(&mut before[a], c);
                    }
                    if before[b].needs_grad {
                        let c: Vec<S> =
                            g.iter().zip(&before[a].data).map(|(&gv, &av)| gv * av).collect();
                        accumulate(&mut before[b], c);
                    }
                }
                TapeOp::Div(a, b) => {
                    if before[a].needs_grad {
                        let c: Vec<S> =
                            g.iter().zip(&before[b].data).map(|(&gv, &bv)| gv / bv).collect();
                        accumulate(&mut before[a], c);
                    }
                    if before[b].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(node.data.iter().zip(&before[b].data))
                            .map(|(&gv, (&yv, &bv))| -gv * yv / bv)
                            .collect();
                        accumulate(&mut before[b], c);
                    }
                }
                TapeOp::AddScalar(a) => {
                    if before[a].needs_grad {
                        accumulate(&mut before[a], g.clone());
                    }
                }
                TapeOp::ScalarMul(a, c) => {
                    if before[a].needs_grad {
                        accumulate(&mut before[a], g.iter().map(|&gv| gv * c).collect());
                    }
                }
                TapeOp::Neg(a) => {
                    if before[a].needs_grad {
                        accumulate(&mut before[a], g.iter().map(|&gv| -gv).collect());
                    }
                }
                TapeOp::Abs(a) => {
                    if before[a].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(&before[a].data)
                            .map(|(&gv, &xv)| {
                                if xv > S::ZERO {
                                    gv
                                } else if xv < S::ZERO {
                                    -gv
                                } else {
                                    S::ZERO
                                }
                            })
                            .collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Ln(a) => {
                    if before[a].needs_grad {
                        let c: Vec<S> =
                            g.iter().zip(&before[a].data).map(|(&gv, &xv)| gv / xv).collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Sqrt(a) => {
                    if before[a].needs_grad {
                        let two = S::from_f64(2.0);
                        let c: Vec<S> = g
                            .iter()
                            .zip(&node.data)
                            .map(|(&gv, &yv)| gv / (two * yv))
                            .collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Relu(a) => {
                    if before[a].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(&before[a].data)
                            .map(|(&gv, &xv)| if xv > S::ZERO { gv } else { S::ZERO })
                            .collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Sigmoid(a) => {
                    if before[a].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(&node.data)
                            .map(|(&gv, &yv)| gv * yv * (S::ONE - yv))
                            .collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Softplus(a) => {
                    if before[a].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(&before[a].data)
                            .map(|(&gv, &xv)| gv * sigmoid_scalar(xv))
                            .collect();
                        accumulate(&mut before[a], c);
                    }
                }
                TapeOp::Clamp { x, lo, hi } => {
                    if before[x].needs_grad {
                        let c: Vec<S> = g
                            .iter()
                            .zip(&before[x].data)
                            .map(|(&gv, &xv)| if xv > lo && xv < hi { gv } else { S::ZERO })
                            .collect();
                        accumulate(&mut before[x], c);
                    }
                }
                TapeOp::Sum(a) => {
                    if before[a].needs_grad {
                        let gv = g[0];
                        let n = before[a].data.len();
                        accumulate(&mut before[a], vec![gv; n]);
                    }
                }
                TapeOp::Mean(a) => {
                    if before[a].needs_grad {
                        let n = before[a].data.len();
                        let gv = S::from_f64(g[0].to_f64() / n as f64);
                        accumulate(&mut before[a], vec![gv; n]);
                    }
                }
                TapeOp::Conv2d { x, w, b, dims } => {
                    if before[x].needs_grad {
                        let dx = conv_backward_input(g, &before[w].data, &dims);
                        accumulate(&mut before[x], dx);
                    }
                    if before[w].needs_grad {
                        let dw = conv_backward_weight(g, &before[x].data, &dims);
                        accumulate(&mut before[w], dw);
                    }
                    if before[b].needs_grad {
                        let plane = dims.h_out * dims.w_out;
                        let db: Vec<S> = (0..dims.c_out)
                            .map(|co| {
                                let mut acc = S::ZERO;
                                for &gv in &g[co * plane..(co + 1) * plane] {
                                    acc = acc + gv;
                                }
                                acc
                            })
                            .collect();
                        accumulate(&mut before[b], db);
                    }
                }
                TapeOp::Upsample2x(a) => {
                    if before[a].needs_grad {
                        let [c, h2, w2] = node.shape[..] else { unreachable!() };
                        let dx = upsample_backward(g, c, h2 / 2, w2 / 2);
                        accumulate(&mut before[a], dx);
                    }
                }
                TapeOp::DiffU(a) => {
                    if before[a].needs_grad {
                        let [c, h, w] = before[a].shape[..] else { unreachable!() };
                        let mut dx = vec![S::ZERO; before[a].data.len()];
                        for ci in 0..c {
                            for row in 0..h {
                                let base = (ci * h + row) * w;
                                for col in 0..w - 1 {
                                    let gv = g[base + col];
                                    dx[base + col] = dx[base + col] - gv;
                                    dx[base + col + 1] = dx[base + col + 1] + gv;
                                }
                            }
                        }
                        accumulate(&mut before[a], dx);
                    }
                }
                TapeOp::DiffV(a) => {
                    if before[a].needs_grad {
                        let [c, h, w] = before[a].shape[..] else { unreachable!() };
                        let mut dx = vec![S::ZERO; before[a].data.len()];
                        for ci in 0..c {
                            for row in 0..h - 1 {
                                let base = (ci * h + row) * w;
                                for col in 0..w {
                                    let gv = g[base + col];
                                    dx[base + col] = dx[base + col] - gv;
                                    dx[base + w + col] = dx[base + w + col] + gv;
                                }
                            }
                        }
                        accumulate(&mut before[a], dx);
                    }
                }
                TapeOp::MaskMul { x, m } => {
                    let [c, h, w] = node.shape[..] else { unreachable!() };
                    let plane = h * w;
                    if before[x].needs_grad {
                        let mut dx = Vec::with_capacity(c * plane);
                        for ci in 0..c {
                            let gs = &g[ci * plane..(ci + 1) * plane];
                            for (gv, mv) in gs.iter().zip(&before[m].data) {
                                dx.push(*gv * *mv);
                            }
                        }
                        accumulate(&mut before[x], dx);
                    }
                    if before[m].needs_grad {
                        let mut dm = vec![S::ZERO; plane];
                        for ci in 0..c {
                            let gs = &g[ci * plane..(ci + 1) * plane];
                            let xs = &before[x].data[ci * plane..(ci + 1) * plane];
                            for ((dmv, &gv), &xv) in dm.iter_mut().zip(gs).zip(xs) {
                                *dmv = *dmv + gv * xv;
                            }
                        }
                        accumulate(&mut before[m], dm);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<S: Scalar>(node: &mut Node<S>, contribution: Vec<S>) {
    debug_assert_eq!(node.data.len(), contribution.len());
    match &mut node.grad {
        Some(g) => {
            for (gv, cv) in g.iter_mut().zip(contribution) {
                *gv = *gv + cv;
            }
        }
        None => node.grad = Some(contribution),
    }
}

fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    if v >= S::ZERO {
        let t = (-v).exp();
        S::ONE / (S::ONE + t)
    } else {
        let t = v.exp();
        t / (S::ONE + t)
    }
}

fn softplus_scalar<S: Scalar>(v: S) -> S {
    v.maxv(S::ZERO) + (-v.abs()).exp().ln_1p()
}

/// Output positions `o` with `0 <= o*stride + k_off - padding < extent`.
fn valid_range(extent: usize, out_extent: usize, stride: usize, padding: usize, k_off: usize) -> (usize, usize) {
    let lo = if k_off >= padding {
        0
    } else {
        (padding - k_off).div_ceil(stride)
    };
    let hi_num = extent as isize - 1 - k_off as isize + padding as isize;
    let hi = if hi_num < 0 {
        0
    } else {
        hi_num as usize / stride + 1
    };
    (lo.min(out_extent), hi.min(out_extent))
}

fn conv_forward<S: Scalar>(x: &[S], w: &[S], b: &[S], d: &ConvDims) -> Vec<S> {
    let out_plane = d.h_out * d.w_out;
    let mut out = vec![S::ZERO; d.c_out * out_plane];
    for co in 0..d.c_out {
        let bv = b[co];
        for v in &mut out[co * out_plane..(co + 1) * out_plane] {
            *v = bv;
        }
    }
    for co in 0..d.c_out {
        let out_c = co * out_plane;
        for ci in 0..d.c_in {
            let x_c = ci * d.h * d.w;
            let w_c = (co * d.c_in + ci) * d.k * d.k;
            for kh in 0..d.k {
                let (oh_lo, oh_hi) = valid_range(d.h, d.h_out, d.stride, d.padding, kh);
                for kw in 0..d.k {
                    let wv = w[w_c + kh * d.k + kw];
                    let (ow_lo, ow_hi) = valid_range(d.w, d.w_out, d.stride, d.padding, kw);
                    if ow_lo >= ow_hi {
                        continue;
                    }
                    for oh in oh_lo..oh_hi {
                        let ih = oh * d.stride + kh - d.padding;
                        let iw0 = ow_lo * d.stride + kw - d.padding;
                        let orow = &mut out[out_c + oh * d.w_out + ow_lo..out_c + oh * d.w_out + ow_hi];
                        if d.stride == 1 {
                            let xrow = &x[x_c + ih * d.w + iw0..x_c + ih * d.w + iw0 + orow.len()];
                            for (o, &xv) in orow.iter_mut().zip(xrow) {
                                *o = *o + wv * xv;
                            }
                        } else {
                            let xrow = &x[x_c + ih * d.w..x_c + (ih + 1) * d.w];
                            for (j, o) in orow.iter_mut().enumerate() {
                                *o = *o + wv * xrow[iw0 + j * d.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward_input<S: Scalar>(g: &[S], w: &[S], d: &ConvDims) -> Vec<S> {
    let out_plane = d.h_out * d.w_out;
    let mut dx = vec![S::ZERO; d.c_in * d.h * d.w];
    for co in 0..d.c_out {
        let g_c = co * out_plane;
        for ci in 0..d.c_in {
            let x_c = ci * d.h * d.w;
            let w_c = (co * d.c_in + ci) * d.k * d.k;
            for kh in 0..d.k {
                let (oh_lo, oh_hi) = valid_range(d.h, d.h_out, d.stride, d.padding, kh);
                for kw in 0..d.k {
                    let wv = w[w_c + kh * d.k + kw];
                    let (ow_lo, ow_hi) = valid_range(d.w, d.w_out, d.stride, d.padding, kw);
                    if ow_lo >= ow_hi {
                        continue;
                    }
                    for oh in oh_lo..oh_hi {
                        let ih = oh * d.stride + kh - d.padding;
                        let iw0 = ow_lo * d.stride + kw - d.padding;
                        let grow = &g[g_c + oh * d.w_out + ow_lo..g_c + oh * d.w_out + ow_hi];
                        if d.stride == 1 {
                            let xrow = &mut dx[x_c + ih * d.w + iw0..x_c + ih * d.w + iw0 + grow.len()];
                            for (xv, &gv) in xrow.iter_mut().zip(grow) {
                                *xv = *xv + wv * gv;
                            }
                        } else {
                            let xrow = &mut dx[x_c + ih * d.w..x_c + (ih + 1) * d.w];
                            for (j, &gv) in grow.iter().enumerate() {
                                let iw = iw0 + j * d.stride;
                                xrow[iw] = xrow[iw] + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn conv_backward_weight<S: Scalar>(g: &[S], x: &[S], d: &ConvDims) -> Vec<S> {
    let out_plane = d.h_out * d.w_out;
    let mut dw = vec![S::ZERO; d.c_out * d.c_in * d.k * d.k];
    for co in 0..d.c_out {
        let g_c = co * out_plane;
        for ci in 0..d.c_in {
            let x_c = ci * d.h * d.w;
            let w_c = (co * d.c_in + ci) * d.k * d.k;
            for kh in 0..d.k {
                let (oh_lo, oh_hi) = valid_range(d.h, d.h_out, d.stride, d.padding, kh);
                for kw in 0..d.k {
                    let (ow_lo, ow_hi) = valid_range(d.w, d.w_out, d.stride, d.padding, kw);
                    if ow_lo >= ow_hi {
                        continue;
                    }
                    let mut acc = S::ZERO;
                    for oh in oh_lo..oh_hi {
                        let ih = oh * d.stride + kh - d.padding;
                        let iw0 = ow_lo * d.stride + kw - d.padding;
                        let grow = &g[g_c + oh * d.w_out + ow_lo..g_c + oh * d.w_out + ow_hi];
                        if d.stride == 1 {
                            let xrow = &x[x_c + ih * d.w + iw0..x_c + ih * d.w + iw0 + grow.len()];
                            for (&gv, &xv) in grow.iter().zip(xrow) {
                                acc = acc + gv * xv;
                            }
                        } else {
                            let xrow = &x[x_c + ih * d.w..x_c + (ih + 1) * d.w];
                            for (j, &gv) in grow.iter().enumerate() {
                                acc = acc + gv * xrow[iw0 + j * d.stride];
                            }
                        }
                    }
                    dw[w_c + kh * d.k + kw] = dw[w_c + kh * d.k + kw] + acc;
                }
            }
        }
    }
    dw
}

/// Per-axis bilinear coefficients for 2x upsampling, align-corners = false.
fn up2_axis<S: Scalar>(n_in: usize) -> Vec<(usize, usize, S)> {
    (0..2 * n_in)
        .map(|o| {
            let s = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, S::from_f64(s - i0 as f64))
        })
        .collect()
}

fn upsample_forward<S: Scalar>(x: &[S], c: usize, h: usize, w: usize) -> Vec<S> {
    let ys = up2_axis::<S>(h);
    let xs = up2_axis::<S>(w);
    let mut out = Vec::with_capacity(c * 4 * h * w);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            let r0 = &plane[y0 * w..y0 * w + w];
            let r1 = &plane[y1 * w..y1 * w + w];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + fx * (r0[x1] - r0[x0]);
                let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                out.push(top + fy * (bot - top));
            }
        }
    }
    out
}

fn upsample_backward<S: Scalar>(g: &[S], c: usize, h: usize, w: usize) -> Vec<S> {
    let ys = up2_axis::<S>(h);
    let xs = up2_axis::<S>(w);
    let mut dx = vec![S::ZERO; c * h * w];
    for ci in 0..c {
        let plane_base = ci * h * w;
        let gplane = &g[ci * 4 * h * w..(ci + 1) * 4 * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let grow = &gplane[oy * 2 * w..(oy + 1) * 2 * w];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let gv = grow[ox];
                let wy0 = S::ONE - fy;
                let wx0 = S::ONE - fx;
                dx[plane_base + y0 * w + x0] = dx[plane_base + y0 * w + x0] + gv * wy0 * wx0;
                dx[plane_base + y0 * w + x1] = dx[plane_base + y0 * w + x1] + gv * wy0 * fx;
                dx[plane_base + y1 * w + x0] = dx[plane_base + y1 * w + x0] + gv * fy * wx0;
                dx[plane_base + y1 * w + x1] = dx[plane_base + y1 * w + x1] + gv * fy * fx;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn randn(rng: &mut Rng, shape: Vec<usize>) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.normal())
    }

    /// Central finite differences of `f` at `x` (the independent oracle).
    fn fd_grad(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, step: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(x.numel());
        for i in 0..x.numel() {
            let mut hi = x.clone();
            hi.data_mut()[i] += step;
            let mut lo = x.clone();
            lo.data_mut()[i] -= step;
            g.push((f(&hi) - f(&lo)) / (2.0 * step));
        }
        g
    }

    /// Max elementwise difference normalized by the largest gradient entry.
    fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = analytic
            .iter()
            .chain(numeric)
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-12);
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs())
            .fold(0.0, f64::max)
            / scale
    }

    fn check_grad(
        build: &dyn Fn(&mut Tape<f64>, Var) -> Var,
        x: &Tensor<f64>,
        tol: f64,
    ) {
        let xg = x.clone().with_grad(true);
        let mut tape = Tape::new();
        let xv = tape.leaf(&xg);
        let y = build(&mut tape, xv);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        let analytic = tape.grad_data(xv).unwrap().to_vec();

        let f = |t: &Tensor<f64>| {
            let mut tape = Tape::new();
            let v = tape.leaf(t);
            let y = build(&mut tape, v);
            let s = tape.sum(y);
            tape.item(s).unwrap()
        };
        let numeric = fd_grad(&f, x, 1e-4);
        let err = rel_err(&analytic, &numeric);
        assert!(err <= tol, "gradient mismatch: rel err {err}");
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = Rng::new(0);
        let x = randn(&mut rng, vec![2, 4, 5]);
        let w = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![2]);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(&x), tape.leaf(&w), tape.leaf(&b));
        let y = tape.conv2d(xv, wv, bv, 1, 0).unwrap();
        assert_eq!(tape.data(y), x.data());
    }

    #[test]
    fn conv_overlap_counts() {
        // 3x3 ones kernel on 3x3 ones input, padding 1: center 9, corners 4.
        let x = Tensor::full(vec![1, 3, 3], 1.0f64);
        let w = Tensor::full(vec![1, 1, 3, 3], 1.0f64);
        let b = Tensor::zeros(vec![1]);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(&x), tape.leaf(&w), tape.leaf(&b));
        let y = tape.conv2d(xv, wv, bv, 1, 1).unwrap();
        let d = tape.data(y);
        assert_eq!(d[4], 9.0);
        assert_eq!(d[0], 4.0);
        assert_eq!(d[2], 4.0);
        assert_eq!(d[6], 4.0);
        assert_eq!(d[8], 4.0);
        assert_eq!(d[1], 6.0);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(vec![1, 4, 4]);
        let tiny = Tensor::zeros(vec![1, 2, 2]);
        let w_even = Tensor::zeros(vec![1, 1, 2, 2]);
        let w_chan = Tensor::zeros(vec![1, 3, 3, 3]);
        let w_ok = Tensor::zeros(vec![1, 1, 3, 3]);
        let b = Tensor::zeros(vec![1]);
        let mut tape = Tape::<f64>::new();
        let (xv, bv) = (tape.leaf(&x), tape.leaf(&b));
        let tv = tape.leaf(&tiny);
        let we = tape.leaf(&w_even);
        let wc = tape.leaf(&w_chan);
        let wo = tape.leaf(&w_ok);
        assert!(tape.conv2d(xv, we, bv, 1, 0).is_err()); // even kernel
        assert!(tape.conv2d(xv, wc, bv, 1, 1).is_err()); // channel mismatch
        assert!(tape.conv2d(tv, wo, bv, 1, 0).is_err()); // kernel exceeds span
        assert!(tape.conv2d(xv, wo, bv, 1, 1).is_ok());
        // Floor semantics: stride 2 over an even span is valid.
        let y = tape.conv2d(xv, wo, bv, 2, 1).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 2]);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        // Gradient w.r.t. input on a random 1x5x5, per the stated oracle.
        let mut rng = Rng::new(7);
        let x = randn(&mut rng, vec![1, 5, 5]);
        let w = randn(&mut rng, vec![2, 1, 3, 3]);
        let b = randn(&mut rng, vec![2]);
        check_grad(
            &move |tape, xv| {
                let wv = tape.constant(&w);
                let bv = tape.constant(&b);
                tape.conv2d(xv, wv, bv, 1, 1).unwrap()
            },
            &x,
            1e-5,
        );

        // Gradient w.r.t. weight and bias, strided.
        let x2 = randn(&mut rng, vec![2, 7, 7]);
        let w2 = randn(&mut rng, vec![3, 2, 3, 3]).with_grad(true);
        let b2 = randn(&mut rng, vec![3]).with_grad(true);
        let mut tape = Tape::new();
        let xv = tape.constant(&x2);
        let wv = tape.leaf(&w2);
        let bv = tape.leaf(&b2);
        let y = tape.conv2d(xv, wv, bv, 2, 1).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        let dw = tape.grad_data(wv).unwrap().to_vec();
        let db = tape.grad_data(bv).unwrap().to_vec();

        let f_w = |wt: &Tensor<f64>| {
            let mut tape = Tape::new();
            let xv = tape.constant(&x2);
            let wv = tape.leaf(wt);
            let bv = tape.leaf(&b2);
            let y = tape.conv2d(xv, wv, bv, 2, 1).unwrap();
            let s = tape.sum(y);
            tape.item(s).unwrap()
        };
        assert!(rel_err(&dw, &fd_grad(&f_w, &w2, 1e-4)) <= 1e-5);

        let f_b = |bt: &Tensor<f64>| {
            let mut tape = Tape::new();
            let xv = tape.constant(&x2);
            let wv = tape.leaf(&w2);
            let bv = tape.leaf(bt);
            let y = tape.conv2d(xv, wv, bv, 2, 1).unwrap();
            let s = tape.sum(y);
            tape.item(s).unwrap()
        };
        assert!(rel_err(&db, &fd_grad(&f_b, &b2, 1e-4)) <= 1e-5);
    }

    #[test]
    fn upsample_hand_values() {
        // Interpolation of [0,1] along a length-2 axis: [0, 0.25, 0.75, 1].
        let x = Tensor::new(vec![1, 1, 2], vec![0.0f64, 1.0]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let y = tape.upsample2x(xv).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 4]);
        let d = tape.data(y);
        assert_eq!(&d[0..4], &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(&d[4..8], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let x = Tensor::full(vec![2, 3, 4], 0.37f64);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let y = tape.upsample2x(xv).unwrap();
        assert!(tape.data(y).iter().all(|&v| v == 0.37));
    }

    #[test]
    fn upsample_gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let x = randn(&mut rng, vec![2, 3, 4]);
        check_grad(&|tape, xv| tape.upsample2x(xv).unwrap(), &x, 1e-6);
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::<f64>::new();
        let half = Tensor::full(vec![4], 0.5);
        let v = tape.leaf(&half);
        let l = tape.ln(v).unwrap();
        for &x in tape.data(l) {
            assert!((x - (-0.6931471805599453)).abs() < 1e-12);
        }

        let t = Tensor::new(vec![3], vec![-2.0, 0.5, 3.0]).unwrap();
        let tv = tape.leaf(&t);
        let c = tape.clamp(tv, 0.0, 1.0).unwrap();
        assert_eq!(tape.data(c), &[0.0, 0.5, 1.0]);

        assert!(tape.clamp(tv, 2.0, 1.0).is_err());
        let neg = Tensor::new(vec![2], vec![1.0, -0.1]).unwrap();
        let nv = tape.leaf(&neg);
        match tape.ln(nv) {
            Err(Error::Domain { detail, .. }) => assert!(detail.contains("index 1")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let mut rng = Rng::new(21);
        // Inputs bounded away from kinks (|x| > 0.05) and ln/sqrt domains.
        let x = Tensor::from_fn(vec![3, 7], |_| {
            let v = rng.normal();
            v.signum() * (v.abs() + 0.05)
        });
        let pos = Tensor::from_fn(vec![3, 7], |_| rng.uniform(0.2, 3.0));

        check_grad(&|t, v| t.sigmoid(v), &x, 1e-6);
        check_grad(&|t, v| t.softplus(v), &x, 1e-6);
        check_grad(&|t, v| t.relu(v), &x, 1e-6);
        check_grad(&|t, v| t.abs(v), &x, 1e-6);
        check_grad(&|t, v| t.neg(v), &x, 1e-8);
        check_grad(&|t, v| t.scalar_mul(v, -1.7), &x, 1e-8);
        check_grad(&|t, v| t.add_scalar(v, 0.9), &x, 1e-8);
        check_grad(&|t, v| t.ln(v).unwrap(), &pos, 1e-5);
        check_grad(&|t, v| t.sqrt(v).unwrap(), &pos, 1e-5);
        check_grad(&|t, v| t.clamp(v, -0.5, 1.2).unwrap(), &x, 1e-6);

        let x3 = Tensor::from_fn(vec![2, 4, 5], |_| rng.normal());
        check_grad(&|t, v| t.diff_u(v).unwrap(), &x3, 1e-8);
        check_grad(&|t, v| t.diff_v(v).unwrap(), &x3, 1e-8);

        let other = Tensor::from_fn(vec![2, 4, 5], |_| rng.uniform(0.5, 2.0));
        check_grad(
            &move |t, v| {
                let o = t.constant(&other);
                let m = t.mul(v, o).unwrap();
                let d = t.div(m, o).unwrap();
                t.mul(d, v).unwrap()
            },
            &x3,
            1e-5,
        );

        let mask = Tensor::from_fn(vec![1, 4, 5], |_| rng.uniform(0.1, 0.9));
        check_grad(
            &move |t, v| {
                let m = t.leaf(&mask.clone().with_grad(true));
                t.mask_mul(v, m).unwrap()
            },
            &x3,
            1e-6,
        );
    }

    #[test]
    fn backward_examples() {
        // loss = sum(x): grad all ones.
        let x = Tensor::from_fn(vec![2, 3], |i| i as f64).with_grad(true);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let s = tape.sum(xv);
        tape.backward(s).unwrap();
        assert!(tape.grad_data(xv).unwrap().iter().all(|&g| g == 1.0));

        // loss = sum(x*x) at [1,-2,3]: grad [2,-4,6].
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap().with_grad(true);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let sq = tape.mul(xv, xv).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad_data(xv).unwrap(), &[2.0, -4.0, 6.0]);

        // mean backward: grad of every element is 1/n.
        let x = Tensor::zeros(vec![4]).with_grad(true);
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(&x);
        let m = tape.mean(xv);
        tape.backward(m).unwrap();
        assert!(tape.grad_data(xv).unwrap().iter().all(|&g| g == 0.25));
    }

    #[test]
    fn mean_of_example_values() {
        let x = Tensor::new(vec![4], vec![1.0f64, 2.0, 3.0, 6.0]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let m = tape.mean(xv);
        assert_eq!(tape.item(m).unwrap(), 3.0);
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached() {
        let x = Tensor::zeros(vec![3]).with_grad(true);
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(&x);
        assert!(tape.backward(xv).is_err()); // non-scalar

        let c = Tensor::zeros(vec![3]);
        let mut tape = Tape::<f64>::new();
        let cv = tape.leaf(&c);
        let s = tape.sum(cv);
        assert!(tape.backward(s).is_err()); // detached
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap().with_grad(true);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let s = tape.sum(xv);
        tape.backward(s).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad_data(xv).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic_and_replayable() {
        let mut rng = Rng::new(3);
        let x = randn(&mut rng, vec![2, 6, 6]).with_grad(true);
        let w = randn(&mut rng, vec![3, 2, 3, 3]);
        let run = || {
            let mut tape = Tape::new();
            let xv = tape.leaf(&x);
            let wv = tape.constant(&w);
            let bv = {
                let b = Tensor::zeros(vec![3]);
                tape.constant(&b)
            };
            let y = tape.conv2d(xv, wv, bv, 1, 1).unwrap();
            let r = tape.relu(y);
            let s = tape.mean(r);
            tape.backward(s).unwrap();
            (tape.data(r).to_vec(), tape.grad_data(xv).unwrap().to_vec())
        };
        let (y1, g1) = run();
        let (y2, g2) = run();
        assert_eq!(y1, y2);
        assert_eq!(g1, g2);
    }
}
