//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] borrows the parameter store for one forward pass. Parameter
//! leaves are never copied; their gradients are collected into a [`Grads`]
//! vector aligned with the store.

use crate::model::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Abs(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    SoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    Resize { x: Var, plan: Box<ResizePlan> },
    Concat0(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var),
    BroadcastRows(Var),
    Sum(Var),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients for every parameter of a store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Tensor>);

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads(store.tensors().iter().map(|t| Tensor::zeros(&t.shape)).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.index()]
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.tensor(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.value(v).shape
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Input,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let out = matmul_raw(&self.value(a).data, &self.value(b).data, m, k, n);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "elementwise shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (_, n) = self.value(x).dims2();
        let tb = self.value(bias);
        assert_eq!(tb.numel(), n, "bias width");
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(&tb.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x, bias), &[x, bias])
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape.clone(), t.data.iter().map(|v| f(*v)).collect());
        self.push(out, op, &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, Op::Gelu(x), gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), f64::abs)
    }

    /// Normalizes each row of an `[m, n]` matrix, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (_, n) = self.value(x).dims2();
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        assert_eq!(g.len(), n);
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(n) {
            let (mean, inv) = row_stats(row, eps);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * g[j] + b[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, eps }, &[x, gamma, beta])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (_, n) = self.value(x).dims2();
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        self.push(out, Op::SoftmaxRows(x), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (m, n) = t.dims2();
        let out = transpose_raw(&t.data, m, n);
        self.push(Tensor::new(vec![n, m], out), Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshaped(shape.to_vec());
        self.push(out, Op::Reshape(x), &[x])
    }

    /// `[C, H, W]` map to `[H*W, C]` tokens.
    pub fn to_tokens(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let flat = self.reshape(x, &[c, h * w]);
        self.transpose(flat)
    }

    /// `[H*W, C]` tokens back to a `[C, H, W]` map.
    pub fn to_map(&mut self, x: Var, h: usize, w: usize) -> Var {
        let (n, c) = self.value(x).dims2();
        assert_eq!(n, h * w);
        let t = self.transpose(x);
        self.reshape(t, &[c, h, w])
    }

    /// Grouped 2-D convolution of a `[C_in, H, W]` map with weights
    /// `[C_out, C_in / groups, k, k]` and bias `[C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), geom);
        self.push(out, Op::Conv2d { x, w, b, geom }, &[x, w, b])
    }

    /// Bilinear resize of a `[C, H, W]` map (half-pixel centres, edge clamp).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let plan = ResizePlan::new(h, w, out_h, out_w);
        let mut out = vec![0.0; c * out_h * out_w];
        let src = &self.value(x).data;
        for ch in 0..c {
            let s = &src[ch * h * w..(ch + 1) * h * w];
            let d = &mut out[ch * out_h * out_w..(ch + 1) * out_h * out_w];
            plan.apply(s, d);
        }
        let value = Tensor::new(vec![c, out_h, out_w], out);
        self.push(value, Op::Resize { x, plan: Box::new(plan) }, &[x])
    }

    /// Concatenates along the leading axis; trailing dims must agree.
    pub fn concat0(&mut self, parts: &[Var]) -> Var {
        let first = self.value(parts[0]).shape.clone();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.shape[1..], first[1..], "concat0 trailing dims");
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = first;
        shape[0] = lead;
        self.push(Tensor::new(shape, data), Op::Concat0(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let (m, _) = self.value(parts[0]).dims2();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).dims2().1).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            assert_eq!(t.dims2().0, m, "concat_cols row count");
            for r in 0..m {
                data[r * total + off..r * total + off + w].copy_from_slice(&t.data[r * w..(r + 1) * w]);
            }
            off += w;
        }
        self.push(Tensor::new(vec![m, total], data), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let t = self.value(x);
        let (_, n) = t.dims2();
        let out = Tensor::new(vec![end - start, n], t.data[start * n..end * n].to_vec());
        self.push(out, Op::SliceRows(x, start), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let t = self.value(x);
        let (m, n) = t.dims2();
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&t.data[r * n + start..r * n + end]);
        }
        self.push(Tensor::new(vec![m, w], data), Op::SliceCols(x, start), &[x])
    }

    /// Column means of an `[m, n]` matrix as a `[1, n]` row.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (m, n) = t.dims2();
        let mut out = vec![0.0; n];
        for row in t.data.chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        self.push(Tensor::new(vec![1, n], out), Op::MeanRows(x), &[x])
    }

    /// Repeats a `[1, n]` row `m` times.
    pub fn broadcast_rows(&mut self, x: Var, m: usize) -> Var {
        let t = self.value(x);
        let (one, n) = t.dims2();
        assert_eq!(one, 1);
        let data = t.data.iter().copied().cycle().take(m * n).collect();
        self.push(Tensor::new(vec![m, n], data), Op::BroadcastRows(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse pass from a single-element output. Returns parameter
    /// gradients aligned with the store.
    pub fn backward(&self, output: Var) -> Grads {
        assert_eq!(self.value(output).numel(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::full(&self.value(output).shape, 1.0));
        let mut out = Grads::zeros_like(self.store);
        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &node.op, gy, &mut grads, &mut out);
        }
        out
    }

    fn propagate(
        &self,
        idx: usize,
        op: &Op,
        gy: Tensor,
        grads: &mut [Option<Tensor>],
        params: &mut Grads,
    ) {
        let mut acc = |v: Var, g: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        let y = || self.nodes[idx].value.as_ref().expect("op value");
        match op {
            Op::Input => {}
            Op::Param(id) => params.0[id.index()].add_assign(&gy),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.dims2().1;
                let bt = transpose_raw(&tb.data, k, n);
                let ga = matmul_raw(&gy.data, &bt, m, n, k);
                let at = transpose_raw(&ta.data, m, k);
                let gb = matmul_raw(&at, &gy.data, k, m, n);
                acc(*a, Tensor::new(vec![m, k], ga));
                acc(*b, Tensor::new(vec![k, n], gb));
            }
            Op::Add(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy);
            }
            Op::Sub(a, b) => {
                let mut neg = gy.clone();
                neg.scale(-1.0);
                acc(*a, gy);
                acc(*b, neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = gy.data.iter().zip(&tb.data).map(|(g, v)| g * v).collect();
                let gb = gy.data.iter().zip(&ta.data).map(|(g, v)| g * v).collect();
                acc(*a, Tensor::new(ta.shape.clone(), ga));
                acc(*b, Tensor::new(tb.shape.clone(), gb));
            }
            Op::AddRow(x, bias) => {
                let tb = self.value(*bias);
                let n = tb.numel();
                let mut gb = vec![0.0; n];
                for row in gy.data.chunks(n) {
                    for (o, g) in gb.iter_mut().zip(row) {
                        *o += g;
                    }
                }
                acc(*bias, Tensor::new(tb.shape.clone(), gb));
                acc(*x, gy);
            }
            Op::Scale(x, s) => {
                let mut g = gy;
                g.scale(*s);
                acc(*x, g);
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let g = gy.data.iter().zip(&tx.data).map(|(g, v)| g * gelu_grad(*v)).collect();
                acc(*x, Tensor::new(tx.shape.clone(), g));
            }
            Op::Sigmoid(x) => {
                let g = gy.data.iter().zip(&y().data).map(|(g, s)| g * s * (1.0 - s)).collect();
                acc(*x, Tensor::new(gy.shape.clone(), g));
            }
            Op::Abs(x) => {
                let tx = self.value(*x);
                let g = gy
                    .data
                    .iter()
                    .zip(&tx.data)
                    .map(|(g, v)| if *v > 0.0 { *g } else if *v < 0.0 { -g } else { 0.0 })
                    .collect();
                acc(*x, Tensor::new(tx.shape.clone(), g));
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let tx = self.value(*x);
                let g = &self.value(*gamma).data;
                let (_, n) = tx.dims2();
                let mut gx = vec![0.0; tx.numel()];
                let mut gg = vec![0.0; n];
                let mut gbeta = vec![0.0; n];
                let mut xhat = vec![0.0; n];
                let mut dxhat = vec![0.0; n];
                for (r, row) in tx.data.chunks(n).enumerate() {
                    let (mean, inv) = row_stats(row, *eps);
                    let grow = &gy.data[r * n..(r + 1) * n];
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for j in 0..n {
                        xhat[j] = (row[j] - mean) * inv;
                        gg[j] += grow[j] * xhat[j];
                        gbeta[j] += grow[j];
                        dxhat[j] = grow[j] * g[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * xhat[j];
                    }
                    let nf = n as f64;
                    for j in 0..n {
                        gx[r * n + j] = inv / nf * (nf * dxhat[j] - s1 - xhat[j] * s2);
                    }
                }
                acc(*x, Tensor::new(tx.shape.clone(), gx));
                acc(*gamma, Tensor::new(self.value(*gamma).shape.clone(), gg));
                acc(*beta, Tensor::new(self.value(*beta).shape.clone(), gbeta));
            }
            Op::SoftmaxRows(x) => {
                let ty = y();
                let (_, n) = ty.dims2();
                let mut gx = vec![0.0; ty.numel()];
                for (r, (yr, gr)) in ty.data.chunks(n).zip(gy.data.chunks(n)).enumerate() {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*x, Tensor::new(ty.shape.clone(), gx));
            }
            Op::Transpose(x) => {
                let (m, n) = gy.dims2();
                let g = transpose_raw(&gy.data, m, n);
                acc(*x, Tensor::new(vec![n, m], g));
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape.clone();
                acc(*x, gy.reshaped(shape));
            }
            Op::Conv2d { x, w, b, geom } => {
                let (gx, gw, gb) =
                    conv2d_backward(self.value(*x), self.value(*w), &gy, *geom);
                acc(*x, gx);
                acc(*w, gw);
                acc(*b, gb);
            }
            Op::Resize { x, plan } => {
                let (c, h, w) = self.value(*x).dims3();
                let (oh, ow) = (plan.out_h(), plan.out_w());
                let mut gx = vec![0.0; c * h * w];
                for ch in 0..c {
                    plan.apply_transpose(
                        &gy.data[ch * oh * ow..(ch + 1) * oh * ow],
                        &mut gx[ch * h * w..(ch + 1) * h * w],
                    );
                }
                acc(*x, Tensor::new(vec![c, h, w], gx));
            }
            Op::Concat0(parts) => {
                let mut off = 0;
                for &p in parts {
                    let t = self.value(p);
                    let len = t.numel();
                    acc(p, Tensor::new(t.shape.clone(), gy.data[off..off + len].to_vec()));
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = gy.dims2();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    let mut g = Vec::with_capacity(m * w);
                    for r in 0..m {
                        g.extend_from_slice(&gy.data[r * total + off..r * total + off + w]);
                    }
                    acc(p, Tensor::new(vec![m, w], g));
                    off += w;
                }
            }
            Op::SliceRows(x, start) => {
                let tx = self.value(*x);
                let (_, n) = tx.dims2();
                let mut g = Tensor::zeros(&tx.shape);
                g.data[start * n..start * n + gy.numel()].copy_from_slice(&gy.data);
                acc(*x, g);
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (m, n) = tx.dims2();
                let w = gy.dims2().1;
                let mut g = Tensor::zeros(&tx.shape);
                for r in 0..m {
                    g.data[r * n + start..r * n + start + w]
                        .copy_from_slice(&gy.data[r * w..(r + 1) * w]);
                }
                acc(*x, g);
            }
            Op::MeanRows(x) => {
                let (m, n) = self.value(*x).dims2();
                let inv = 1.0 / m as f64;
                let data = (0..m * n).map(|i| gy.data[i % n] * inv).collect();
                acc(*x, Tensor::new(vec![m, n], data));
            }
            Op::BroadcastRows(x) => {
                let n = gy.dims2().1;
                let mut g = vec![0.0; n];
                for row in gy.data.chunks(n) {
                    for (o, v) in g.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                acc(*x, Tensor::new(vec![1, n], g));
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape.clone();
                acc(*x, Tensor::full(&shape, gy.data[0]));
            }
        }
    }
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

pub fn conv_out_len(len: usize, k: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - k) / stride + 1
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, geom: ConvGeom) -> Tensor {
    let (cin, h, wd) = x.dims3();
    let (cout, cin_g, k) = (w.shape[0], w.shape[1], w.shape[2]);
    let groups = geom.groups;
    assert_eq!(cin, cin_g * groups, "conv input channels");
    assert_eq!(cout % groups, 0, "conv output channels");
    let cout_g = cout / groups;
    let oh = conv_out_len(h, k, geom.stride, geom.padding);
    let ow = conv_out_len(wd, k, geom.stride, geom.padding);
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        let g = o / cout_g;
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b.data[o]);
        for ci in 0..cin_g {
            let c = g * cin_g + ci;
            let xin = &x.data[c * h * wd..(c + 1) * h * wd];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w.data[((o * cin_g + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = &xin[iy as usize * wd..(iy as usize + 1) * wd];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                            if ix >= 0 && ix < wd as isize {
                                *ov += wv * xrow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, oh, ow], out)
}

#[allow(clippy::needless_range_loop)]
fn conv2d_backward(x: &Tensor, w: &Tensor, gy: &Tensor, geom: ConvGeom) -> (Tensor, Tensor, Tensor) {
    let (_, h, wd) = x.dims3();
    let (cout, cin_g, k) = (w.shape[0], w.shape[1], w.shape[2]);
    let cout_g = cout / geom.groups;
    let (_, oh, ow) = gy.dims3();
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; cout];
    for o in 0..cout {
        let g = o / cout_g;
        let gplane = &gy.data[o * oh * ow..(o + 1) * oh * ow];
        gb[o] = gplane.iter().sum();
        for ci in 0..cin_g {
            let c = g * cin_g + ci;
            let base = c * h * wd;
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * cin_g + ci) * k + ky) * k + kx;
                    let wv = w.data[widx];
                    let mut gw_acc = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = base + iy as usize * wd;
                        for ox in 0..ow {
                            let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let gv = gplane[oy * ow + ox];
                            gw_acc += gv * x.data[row + ix as usize];
                            gx[row + ix as usize] += gv * wv;
                        }
                    }
                    gw[widx] += gw_acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape.clone(), gx),
        Tensor::new(w.shape.clone(), gw),
        Tensor::new(vec![cout], gb),
    )
}

/// Per-axis source taps for bilinear resampling.
#[derive(Debug, Clone)]
pub struct ResizePlan {
    in_w: usize,
    ys: Vec<(usize, usize, f64)>,
    xs: Vec<(usize, usize, f64)>,
}

fn axis_taps(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len_in - 1);
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

impl ResizePlan {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        ResizePlan {
            in_w,
            ys: axis_taps(in_h, out_h),
            xs: axis_taps(in_w, out_w),
        }
    }

    fn out_h(&self) -> usize {
        self.ys.len()
    }

    fn out_w(&self) -> usize {
        self.xs.len()
    }

    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let ow = self.xs.len();
        for (oy, &(y0, y1, ly)) in self.ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in self.xs.iter().enumerate() {
                let at = |y: usize, x: usize| src[y * self.in_w + x];
                dst[oy * ow + ox] = (1.0 - ly) * ((1.0 - lx) * at(y0, x0) + lx * at(y0, x1))
                    + ly * ((1.0 - lx) * at(y1, x0) + lx * at(y1, x1));
            }
        }
    }

    fn apply_transpose(&self, gdst: &[f64], gsrc: &mut [f64]) {
        let ow = self.xs.len();
        for (oy, &(y0, y1, ly)) in self.ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in self.xs.iter().enumerate() {
                let g = gdst[oy * ow + ox];
                gsrc[y0 * self.in_w + x0] += g * (1.0 - ly) * (1.0 - lx);
                gsrc[y0 * self.in_w + x1] += g * (1.0 - ly) * lx;
                gsrc[y1 * self.in_w + x0] += g * ly * (1.0 - lx);
                gsrc[y1 * self.in_w + x1] += g * ly * lx;
            }
        }
    }
}
