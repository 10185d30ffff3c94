use super::params::{Init, ParamId, ParamStore};
use crate::autograd::{ConvGeom, Graph, Var};
use crate::tensor::Tensor;

/// `y = x W + b` on `[n, in]` rows; weights stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let weight = store.add(format!("{name}.weight"), init.uniform_fan_in(&[fan_in, fan_out], fan_in));
        let bias = bias.then(|| store.add(format!("{name}.bias"), init.uniform_fan_in(&[fan_out], fan_in)));
        Linear { weight, bias }
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[fan_in, fan_out]));
        let bias = Some(store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out])));
        Linear { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Row-wise layer normalization with affine parameters.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, eps: f64) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.weight"), Tensor::full(&[width], 1.0)),
            beta: store.add(format!("{name}.bias"), Tensor::zeros(&[width])),
            eps,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, self.eps)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Self {
        let cin_g = cin / groups;
        let fan_in = cin_g * kernel * kernel;
        Conv2d {
            weight: store.add(
                format!("{name}.weight"),
                init.uniform_fan_in(&[cout, cin_g, kernel, kernel], fan_in),
            ),
            bias: store.add(format!("{name}.bias"), init.uniform_fan_in(&[cout], fan_in)),
            geom: ConvGeom {
                stride,
                padding,
                groups,
            },
        }
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, cin: usize, cout: usize, kernel: usize, padding: usize) -> Self {
        Conv2d {
            weight: store.add(format!("{name}.weight"), Tensor::zeros(&[cout, cin, kernel, kernel])),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[cout])),
            geom: ConvGeom {
                stride: 1,
                padding,
                groups: 1,
            },
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.conv2d(x, w, b, self.geom)
    }
}

/// Two affine layers with GELU between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, width: usize, hidden: usize, out: usize) -> Self {
        Mlp {
            fc1: Linear::new(store, init, &format!("{name}.fc1"), width, hidden, true),
            fc2: Linear::new(store, init, &format!("{name}.fc2"), hidden, out, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.fc1.forward(g, x);
        let h = g.gelu(h);
        self.fc2.forward(g, h)
    }
}

/// Multi-head scaled dot-product attention of `[n, width]` tokens.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, width: usize, heads: usize, qkv_bias: bool) -> Self {
        SelfAttention {
            query: Linear::new(store, init, &format!("{name}.query"), width, width, qkv_bias),
            key: Linear::new(store, init, &format!("{name}.key"), width, width, qkv_bias),
            value: Linear::new(store, init, &format!("{name}.value"), width, width, qkv_bias),
            proj: Linear::new(store, init, &format!("{name}.proj"), width, width, true),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, x);
        let v = self.value.forward(g, x);
        let (out, _) = multi_head_attention(g, q, k, v, self.heads);
        self.proj.forward(g, out)
    }
}

/// `softmax(Q_i K_iᵀ / sqrt(d)) V_i` per head, concatenated over heads.
/// Also returns each head's attention matrix.
pub fn multi_head_attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> (Var, Vec<Var>) {
    let width = g.shape(q)[1];
    let d = width / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (s, e) = (h * d, (h + 1) * d);
        let qh = g.slice_cols(q, s, e);
        let kh = g.slice_cols(k, s, e);
        let vh = g.slice_cols(v, s, e);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scores = g.scale(scores, scale);
        let attn = g.softmax_rows(scores);
        weights.push(attn);
        outs.push(g.matmul(attn, vh));
    }
    let out = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    (out, weights)
}
