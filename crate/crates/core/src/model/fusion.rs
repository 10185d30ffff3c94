//! Fusion stages used by the architecture ablations.

use super::config::TransformerConfig;
use super::layers::{LayerNorm, Linear, Mlp, SelfAttention};
use super::params::{Init, ParamId, ParamStore};
use crate::autograd::{Graph, Var};

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: LayerNorm,
    attn: SelfAttention,
    norm2: LayerNorm,
    mlp: Mlp,
}

/// Pre-norm transformer encoder over `[T_reg; F]`; returns row 0.
#[derive(Debug, Clone)]
pub struct TransformerFusion {
    reg_token: ParamId,
    layers: Vec<EncoderLayer>,
}

impl TransformerFusion {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &TransformerConfig, width: usize, eps: f64) -> Self {
        let reg_token = store.add("transformer.reg_token", init.normal(&[1, width], 0.02));
        let layers = (0..config.layers)
            .map(|i| {
                let name = format!("transformer.layers.{i}");
                EncoderLayer {
                    norm1: LayerNorm::new(store, &format!("{name}.norm1"), width, eps),
                    attn: SelfAttention::new(store, init, &format!("{name}.attn"), width, config.heads, true),
                    norm2: LayerNorm::new(store, &format!("{name}.norm2"), width, eps),
                    mlp: Mlp::new(store, init, &format!("{name}.mlp"), width, width * config.mlp_ratio, width),
                }
            })
            .collect();
        TransformerFusion { reg_token, layers }
    }

    pub fn forward(&self, g: &mut Graph, pooled: Var) -> Var {
        let reg = g.param(self.reg_token);
        let mut x = g.concat0(&[reg, pooled]);
        for layer in &self.layers {
            let n = layer.norm1.forward(g, x);
            let a = layer.attn.forward(g, n);
            x = g.add(x, a);
            let n = layer.norm2.forward(g, x);
            let m = layer.mlp.forward(g, n);
            x = g.add(x, m);
        }
        g.slice_rows(x, 0, 1)
    }
}

/// One affine map from the flattened `Y*Z` representation back to `Z`.
#[derive(Debug, Clone)]
pub struct MlpFusion {
    fc: Linear,
}

impl MlpFusion {
    pub fn new(store: &mut ParamStore, init: &mut Init, queries: usize, width: usize) -> Self {
        MlpFusion {
            fc: Linear::new(store, init, "mlp_fusion.fc", queries * width, width, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, pooled: Var) -> Var {
        let (y, z) = g.value(pooled).dims2();
        let flat = g.reshape(pooled, &[1, y * z]);
        self.fc.forward(g, flat)
    }
}
