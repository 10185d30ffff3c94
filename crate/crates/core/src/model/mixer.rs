//! Regression-token MLP-Mixer fusion.
//!
//! `S = [T_reg; F]` has `Y + 1` rows of width `Z`. Each block applies
//! `U = S + (W2 GELU(W1 LN(S)ᵀ))ᵀ` across tokens and then
//! `V = U + W4 GELU(W3 LN(U))` across channels. The fused output is the
//! regression token's final row.

use super::config::MixerConfig;
use super::layers::{LayerNorm, Mlp};
use super::params::{Init, ParamId, ParamStore};
use crate::autograd::{Graph, Var};

#[derive(Debug, Clone)]
pub struct MixerBlock {
    pub token_norm: LayerNorm,
    pub token_mlp: Mlp,
    pub channel_norm: LayerNorm,
    pub channel_mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct Mixer {
    pub reg_token: ParamId,
    pub blocks: Vec<MixerBlock>,
}

impl Mixer {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &MixerConfig, queries: usize, width: usize, eps: f64) -> Self {
        let tokens = queries + 1;
        let token_hidden = config.token_hidden.unwrap_or(4 * tokens);
        let channel_hidden = config.channel_hidden.unwrap_or(4 * width);
        let reg_token = store.add("mixer.reg_token", init.normal(&[1, width], 0.02));
        let blocks = (0..config.layers)
            .map(|i| {
                let name = format!("mixer.blocks.{i}");
                MixerBlock {
                    token_norm: LayerNorm::new(store, &format!("{name}.token_norm"), width, eps),
                    token_mlp: Mlp::new(store, init, &format!("{name}.token_mlp"), tokens, token_hidden, tokens),
                    channel_norm: LayerNorm::new(store, &format!("{name}.channel_norm"), width, eps),
                    channel_mlp: Mlp::new(store, init, &format!("{name}.channel_mlp"), width, channel_hidden, width),
                }
            })
            .collect();
        Mixer { reg_token, blocks }
    }

    /// `pooled` is `[Y, Z]`; returns the `[1, Z]` regression token.
    pub fn forward(&self, g: &mut Graph, pooled: Var) -> Var {
        let reg = g.param(self.reg_token);
        let mut s = g.concat0(&[reg, pooled]);
        for block in &self.blocks {
            let n = block.token_norm.forward(g, s);
            let nt = g.transpose(n);
            let mixed = block.token_mlp.forward(g, nt);
            let back = g.transpose(mixed);
            let u = g.add(s, back);
            let n = block.channel_norm.forward(g, u);
            let c = block.channel_mlp.forward(g, n);
            s = g.add(u, c);
        }
        g.slice_rows(s, 0, 1)
    }
}
