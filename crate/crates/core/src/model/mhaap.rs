//! Multi-head attention aggregation and pooling.
//!
//! Stage maps are bilinearly resized to a common grid and concatenated on
//! channels into `N = H*W` tokens of width `C`. After per-token layer
//! normalization, keys and values are projected (`K = F W_K`, `V = F W_V`)
//! while the `Y x C` query is a free parameter. Head outputs of
//! `softmax(Q_i K_iᵀ / sqrt(C/h)) V_i` are concatenated and pooled `C -> Z`.

use super::config::MhaapConfig;
use super::layers::{multi_head_attention, LayerNorm, Linear};
use super::params::{Init, ParamId, ParamStore};
use crate::autograd::{Graph, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Mhaap {
    pub query: ParamId,
    pub norm: LayerNorm,
    pub key: Linear,
    pub value: Linear,
    pub pool: Linear,
    pub heads: usize,
    pub target: (usize, usize),
}

pub struct MhaapOutput {
    /// `[Y, Z]`
    pub pooled: Var,
    /// One `[Y, N]` row-stochastic matrix per head.
    pub attention: Vec<Var>,
}

impl Mhaap {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        config: &MhaapConfig,
        channels: usize,
        target: (usize, usize),
        eps: f64,
    ) -> Result<Self> {
        config.validate(channels)?;
        Ok(Mhaap {
            query: store.add("mhaap.query", init.normal(&[config.queries, channels], 1.0)),
            norm: LayerNorm::new(store, "mhaap.norm", channels, eps),
            key: Linear::new(store, init, "mhaap.key", channels, channels, true),
            value: Linear::new(store, init, "mhaap.value", channels, channels, true),
            pool: Linear::new(store, init, "mhaap.pool", channels, config.out_channels, true),
            heads: config.heads,
            target,
        })
    }

    /// Resizes each map to the target grid and concatenates on channels,
    /// returning `[N, C]` tokens.
    pub fn gather_tokens(g: &mut Graph, maps: &[Var], target: (usize, usize)) -> Var {
        let resized: Vec<Var> = maps
            .iter()
            .map(|&m| {
                let (_, h, w) = g.value(m).dims3();
                if (h, w) == target {
                    m
                } else {
                    g.resize_bilinear(m, target.0, target.1)
                }
            })
            .collect();
        let cat = g.concat0(&resized);
        g.to_tokens(cat)
    }

    pub fn forward(&self, g: &mut Graph, maps: &[Var]) -> MhaapOutput {
        let tokens = Self::gather_tokens(g, maps, self.target);
        self.forward_tokens(g, tokens)
    }

    pub fn forward_tokens(&self, g: &mut Graph, tokens: Var) -> MhaapOutput {
        let f = self.norm.forward(g, tokens);
        let k = self.key.forward(g, f);
        let v = self.value.forward(g, f);
        let q = g.param(self.query);
        let (attended, attention) = multi_head_attention(g, q, k, v, self.heads);
        MhaapOutput {
            pooled: self.pool.forward(g, attended),
            attention,
        }
    }
}

/// Ablation replacement: per-token `C -> Z` projection (a 1x1 convolution)
/// followed by global average pooling, broadcast to `Y` rows.
#[derive(Debug, Clone)]
pub struct GapPool {
    pub proj: Linear,
    pub queries: usize,
    pub target: (usize, usize),
}

impl GapPool {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &MhaapConfig, channels: usize, target: (usize, usize)) -> Self {
        GapPool {
            proj: Linear::new(store, init, "gap.proj", channels, config.out_channels, true),
            queries: config.queries,
            target,
        }
    }

    pub fn forward(&self, g: &mut Graph, maps: &[Var]) -> Var {
        let tokens = Mhaap::gather_tokens(g, maps, self.target);
        let p = self.proj.forward(g, tokens);
        let mean = g.mean_rows(p);
        g.broadcast_rows(mean, self.queries)
    }
}
