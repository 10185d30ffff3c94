//! Four-stage MetaFormer-style extractor: separable-convolution token mixers
//! in stages 1-2, self-attention in stages 3-4. A stride-4 stem and stride-2
//! downsampling convolutions give stage `l` an `input / 2^(l+2)` grid.

use super::config::{BackboneConfig, StageMixer, STAGE_MIXERS};
use super::layers::{Conv2d, LayerNorm, Linear, Mlp, SelfAttention};
use super::params::{Init, ParamStore};
use crate::autograd::{Graph, Var};

#[derive(Debug, Clone)]
enum TokenMixer {
    SepConv {
        pw1: Linear,
        dw: Conv2d,
        pw2: Linear,
    },
    Attention(SelfAttention),
}

#[derive(Debug, Clone)]
struct Block {
    norm1: LayerNorm,
    mixer: TokenMixer,
    norm2: LayerNorm,
    mlp: Mlp,
}

#[derive(Debug, Clone)]
struct Stage {
    down: Option<(LayerNorm, Conv2d)>,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    stem: Conv2d,
    stem_norm: LayerNorm,
    stages: Vec<Stage>,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &BackboneConfig, eps: f64) -> Self {
        let c = config.stage_channels;
        let stem = Conv2d::new(store, init, "backbone.stem", 3, c[0], 7, 4, 2, 1);
        let stem_norm = LayerNorm::new(store, "backbone.stem_norm", c[0], eps);
        let mut stages = Vec::with_capacity(4);
        for l in 0..4 {
            let prefix = format!("backbone.stages.{l}");
            let down = (l > 0).then(|| {
                (
                    LayerNorm::new(store, &format!("{prefix}.down_norm"), c[l - 1], eps),
                    Conv2d::new(store, init, &format!("{prefix}.down"), c[l - 1], c[l], 3, 2, 1, 1),
                )
            });
            let blocks = (0..config.stage_depths[l])
                .map(|b| {
                    let name = format!("{prefix}.blocks.{b}");
                    let width = c[l];
                    let mixer = match STAGE_MIXERS[l] {
                        StageMixer::Conv => {
                            let hidden = width * config.conv_expansion;
                            let k = config.dw_kernel;
                            TokenMixer::SepConv {
                                pw1: Linear::new(store, init, &format!("{name}.mixer.pw1"), width, hidden, true),
                                dw: Conv2d::new(store, init, &format!("{name}.mixer.dw"), hidden, hidden, k, 1, k / 2, hidden),
                                pw2: Linear::new(store, init, &format!("{name}.mixer.pw2"), hidden, width, true),
                            }
                        }
                        StageMixer::Attention => TokenMixer::Attention(SelfAttention::new(
                            store,
                            init,
                            &format!("{name}.mixer"),
                            width,
                            config.attention_heads(l),
                            false,
                        )),
                    };
                    Block {
                        norm1: LayerNorm::new(store, &format!("{name}.norm1"), width, eps),
                        mixer,
                        norm2: LayerNorm::new(store, &format!("{name}.norm2"), width, eps),
                        mlp: Mlp::new(store, init, &format!("{name}.mlp"), width, width * config.mlp_ratio, width),
                    }
                })
                .collect();
            stages.push(Stage { down, blocks });
        }
        Backbone {
            config: config.clone(),
            stem,
            stem_norm,
            stages,
        }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Returns the four stage maps `[c_l, H_l, W_l]` for a `[3, H, W]` input.
    pub fn forward(&self, g: &mut Graph, image: Var) -> Vec<Var> {
        let x = self.stem.forward(g, image);
        let (_, mut h, mut w) = g.value(x).dims3();
        let t = g.to_tokens(x);
        let mut tokens = self.stem_norm.forward(g, t);
        let mut features = Vec::with_capacity(4);
        for stage in &self.stages {
            if let Some((norm, conv)) = &stage.down {
                let n = norm.forward(g, tokens);
                let map = g.to_map(n, h, w);
                let down = conv.forward(g, map);
                let (_, nh, nw) = g.value(down).dims3();
                h = nh;
                w = nw;
                tokens = g.to_tokens(down);
            }
            for block in &stage.blocks {
                let n = block.norm1.forward(g, tokens);
                let mixed = match &block.mixer {
                    TokenMixer::SepConv { pw1, dw, pw2 } => {
                        let e = pw1.forward(g, n);
                        let e = g.gelu(e);
                        let map = g.to_map(e, h, w);
                        let m = dw.forward(g, map);
                        let back = g.to_tokens(m);
                        pw2.forward(g, back)
                    }
                    TokenMixer::Attention(attn) => attn.forward(g, n),
                };
                tokens = g.add(tokens, mixed);
                let n = block.norm2.forward(g, tokens);
                let m = block.mlp.forward(g, n);
                tokens = g.add(tokens, m);
            }
            features.push(g.to_map(tokens, h, w));
        }
        features
    }
}
