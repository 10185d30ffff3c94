use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token mixer used in each backbone stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageMixer {
    Conv,
    Attention,
}

pub const STAGE_MIXERS: [StageMixer; 4] = [
    StageMixer::Conv,
    StageMixer::Conv,
    StageMixer::Attention,
    StageMixer::Attention,
];

/// Four-stage conv/conv/attention/attention feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 4],
    pub stage_depths: [usize; 4],
    /// `(height, width)` in pixels; both multiples of 32.
    pub input_size: (usize, usize),
    /// Channel width of one attention head in the attention stages.
    pub head_dim: usize,
    pub mlp_ratio: usize,
    /// Hidden expansion of the separable-convolution mixer.
    pub conv_expansion: usize,
    pub dw_kernel: usize,
    /// Per-channel preprocessing applied to `v / 255`.
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            stage_channels: [64, 128, 320, 512],
            stage_depths: [3, 3, 9, 3],
            input_size: (224, 224),
            head_dim: 32,
            mlp_ratio: 4,
            conv_expansion: 2,
            dw_kernel: 7,
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl BackboneConfig {
    pub fn tiny() -> Self {
        BackboneConfig {
            stage_channels: [4, 8, 16, 32],
            stage_depths: [1, 1, 1, 1],
            input_size: (64, 64),
            head_dim: 16,
            ..Default::default()
        }
    }

    /// Spatial size of stage `l` (0-based): input / 2^(l+2).
    pub fn stage_spatial(&self, l: usize) -> (usize, usize) {
        let f = 1 << (l + 2);
        (self.input_size.0 / f, self.input_size.1 / f)
    }

    pub fn stage_shapes(&self) -> [(usize, usize, usize); 4] {
        std::array::from_fn(|l| {
            let (h, w) = self.stage_spatial(l);
            (self.stage_channels[l], h, w)
        })
    }

    pub fn attention_heads(&self, l: usize) -> usize {
        (self.stage_channels[l] / self.head_dim).max(1)
    }

    pub fn total_channels(&self) -> usize {
        self.stage_channels.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidConfig(format!(
                "input size {h}x{w} must be positive multiples of 32"
            )));
        }
        if self.stage_channels.contains(&0) || self.stage_depths.contains(&0) {
            return Err(Error::InvalidConfig("stage widths and depths must be positive".into()));
        }
        if self.head_dim == 0 || self.mlp_ratio == 0 || self.conv_expansion == 0 {
            return Err(Error::InvalidConfig("head_dim, mlp_ratio, conv_expansion must be positive".into()));
        }
        if self.dw_kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig("dw_kernel must be odd".into()));
        }
        for l in 2..4 {
            if !self.stage_channels[l].is_multiple_of(self.attention_heads(l)) {
                return Err(Error::InvalidConfig(format!(
                    "stage {} width {} not divisible into heads of {}",
                    l + 1,
                    self.stage_channels[l],
                    self.head_dim
                )));
            }
        }
        if self.std.iter().any(|s| *s <= 0.0) {
            return Err(Error::InvalidConfig("preprocessing std must be positive".into()));
        }
        Ok(())
    }
}

/// Attention aggregation and pooling over the concatenated stage maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhaapConfig {
    /// Interpolation target; `None` uses the stage-3 spatial size.
    pub target_spatial: Option<(usize, usize)>,
    pub queries: usize,
    pub heads: usize,
    pub out_channels: usize,
}

impl Default for MhaapConfig {
    fn default() -> Self {
        MhaapConfig {
            target_spatial: None,
            queries: 49,
            heads: 8,
            out_channels: 512,
        }
    }
}

impl MhaapConfig {
    pub fn validate(&self, concat_channels: usize) -> Result<()> {
        if self.queries == 0 || self.heads == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("queries, heads and out_channels must be positive".into()));
        }
        if !concat_channels.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "concatenated channels {concat_channels} not divisible by {} heads",
                self.heads
            )));
        }
        if self.out_channels >= concat_channels {
            return Err(Error::InvalidConfig(format!(
                "pooled width {} must be below concatenated width {concat_channels}",
                self.out_channels
            )));
        }
        if let Some((h, w)) = self.target_spatial {
            if h == 0 || w == 0 {
                return Err(Error::InvalidConfig("target_spatial must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixerConfig {
    pub layers: usize,
    /// Defaults to 4 x token count.
    pub token_hidden: Option<usize>,
    /// Defaults to 4 x channels.
    pub channel_hidden: Option<usize>,
}

impl Default for MixerConfig {
    fn default() -> Self {
        MixerConfig {
            layers: 4,
            token_hidden: None,
            channel_hidden: None,
        }
    }
}

/// Stand-in fusion stage for the transformer ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            layers: 4,
            heads: 8,
            mlp_ratio: 4,
        }
    }
}

/// Network variants: the full pipeline, its architecture ablations, and the
/// pooled-difference extractor used for proxy-label pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoDfrl,
    NoMhaap,
    TransformerFusion,
    MlpFusion,
    AllFeatures,
    PooledDiff,
}

impl Variant {
    pub const ABLATIONS: [Variant; 6] = [
        Variant::Full,
        Variant::NoDfrl,
        Variant::NoMhaap,
        Variant::TransformerFusion,
        Variant::MlpFusion,
        Variant::AllFeatures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDfrl => "no_dfrl",
            Variant::NoMhaap => "no_mhaap",
            Variant::TransformerFusion => "transformer_fusion",
            Variant::MlpFusion => "mlp_fusion",
            Variant::AllFeatures => "all_features",
            Variant::PooledDiff => "pooled_diff",
        }
    }

    pub fn uses_dfrl(self) -> bool {
        !matches!(self, Variant::NoDfrl | Variant::PooledDiff)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ABLATIONS
            .iter()
            .chain(&[Variant::PooledDiff])
            .find(|v| v.name() == s.trim())
            .copied()
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub backbone: BackboneConfig,
    pub mhaap: MhaapConfig,
    pub mixer: MixerConfig,
    pub transformer: TransformerConfig,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            backbone: BackboneConfig::default(),
            mhaap: MhaapConfig::default(),
            mixer: MixerConfig::default(),
            transformer: TransformerConfig::default(),
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 4/8/16/32 channels, 64x64 input, Y=4, h=2, Z=32.
    pub fn tiny() -> Self {
        ModelConfig {
            backbone: BackboneConfig::tiny(),
            mhaap: MhaapConfig {
                target_spatial: None,
                queries: 4,
                heads: 2,
                out_channels: 32,
            },
            transformer: TransformerConfig {
                heads: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Channel width entering the attention pooling.
    pub fn concat_channels(&self) -> usize {
        let c = self.backbone.total_channels();
        if self.variant == Variant::AllFeatures {
            3 * c
        } else {
            c
        }
    }

    pub fn mhaap_target(&self) -> (usize, usize) {
        self.mhaap
            .target_spatial
            .unwrap_or_else(|| self.backbone.stage_spatial(2))
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.norm_eps.is_nan() || self.norm_eps <= 0.0 {
            return Err(Error::InvalidConfig("norm_eps must be positive".into()));
        }
        if self.variant == Variant::PooledDiff {
            return Ok(());
        }
        self.mhaap.validate(self.concat_channels())?;
        let z = self.mhaap.out_channels;
        match self.variant {
            Variant::TransformerFusion => {
                let t = &self.transformer;
                if t.layers == 0 || t.heads == 0 || !z.is_multiple_of(t.heads) {
                    return Err(Error::InvalidConfig(format!(
                        "transformer fusion needs {} heads to divide width {z}",
                        t.heads
                    )));
                }
            }
            _ if self.mixer.layers == 0 && self.variant != Variant::MlpFusion => {
                return Err(Error::InvalidConfig("mixer needs at least one layer".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stage_shapes() {
        let b = BackboneConfig::default();
        assert_eq!(
            b.stage_shapes(),
            [(64, 56, 56), (128, 28, 28), (320, 14, 14), (512, 7, 7)]
        );
        b.validate().unwrap();
        assert_eq!(ModelConfig::default().mhaap_target(), (14, 14));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ABLATIONS {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("bogus".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn mhaap_constraints() {
        let m = MhaapConfig {
            target_spatial: None,
            queries: 2,
            heads: 3,
            out_channels: 4,
        };
        assert!(m.validate(8).is_err());
        assert!(m.validate(9).is_ok());
        assert!(m.validate(3).is_err());
        ModelConfig::tiny().validate().unwrap();
        assert_eq!(ModelConfig::tiny().with_variant(Variant::AllFeatures).concat_channels(), 180);
    }
}
