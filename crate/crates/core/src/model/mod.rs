//! Two-output SUR/SMR regressor and its building blocks.

pub mod backbone;
pub mod config;
pub mod dfrl;
pub mod fusion;
pub mod head;
pub mod layers;
pub mod loss;
pub mod mhaap;
pub mod mixer;
pub mod network;
pub mod params;

pub use config::{BackboneConfig, MhaapConfig, MixerConfig, ModelConfig, TransformerConfig, Variant};
pub use loss::{batch_loss, joint_loss, LossWeights, Prediction, Target};
pub use network::{diff_features, DiffFeatures, FeaturePyramid, Network, Trace};
pub use params::{Init, ParamId, ParamStore};
