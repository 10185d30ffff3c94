//! TOML run configuration. Every section and key is optional; omitted values
//! take their documented defaults. The path comes from `--config` or, failing
//! that, the `SURSMR_CONFIG` environment variable.
//!
//! ```toml
//! [model]              # ModelConfig: variant, norm_eps
//! [model.backbone]     # stage_channels, stage_depths, input_size, head_dim, ...
//! [model.mhaap]        # target_spatial, queries, heads, out_channels
//! [model.mixer]        # layers, token_hidden, channel_hidden
//! [model.transformer]  # layers, heads, mlp_ratio
//! [train]              # learning_rate, batch_size, max_steps, max_epochs, patience,
//!                      # eval_every, hflip, vflip, seed, workers, freeze_backbone, precision
//! [train.loss]         # alpha, beta, sur_mask, smr_mask
//! [train.adam]         # beta1, beta2, eps
//! [split]              # seed, train, val, test
//! [labelgen]           # eps_deg, psnr_cap
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgen::LabelGenConfig;
use crate::model::ModelConfig;
use crate::train::{SplitSpec, TrainConfig};

pub const CONFIG_ENV: &str = "SURSMR_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub labelgen: LabelGenConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(origin, line, e.message().to_string())
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }
}

/// Resolves the config path (explicit flag first, then the environment) and
/// loads it; without either, defaults are used.
pub fn load_run_config(explicit: Option<&Path>) -> Result<(RunConfig, Option<PathBuf>)> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    match path {
        Some(p) => Ok((RunConfig::read(&p)?, Some(p))),
        None => Ok((RunConfig::default(), None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let mut cfg = RunConfig {
            model: ModelConfig::tiny(),
            ..Default::default()
        };
        cfg.train.max_epochs = Some(3);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text, Path::new("x.toml")).unwrap(), cfg);
    }

    #[test]
    fn partial_and_unknown_keys() {
        let cfg = RunConfig::from_toml("[train]\nlearning_rate = 0.001\n[train.loss]\nsmr_mask = false\n", Path::new("x")).unwrap();
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert!(!cfg.train.loss.smr_mask && cfg.train.loss.sur_mask);
        assert_eq!(cfg.model, ModelConfig::default());
        let err = RunConfig::from_toml("[train]\nbogus = 1\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
