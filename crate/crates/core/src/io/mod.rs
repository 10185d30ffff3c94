//! File formats: delimited tables, manifests, checkpoints, run configs and
//! reports. Every writer emits UTF-8 with LF line endings and a trailing
//! newline.

pub mod checkpoint;
pub mod delimited;
pub mod manifest;
pub mod report;
pub mod runconfig;
pub mod tables;

pub use manifest::{manifest_base, read_manifest, write_manifest, Manifest};
pub use runconfig::{load_run_config, RunConfig, CONFIG_ENV};
