use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::delimited::{fmt_real, write_table};
use crate::error::{Error, Result};

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// SHA-256 (hex) of the compact JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub dataset: String,
    pub mae_sur: Option<f64>,
    pub mae_smr: Option<f64>,
    pub seed: u64,
    pub steps: usize,
}

pub const SUMMARY_COLUMNS: [&str; 6] = ["variant", "dataset", "mae_sur", "mae_smr", "seed", "steps"];

/// Flat summary; missing MAEs are written as empty fields.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    write_table(
        path,
        &SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.variant.clone(),
                r.dataset.clone(),
                opt(r.mae_sur),
                opt(r.mae_smr),
                r.seed.to_string(),
                r.steps.to_string(),
            ]
        }),
    )
}
