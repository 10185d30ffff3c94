use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::evaluate::evaluate;
use super::trainer::{fit, TrainConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{ModelConfig, Network, Variant};

/// Named train/val/test splits of one dataset.
pub struct DatasetSplits<'a> {
    pub name: String,
    pub train: &'a Dataset,
    pub val: Option<&'a Dataset>,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub dataset: String,
    pub mae_sur: Option<f64>,
    pub mae_smr: Option<f64>,
    pub seed: u64,
    pub steps: usize,
    /// Failure message; the remaining rows are still produced.
    pub error: Option<String>,
}

/// One train-then-evaluate run per (variant, dataset) under the shared seed in
/// `train`. Rows follow the input order, variants outermost.
pub fn run_ablation_matrix(
    variants: &[Variant],
    datasets: &[DatasetSplits<'_>],
    model: &ModelConfig,
    train: &TrainConfig,
    exec: Exec,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one variant".into()));
    }
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one dataset".into()));
    }
    let mut rows = Vec::with_capacity(variants.len() * datasets.len());
    for &variant in variants {
        for ds in datasets {
            let run = || -> Result<(Option<f64>, Option<f64>, usize)> {
                let net = Network::new(model.clone().with_variant(variant), train.seed)?;
                let outcome = fit(&net, ds.train, ds.val, train, exec)?;
                let best = Network::with_params(net.config().clone(), outcome.best)?;
                let m = evaluate(&best, ds.test, exec)?;
                Ok((m.mae_sur, m.mae_smr, outcome.steps))
            };
            let row = match run() {
                Ok((mae_sur, mae_smr, steps)) => AblationRow {
                    variant,
                    dataset: ds.name.clone(),
                    mae_sur,
                    mae_smr,
                    seed: train.seed,
                    steps,
                    error: None,
                },
                Err(e) => AblationRow {
                    variant,
                    dataset: ds.name.clone(),
                    mae_sur: None,
                    mae_smr: None,
                    seed: train.seed,
                    steps: 0,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}
