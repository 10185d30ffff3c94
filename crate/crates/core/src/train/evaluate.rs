use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Network;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean absolute error over `(prediction, truth)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySplit("no labelled items".into()));
    }
    Ok(neumaier_sum(pairs.iter().map(|(p, t)| (p - t).abs())) / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub ladder_id: String,
    pub rung_index: u32,
    pub sur: f64,
    pub smr: f64,
    pub target_sur: Option<f64>,
    pub target_smr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub items: usize,
    /// `None` when no item carries that label.
    pub mae_sur: Option<f64>,
    pub mae_smr: Option<f64>,
    pub predictions: Vec<PredictionRow>,
}

impl SplitMetrics {
    pub fn from_predictions(predictions: Vec<PredictionRow>) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::EmptySplit("no items to evaluate".into()));
        }
        let sur: Vec<_> = predictions.iter().filter_map(|p| p.target_sur.map(|t| (p.sur, t))).collect();
        let smr: Vec<_> = predictions.iter().filter_map(|p| p.target_smr.map(|t| (p.smr, t))).collect();
        Ok(SplitMetrics {
            items: predictions.len(),
            mae_sur: (!sur.is_empty()).then(|| mae(&sur)).transpose()?,
            mae_smr: (!smr.is_empty()).then(|| mae(&smr)).transpose()?,
            predictions,
        })
    }

    /// `MAE_sur + MAE_smr` over the selected terms that are present.
    pub fn combined(&self, sur: bool, smr: bool) -> f64 {
        let pick = |on: bool, v: Option<f64>| if on { v.unwrap_or(0.0) } else { 0.0 };
        pick(sur, self.mae_sur) + pick(smr, self.mae_smr)
    }
}

/// Predicts every rung of `data` (in dataset order) and computes the MAEs.
pub fn evaluate(net: &Network, data: &Dataset, exec: Exec) -> Result<SplitMetrics> {
    if data.is_empty() {
        return Err(Error::EmptySplit("evaluation split has no items".into()));
    }
    let rows = exec.map(data.samples(), |s| {
        net.predict(&s.original, &s.compressed).map(|p| PredictionRow {
            ladder_id: s.ladder_id.clone(),
            rung_index: s.rung_index,
            sur: p.sur,
            smr: p.smr,
            target_sur: s.target.sur,
            target_smr: s.target.smr,
        })
    });
    SplitMetrics::from_predictions(rows.into_iter().collect::<Result<_>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sur: f64, smr: f64, ts: f64, tm: f64) -> PredictionRow {
        PredictionRow {
            ladder_id: "a".into(),
            rung_index: 1,
            sur,
            smr,
            target_sur: Some(ts),
            target_smr: Some(tm),
        }
    }

    #[test]
    fn hand_cases() {
        let exact = SplitMetrics::from_predictions(vec![row(0.3, 0.4, 0.3, 0.4)]).unwrap();
        assert_eq!((exact.mae_sur, exact.mae_smr), (Some(0.0), Some(0.0)));

        let constant = SplitMetrics::from_predictions(vec![row(0.5, 0.5, 0.0, 1.0), row(0.5, 0.5, 1.0, 0.0)]).unwrap();
        assert_eq!((constant.mae_sur, constant.mae_smr), (Some(0.5), Some(0.5)));

        let two = mae(&[(0.8, 1.0), (0.2, 0.0)]).unwrap();
        assert!((two - 0.2).abs() < 1e-15);
        assert!(SplitMetrics::from_predictions(vec![]).is_err());
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
