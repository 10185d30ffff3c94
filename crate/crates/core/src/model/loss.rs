use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sur: f64,
    pub smr: f64,
}

/// Ground truth for one rung; either ratio may be absent when masked out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub sur: Option<f64>,
    pub smr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub sur_mask: bool,
    pub smr_mask: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.5,
            beta: 0.5,
            sur_mask: true,
            smr_mask: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !self.sur_mask && !self.smr_mask {
            return Err(Error::InvalidConfig("at least one of sur_mask/smr_mask must be set".into()));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-output weights and targets, zeroed where masked.
    fn resolve(&self, target: &Target) -> Result<([f64; 2], [f64; 2])> {
        self.validate()?;
        let pick = |mask: bool, value: Option<f64>, what: &str| -> Result<f64> {
            if !mask {
                return Ok(0.0);
            }
            let v = value.ok_or_else(|| Error::InvalidArgument(format!("{what} target missing")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{what} target {v} outside [0, 1]")));
            }
            Ok(v)
        };
        let t = [pick(self.sur_mask, target.sur, "SUR")?, pick(self.smr_mask, target.smr, "SMR")?];
        let w = [
            if self.sur_mask { self.alpha } else { 0.0 },
            if self.smr_mask { self.beta } else { 0.0 },
        ];
        Ok((w, t))
    }
}

/// `alpha |sur' - sur| + beta |smr' - smr|` with masked terms dropped.
pub fn joint_loss(pred: &Prediction, target: &Target, weights: &LossWeights) -> Result<f64> {
    let (w, t) = weights.resolve(target)?;
    Ok(w[0] * (pred.sur - t[0]).abs() + w[1] * (pred.smr - t[1]).abs())
}

/// Mean of [`joint_loss`] over a batch.
pub fn batch_loss(items: &[(Prediction, Target)], weights: &LossWeights) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut sum = 0.0;
    for (p, t) in items {
        sum += joint_loss(p, t, weights)?;
    }
    Ok(sum / items.len() as f64)
}

/// Differentiable [`joint_loss`] for a `[1, 2]` prediction node.
pub fn joint_loss_var(g: &mut Graph, pred: Var, target: &Target, weights: &LossWeights) -> Result<Var> {
    let (w, t) = weights.resolve(target)?;
    let tv = g.input(Tensor::new(vec![1, 2], t.to_vec()));
    let wv = g.input(Tensor::new(vec![1, 2], w.to_vec()));
    let d = g.sub(pred, tv);
    let a = g.abs(d);
    let m = g.mul(a, wv);
    Ok(g.sum(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sur: f64, smr: f64) -> Prediction {
        Prediction { sur, smr }
    }

    fn t(sur: f64, smr: f64) -> Target {
        Target {
            sur: Some(sur),
            smr: Some(smr),
        }
    }

    #[test]
    fn spot_values() {
        let w = LossWeights::default();
        assert_eq!(joint_loss(&p(0.3, 0.8), &t(0.3, 0.8), &w).unwrap(), 0.0);
        assert_eq!(joint_loss(&p(0.5, 0.5), &t(1.0, 0.0), &w).unwrap(), 0.5);
        let sur_only = LossWeights {
            smr_mask: false,
            ..w
        };
        let target = Target {
            sur: Some(0.7),
            smr: None,
        };
        let v = joint_loss(&p(0.3, 0.9), &target, &sur_only).unwrap();
        assert!((v - 0.2).abs() < 1e-15, "{v}");
    }

    #[test]
    fn both_masks_off_is_rejected() {
        let w = LossWeights {
            sur_mask: false,
            smr_mask: false,
            ..Default::default()
        };
        assert!(joint_loss(&p(0.5, 0.5), &t(0.5, 0.5), &w).is_err());
    }

    #[test]
    fn missing_or_out_of_range_target() {
        let w = LossWeights::default();
        let half = Target {
            sur: Some(0.5),
            smr: None,
        };
        assert!(joint_loss(&p(0.5, 0.5), &half, &w).is_err());
        assert!(joint_loss(&p(0.5, 0.5), &t(1.5, 0.5), &w).is_err());
    }

    #[test]
    fn batch_mean() {
        let w = LossWeights::default();
        let items = [(p(0.5, 0.5), t(1.0, 0.0)), (p(0.5, 0.5), t(0.5, 0.5))];
        assert_eq!(batch_loss(&items, &w).unwrap(), 0.25);
    }
}
