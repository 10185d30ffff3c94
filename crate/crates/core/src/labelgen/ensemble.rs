use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Polarity, ScoreTable, ScorerDescriptor};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quality::QualityLadder;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelGenConfig {
    /// Ladders whose score range is below this are treated as degenerate.
    pub eps_deg: f64,
    /// Value PSNR reports for identical images.
    pub psnr_cap: f64,
}

impl Default for LabelGenConfig {
    fn default() -> Self {
        LabelGenConfig {
            eps_deg: 1e-9,
            psnr_cap: 100.0,
        }
    }
}

/// Labels keyed by `(ladder_id, rung_index)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyLabelSet {
    pub labels: BTreeMap<(String, u32), f64>,
    pub scorer_ids: Vec<String>,
}

impl ProxyLabelSet {
    pub fn ladder_values(&self, ladder: &QualityLadder) -> Option<Vec<f64>> {
        ladder
            .rung_indices()
            .map(|r| self.labels.get(&(ladder.ladder_id.clone(), r)).copied())
            .collect()
    }
}

pub fn canonicalize_polarity(scores: &[f64], polarity: Polarity) -> Vec<f64> {
    match polarity {
        Polarity::HigherBetter => scores.to_vec(),
        Polarity::LowerBetter => scores.iter().map(|s| 1.0 - s).collect(),
    }
}

/// Min-max normalization over one ladder. A ladder whose range is below
/// `eps_deg` maps to 1.0 everywhere: the scorer saw no degradation.
pub fn normalize_over_ladder(scores: &[f64], eps_deg: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = hi - lo;
    if range < eps_deg {
        return Ok(vec![1.0; scores.len()]);
    }
    Ok(scores.iter().map(|s| (s - lo) / range).collect())
}

/// Ensemble-averaged normalized score for every rung of `ladder`, in rung order.
pub fn proxy_sur(
    table: &ScoreTable,
    scorers: &[ScorerDescriptor],
    ladder: &QualityLadder,
    config: &LabelGenConfig,
) -> Result<Vec<f64>> {
    if scorers.is_empty() {
        return Err(Error::NoScorers);
    }
    let mut acc = vec![0.0; ladder.len()];
    for scorer in scorers {
        let raw = table.ladder_scores(ladder, &scorer.scorer_id)?;
        let canon = canonicalize_polarity(&raw, scorer.polarity);
        let norm = normalize_over_ladder(&canon, config.eps_deg)?;
        for (a, n) in acc.iter_mut().zip(norm) {
            *a += n;
        }
    }
    let n = scorers.len() as f64;
    Ok(acc.into_iter().map(|v| (v / n).clamp(0.0, 1.0)).collect())
}

/// [`proxy_sur`] over many ladders, evaluated ladder-parallel.
pub fn proxy_sur_all(
    table: &ScoreTable,
    scorers: &[ScorerDescriptor],
    ladders: &[QualityLadder],
    config: &LabelGenConfig,
    exec: Exec,
) -> Result<ProxyLabelSet> {
    let per_ladder = exec.map(ladders, |l| proxy_sur(table, scorers, l, config));
    let mut labels = BTreeMap::new();
    for (ladder, values) in ladders.iter().zip(per_ladder) {
        for (rung, v) in ladder.rung_indices().zip(values?) {
            labels.insert((ladder.ladder_id.clone(), rung), v);
        }
    }
    Ok(ProxyLabelSet {
        labels,
        scorer_ids: scorers.iter().map(|s| s.scorer_id.clone()).collect(),
    })
}

/// A scorer that rates a heavier-compressed rung above a lighter one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub ladder_id: String,
    pub scorer_id: String,
    /// Number of adjacent rung pairs whose canonical score increases.
    pub violations: usize,
    pub pairs: usize,
}

pub fn monotonicity_report(
    table: &ScoreTable,
    scorers: &[ScorerDescriptor],
    ladders: &[QualityLadder],
) -> Result<Vec<MonotonicityViolation>> {
    let mut out = Vec::new();
    for ladder in ladders {
        for scorer in scorers {
            let canon = canonicalize_polarity(
                &table.ladder_scores(ladder, &scorer.scorer_id)?,
                scorer.polarity,
            );
            let violations = canon.windows(2).filter(|w| w[1] > w[0]).count();
            out.push(MonotonicityViolation {
                ladder_id: ladder.ladder_id.clone(),
                scorer_id: scorer.scorer_id.clone(),
                violations,
                pairs: canon.len().saturating_sub(1),
            });
        }
    }
    Ok(out)
}
