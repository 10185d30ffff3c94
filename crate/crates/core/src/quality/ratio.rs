use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{QualityLadder, RatioKind, SatisfactionRecord};
use crate::error::{Error, Result};

/// Exact satisfied/total count; materialized to a real on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatioCount {
    pub satisfied: usize,
    pub total: usize,
}

impl RatioCount {
    pub fn ratio(self) -> f64 {
        self.satisfied as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub ladder_id: String,
    pub kind: RatioKind,
    /// One entry per rung, ordered by rung index.
    pub values: Vec<(u32, RatioCount)>,
    pub population_size: usize,
}

impl RatioCurve {
    pub fn ratios(&self) -> Vec<f64> {
        self.values.iter().map(|(_, c)| c.ratio()).collect()
    }

    pub fn ratio_at(&self, rung_index: u32) -> Option<f64> {
        self.values
            .iter()
            .find(|(r, _)| *r == rung_index)
            .map(|(_, c)| c.ratio())
    }
}

/// Fraction of subjects satisfied with one rung.
///
/// All records must share ladder, rung and subject kind, with at most one
/// record per subject.
pub fn satisfaction_ratio(records: &[SatisfactionRecord]) -> Result<RatioCount> {
    let first = records.first().ok_or(Error::EmptyPopulation)?;
    let mut seen = HashSet::with_capacity(records.len());
    let mut satisfied = 0;
    for rec in records {
        if rec.subject_kind != first.subject_kind {
            return Err(Error::MixedPopulation(format!(
                "{} and {} subjects in one population",
                first.subject_kind, rec.subject_kind
            )));
        }
        if rec.ladder_id != first.ladder_id || rec.rung_index != first.rung_index {
            return Err(Error::InvalidArgument(format!(
                "records span ({}, {}) and ({}, {})",
                first.ladder_id, first.rung_index, rec.ladder_id, rec.rung_index
            )));
        }
        if !seen.insert(rec.subject_id.as_str()) {
            return Err(Error::DuplicateEntry(format!(
                "subject {} rated ({}, {}) twice",
                rec.subject_id, rec.ladder_id, rec.rung_index
            )));
        }
        satisfied += rec.satisfied as usize;
    }
    Ok(RatioCount {
        satisfied,
        total: records.len(),
    })
}

/// Per-rung ratio curve of one ladder.
///
/// Records of other ladders are ignored. Records of the other subject kind are
/// ignored too, unless the ladder has no records of the requested kind at all,
/// which is reported as a mixed population. Every subject must rate every rung.
pub fn ratio_curve(
    ladder: &QualityLadder,
    records: &[SatisfactionRecord],
    kind: RatioKind,
) -> Result<RatioCurve> {
    let wanted = kind.subject_kind();
    let mut per_rung: BTreeMap<u32, Vec<SatisfactionRecord>> = BTreeMap::new();
    let mut other_kind = None;
    for rec in records.iter().filter(|r| r.ladder_id == ladder.ladder_id) {
        if rec.subject_kind != wanted {
            other_kind = Some(rec.subject_kind);
            continue;
        }
        if ladder.rung(rec.rung_index).is_none() {
            return Err(Error::InvalidArgument(format!(
                "record for ladder {} references unknown rung {}",
                ladder.ladder_id, rec.rung_index
            )));
        }
        per_rung.entry(rec.rung_index).or_default().push(rec.clone());
    }
    if per_rung.is_empty() {
        if let Some(found) = other_kind {
            return Err(Error::MixedPopulation(format!(
                "{kind} requested for ladder {} but its records are {found}",
                ladder.ladder_id
            )));
        }
    }

    let mut panel: Option<(u32, BTreeSet<&str>)> = None;
    let mut values = Vec::with_capacity(ladder.len());
    for rung_index in ladder.rung_indices() {
        let recs = per_rung.get(&rung_index).ok_or_else(|| Error::MissingRung {
            ladder: ladder.ladder_id.clone(),
            rung: rung_index,
        })?;
        let count = satisfaction_ratio(recs)?;
        let subjects: BTreeSet<&str> = recs.iter().map(|r| r.subject_id.as_str()).collect();
        match &panel {
            None => panel = Some((rung_index, subjects)),
            Some((first_rung, first)) if *first != subjects => {
                return Err(Error::RaggedPopulation(format!(
                    "ladder {}: rung {} is rated by a different subject set than rung {}",
                    ladder.ladder_id, rung_index, first_rung
                )));
            }
            Some(_) => {}
        }
        values.push((rung_index, count));
    }
    let population_size = panel.map(|(_, s)| s.len()).unwrap_or(0);
    Ok(RatioCurve {
        ladder_id: ladder.ladder_id.clone(),
        kind,
        values,
        population_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{Rung, SubjectKind};

    fn ladder(k: u32) -> QualityLadder {
        let rungs = (1..=k)
            .map(|i| Rung {
                rung_index: i,
                q_param: i as i64 * 10,
                image_ref: format!("r{i}"),
            })
            .collect();
        QualityLadder::new("L", "orig", "jpeg", rungs).unwrap()
    }

    fn rec(rung: u32, subject: &str, kind: SubjectKind, satisfied: bool) -> SatisfactionRecord {
        SatisfactionRecord {
            ladder_id: "L".into(),
            rung_index: rung,
            subject_id: subject.into(),
            subject_kind: kind,
            satisfied,
        }
    }

    fn population(n: usize, sat: usize) -> Vec<SatisfactionRecord> {
        (0..n)
            .map(|i| rec(1, &format!("s{i}"), SubjectKind::Human, i < sat))
            .collect()
    }

    #[test]
    fn spot_ratios() {
        assert_eq!(satisfaction_ratio(&population(5, 3)).unwrap().ratio(), 0.6);
        assert_eq!(satisfaction_ratio(&population(4, 4)).unwrap().ratio(), 1.0);
        assert_eq!(satisfaction_ratio(&population(10, 0)).unwrap().ratio(), 0.0);
    }

    #[test]
    fn ratio_errors() {
        assert!(matches!(satisfaction_ratio(&[]), Err(Error::EmptyPopulation)));
        let mut recs = population(2, 1);
        recs[1].subject_kind = SubjectKind::Machine;
        let err = satisfaction_ratio(&recs).unwrap_err();
        assert!(err.to_string().contains("mixed population"));
        let mut dup = population(2, 1);
        dup[1].subject_id = "s0".into();
        assert!(matches!(satisfaction_ratio(&dup), Err(Error::DuplicateEntry(_))));
    }

    #[test]
    fn two_subject_curve() {
        use SubjectKind::Human as H;
        let recs = vec![
            rec(1, "A", H, true),
            rec(2, "A", H, true),
            rec(3, "A", H, false),
            rec(1, "B", H, true),
            rec(2, "B", H, false),
            rec(3, "B", H, false),
        ];
        let curve = ratio_curve(&ladder(3), &recs, RatioKind::Sur).unwrap();
        assert_eq!(curve.ratios(), vec![1.0, 0.5, 0.0]);
        assert_eq!(curve.population_size, 2);
    }

    #[test]
    fn single_subject_and_missing_rung() {
        use SubjectKind::Human as H;
        let recs = vec![rec(1, "A", H, true), rec(2, "A", H, true)];
        let curve = ratio_curve(&ladder(2), &recs, RatioKind::Sur).unwrap();
        assert_eq!(curve.ratios(), vec![1.0, 1.0]);

        let err = ratio_curve(&ladder(2), &recs[..1], RatioKind::Sur).unwrap_err();
        assert!(matches!(err, Error::MissingRung { rung: 2, .. }), "{err}");
    }

    #[test]
    fn ragged_and_wrong_kind() {
        use SubjectKind::{Human as H, Machine as M};
        let recs = vec![rec(1, "A", H, true), rec(2, "B", H, true)];
        let err = ratio_curve(&ladder(2), &recs, RatioKind::Sur).unwrap_err();
        assert!(err.to_string().contains("ragged population"));

        let machines = vec![rec(1, "m", M, true), rec(2, "m", M, false)];
        let err = ratio_curve(&ladder(2), &machines, RatioKind::Sur).unwrap_err();
        assert!(err.to_string().contains("mixed population"));
        assert_eq!(
            ratio_curve(&ladder(2), &machines, RatioKind::Smr).unwrap().ratios(),
            vec![1.0, 0.0]
        );
    }
}
