//! Delimited-text codecs for records, ratio curves, proxy labels,
//! predictions and split assignments.

use std::path::Path;

use super::delimited::{fmt_real, read_table, write_table};
use crate::error::{Error, Result};
use crate::labelgen::ProxyLabelSet;
use crate::quality::{RatioCurve, SatisfactionRecord, SubjectKind};
use crate::train::{PredictionRow, RungValues, Split};

pub const RECORD_COLUMNS: [&str; 5] = ["ladder_id", "rung_index", "subject_id", "subject_kind", "satisfied"];
pub const CURVE_COLUMNS: [&str; 4] = ["ladder_id", "rung_index", "ratio", "population_size"];
pub const LABEL_COLUMNS: [&str; 3] = ["ladder_id", "rung_index", "sur_hat"];
pub const PREDICTION_COLUMNS: [&str; 4] = ["ladder_id", "rung_index", "sur", "smr"];
pub const SPLIT_COLUMNS: [&str; 2] = ["ladder_id", "split"];

pub fn read_records(path: &Path) -> Result<Vec<SatisfactionRecord>> {
    let table = read_table(path, &RECORD_COLUMNS)?;
    table
        .rows()
        .map(|row| {
            Ok(SatisfactionRecord {
                ladder_id: row.nonempty(0, "ladder_id")?,
                rung_index: row.parse(1, "rung_index")?,
                subject_id: row.nonempty(2, "subject_id")?,
                subject_kind: row.parse::<SubjectKind>(3, "subject_kind")?,
                satisfied: row.flag(4, "satisfied")?,
            })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[SatisfactionRecord]) -> Result<()> {
    write_table(
        path,
        &RECORD_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.ladder_id.clone(),
                r.rung_index.to_string(),
                r.subject_id.clone(),
                r.subject_kind.to_string(),
                u8::from(r.satisfied).to_string(),
            ]
        }),
    )
}

pub fn write_curves(path: &Path, curves: &[RatioCurve]) -> Result<()> {
    let rows = curves.iter().flat_map(|c| {
        c.values.iter().map(move |(rung, count)| {
            vec![
                c.ladder_id.clone(),
                rung.to_string(),
                fmt_real(count.ratio()),
                c.population_size.to_string(),
            ]
        })
    });
    write_table(path, &CURVE_COLUMNS, rows)
}

/// Reads one real-valued column keyed by `(ladder_id, rung_index)`.
pub fn read_rung_values(path: &Path, column: &str) -> Result<RungValues> {
    let table = read_table(path, &["ladder_id", "rung_index", column])?;
    let mut out = RungValues::new();
    for row in table.rows() {
        let key = (row.nonempty(0, "ladder_id")?, row.parse::<u32>(1, "rung_index")?);
        let v = row.finite(2, column)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(row.error(format!("{column} {v} outside [0, 1]")));
        }
        if out.insert(key.clone(), v).is_some() {
            return Err(row.error(format!("duplicate entry ({}, {})", key.0, key.1)));
        }
    }
    Ok(out)
}

/// Ratio-curve file (`ratio` column).
pub fn read_curve_values(path: &Path) -> Result<RungValues> {
    read_rung_values(path, "ratio")
}

pub fn write_proxy_labels(path: &Path, labels: &ProxyLabelSet) -> Result<()> {
    write_table(
        path,
        &LABEL_COLUMNS,
        labels
            .labels
            .iter()
            .map(|((l, r), v)| vec![l.clone(), r.to_string(), fmt_real(*v)]),
    )
}

pub fn read_proxy_labels(path: &Path) -> Result<RungValues> {
    read_rung_values(path, "sur_hat")
}

/// Label file of either kind: proxy labels (`sur_hat`) or a ratio curve (`ratio`).
pub fn read_sur_like(path: &Path) -> Result<RungValues> {
    match read_proxy_labels(path) {
        Err(Error::Parse { line: 1, .. }) => read_curve_values(path),
        other => other,
    }
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    write_table(
        path,
        &PREDICTION_COLUMNS,
        rows.iter()
            .map(|p| vec![p.ladder_id.clone(), p.rung_index.to_string(), fmt_real(p.sur), fmt_real(p.smr)]),
    )
}

pub fn write_split(path: &Path, split: &Split) -> Result<()> {
    let rows = [("train", &split.train), ("val", &split.val), ("test", &split.test)]
        .into_iter()
        .flat_map(|(name, ids)| ids.iter().map(move |id| vec![id.clone(), name.to_string()]));
    write_table(path, &SPLIT_COLUMNS, rows)
}

pub fn read_split(path: &Path) -> Result<Split> {
    let table = read_table(path, &SPLIT_COLUMNS)?;
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut seen = std::collections::BTreeSet::new();
    for row in table.rows() {
        let id = row.nonempty(0, "ladder_id")?;
        if !seen.insert(id.clone()) {
            return Err(row.error(format!("ladder {id} assigned twice")));
        }
        match row.str(1) {
            "train" => split.train.push(id),
            "val" => split.val.push(id),
            "test" => split.test.push(id),
            other => return Err(row.error(format!("unknown split {other:?}"))),
        }
    }
    Ok(split)
}
