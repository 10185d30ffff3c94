use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::delimited::{fmt_real, read_table, write_table};
use crate::quality::QualityLadder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::HigherBetter => "higher_better",
            Polarity::LowerBetter => "lower_better",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "higher_better" => Ok(Polarity::HigherBetter),
            "lower_better" => Ok(Polarity::LowerBetter),
            other => Err(Error::InvalidArgument(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerOrigin {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerDescriptor {
    pub scorer_id: String,
    pub polarity: Polarity,
    pub origin: ScorerOrigin,
}

/// Raw scores keyed by `(ladder_id, rung_index, scorer_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<(String, u32, String), f64>,
    polarities: BTreeMap<String, Polarity>,
    origins: BTreeMap<String, ScorerOrigin>,
}

impl ScoreTable {
    pub fn insert(
        &mut self,
        ladder_id: &str,
        rung_index: u32,
        scorer_id: &str,
        score: f64,
        polarity: Polarity,
    ) -> Result<()> {
        self.insert_with_origin(ladder_id, rung_index, scorer_id, score, polarity, ScorerOrigin::External)
    }

    pub fn insert_with_origin(
        &mut self,
        ladder_id: &str,
        rung_index: u32,
        scorer_id: &str,
        score: f64,
        polarity: Polarity,
        origin: ScorerOrigin,
    ) -> Result<()> {
        match self.polarities.get(scorer_id) {
            Some(p) if *p != polarity => {
                return Err(Error::InvalidArgument(format!(
                    "scorer {scorer_id} declared both {p} and {polarity}"
                )))
            }
            Some(_) => {}
            None => {
                self.polarities.insert(scorer_id.to_string(), polarity);
                self.origins.insert(scorer_id.to_string(), origin);
            }
        }
        let key = (ladder_id.to_string(), rung_index, scorer_id.to_string());
        if self.entries.insert(key, score).is_some() {
            return Err(Error::DuplicateEntry(format!(
                "({ladder_id}, {rung_index}, {scorer_id})"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ladder_id: &str, rung_index: u32, scorer_id: &str) -> Option<f64> {
        self.entries
            .get(&(ladder_id.to_string(), rung_index, scorer_id.to_string()))
            .copied()
    }

    /// Scorers in id order.
    pub fn scorers(&self) -> Vec<ScorerDescriptor> {
        self.polarities
            .iter()
            .map(|(id, &polarity)| ScorerDescriptor {
                scorer_id: id.clone(),
                polarity,
                origin: self.origins[id],
            })
            .collect()
    }

    /// Raw scores of one scorer over every rung of `ladder`, in rung order.
    pub fn ladder_scores(&self, ladder: &QualityLadder, scorer_id: &str) -> Result<Vec<f64>> {
        ladder
            .rung_indices()
            .map(|r| {
                self.get(&ladder.ladder_id, r, scorer_id)
                    .ok_or_else(|| Error::MissingScore {
                        ladder: ladder.ladder_id.clone(),
                        rung: r,
                        scorer: scorer_id.to_string(),
                    })
            })
            .collect()
    }

    /// Every (ladder, scorer) pair present must cover the full set of rungs
    /// seen for that ladder.
    pub fn check_complete(&self) -> Result<()> {
        let mut rungs: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
        let mut pairs: BTreeMap<(&str, &str), BTreeSet<u32>> = BTreeMap::new();
        for (ladder, rung, scorer) in self.entries.keys() {
            rungs.entry(ladder).or_default().insert(*rung);
            pairs.entry((ladder, scorer)).or_default().insert(*rung);
        }
        for ((ladder, scorer), have) in &pairs {
            if let Some(&missing) = rungs[ladder].difference(have).next() {
                return Err(Error::MissingScore {
                    ladder: ladder.to_string(),
                    rung: missing,
                    scorer: scorer.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let rows = self.entries.iter().map(|((l, r, s), v)| {
            vec![
                l.clone(),
                r.to_string(),
                s.clone(),
                fmt_real(*v),
                self.polarities[s].to_string(),
            ]
        });
        write_table(path, &SCORE_COLUMNS, rows)
    }
}

const SCORE_COLUMNS: [&str; 5] = ["ladder_id", "rung_index", "scorer_id", "score", "polarity"];

/// Parses a score-table file and checks ladder coverage.
pub fn ingest_external_scores(path: &Path) -> Result<ScoreTable> {
    let table = read_table(path, &SCORE_COLUMNS)?;
    let mut scores = ScoreTable::default();
    for row in table.rows() {
        let ladder = row.nonempty(0, "ladder_id")?;
        let rung: u32 = row.parse(1, "rung_index")?;
        let scorer = row.nonempty(2, "scorer_id")?;
        let score = row.finite(3, "score")?;
        let polarity: Polarity = row.parse(4, "polarity")?;
        scores
            .insert(&ladder, rung, &scorer, score, polarity)
            .map_err(|e| row.error(e.to_string()))?;
    }
    scores.check_complete()?;
    Ok(scores)
}
