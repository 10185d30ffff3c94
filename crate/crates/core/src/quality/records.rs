use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Human,
    Machine,
}

impl fmt::Display for SubjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubjectKind::Human => "human",
            SubjectKind::Machine => "machine",
        })
    }
}

impl FromStr for SubjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" => Ok(SubjectKind::Human),
            "machine" => Ok(SubjectKind::Machine),
            other => Err(Error::InvalidArgument(format!("unknown subject kind {other:?}"))),
        }
    }
}

/// Which ratio a curve holds: SUR over humans, SMR over machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RatioKind {
    #[serde(rename = "SUR")]
    Sur,
    #[serde(rename = "SMR")]
    Smr,
}

impl RatioKind {
    pub fn subject_kind(self) -> SubjectKind {
        match self {
            RatioKind::Sur => SubjectKind::Human,
            RatioKind::Smr => SubjectKind::Machine,
        }
    }
}

impl fmt::Display for RatioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatioKind::Sur => "SUR",
            RatioKind::Smr => "SMR",
        })
    }
}

impl FromStr for RatioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SUR" => Ok(RatioKind::Sur),
            "SMR" => Ok(RatioKind::Smr),
            other => Err(Error::InvalidArgument(format!("unknown ratio kind {other:?}"))),
        }
    }
}

/// One subject's verdict on one rung: `satisfied` is true when the subject's
/// perception of the compressed rung matches its perception of the original.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SatisfactionRecord {
    pub ladder_id: String,
    pub rung_index: u32,
    pub subject_id: String,
    pub subject_kind: SubjectKind,
    pub satisfied: bool,
}
