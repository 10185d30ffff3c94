use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub rung_index: u32,
    pub q_param: i64,
    pub image_ref: String,
}

/// An original image and its compressed versions, ordered so that quality
/// degrades as `rung_index` grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLadder {
    pub ladder_id: String,
    pub original_ref: String,
    #[serde(default)]
    pub codec_tag: String,
    pub rungs: Vec<Rung>,
}

impl QualityLadder {
    /// Builds a ladder, sorting rungs by index and validating the invariants.
    pub fn new(
        ladder_id: impl Into<String>,
        original_ref: impl Into<String>,
        codec_tag: impl Into<String>,
        mut rungs: Vec<Rung>,
    ) -> Result<Self> {
        rungs.sort_by_key(|r| r.rung_index);
        let ladder = QualityLadder {
            ladder_id: ladder_id.into(),
            original_ref: original_ref.into(),
            codec_tag: codec_tag.into(),
            rungs,
        };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidLadder {
                ladder: self.ladder_id.clone(),
                reason,
            })
        };
        if self.rungs.is_empty() {
            return fail("ladder has no rungs".into());
        }
        for (pos, rung) in self.rungs.iter().enumerate() {
            let expected = pos as u32 + 1;
            if rung.rung_index != expected {
                return fail(format!(
                    "rung indices must be 1..K without gaps; found {} at position {}",
                    rung.rung_index, expected
                ));
            }
            if rung.image_ref == self.original_ref {
                return fail(format!("rung {} reuses the original image", rung.rung_index));
            }
        }
        for pair in self.rungs.windows(2) {
            if pair[1].q_param <= pair[0].q_param {
                return fail(format!(
                    "q_param must increase with rung index ({} at rung {}, {} at rung {})",
                    pair[0].q_param, pair[0].rung_index, pair[1].q_param, pair[1].rung_index
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rungs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rungs.is_empty()
    }

    pub fn rung_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.rungs.iter().map(|r| r.rung_index)
    }

    pub fn rung(&self, rung_index: u32) -> Option<&Rung> {
        self.rungs.get(rung_index.checked_sub(1)? as usize)
    }
}
