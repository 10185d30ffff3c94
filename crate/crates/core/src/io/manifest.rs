//! Ladder manifest: a JSON document `{"ladders": [...]}`; image refs are
//! resolved relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quality::QualityLadder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub ladders: Vec<QualityLadder>,
}

impl Manifest {
    /// Sorts each ladder's rungs by index, then validates.
    pub fn new(mut ladders: Vec<QualityLadder>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for l in &mut ladders {
            l.rungs.sort_by_key(|r| r.rung_index);
            l.validate()?;
            if !seen.insert(l.ladder_id.as_str()) {
                return Err(Error::DuplicateEntry(format!("ladder {}", l.ladder_id)));
            }
        }
        Ok(Manifest { ladders })
    }

    pub fn ladder(&self, id: &str) -> Option<&QualityLadder> {
        self.ladders.iter().find(|l| l.ladder_id == id)
    }

    pub fn ladder_ids(&self) -> Vec<String> {
        self.ladders.iter().map(|l| l.ladder_id.clone()).collect()
    }

    /// Ladders whose id is in `ids`, keeping manifest order.
    pub fn select(&self, ids: &[String]) -> Vec<QualityLadder> {
        let keep: BTreeSet<&String> = ids.iter().collect();
        self.ladders.iter().filter(|l| keep.contains(&l.ladder_id)).cloned().collect()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    Manifest::new(raw.ladders).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    super::report::write_json(path, manifest)
}

/// Directory against which the manifest's relative image refs resolve.
pub fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::Rung;

    fn ladder(id: &str) -> QualityLadder {
        let rungs = (1..=2)
            .map(|k| Rung {
                rung_index: k,
                q_param: 10 * k as i64,
                image_ref: format!("{id}_{k}.png"),
            })
            .collect();
        QualityLadder::new(id, format!("{id}.png"), "jpeg", rungs).unwrap()
    }

    #[test]
    fn roundtrip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = Manifest::new(vec![ladder("a"), ladder("b")]).unwrap();
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
        assert!(Manifest::new(vec![ladder("a"), ladder("a")]).is_err());
    }

    #[test]
    fn invalid_ladder_rejected_with_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"ladders":[{"ladder_id":"x","original_ref":"o.png","codec_tag":"jpeg","rungs":[
                {"rung_index":1,"q_param":20,"image_ref":"1.png"},
                {"rung_index":2,"q_param":10,"image_ref":"2.png"}]}]}"#,
        )
        .unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("m.json") && err.contains("q_param"), "{err}");
        std::fs::write(&path, "{\"ladders\": [").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Parse { .. })));
    }
}
