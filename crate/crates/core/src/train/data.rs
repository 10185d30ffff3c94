use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::RasterImage;
use crate::model::{BackboneConfig, Target};
use crate::quality::{QualityLadder, RatioCurve};
use crate::tensor::Tensor;

/// Per-rung regression targets keyed by `(ladder_id, rung_index)`.
pub type Labels = BTreeMap<(String, u32), Target>;

/// Per-rung scalar values keyed by `(ladder_id, rung_index)`.
pub type RungValues = BTreeMap<(String, u32), f64>;

pub fn curve_values(curves: &[RatioCurve]) -> RungValues {
    curves
        .iter()
        .flat_map(|c| c.values.iter().map(move |(r, n)| ((c.ladder_id.clone(), *r), n.ratio())))
        .collect()
}

/// Combines optional SUR-like and SMR value maps into targets over the union
/// of their keys.
pub fn merge_labels(sur: Option<&RungValues>, smr: Option<&RungValues>) -> Labels {
    let mut out = Labels::new();
    for (key, &v) in sur.into_iter().flatten() {
        out.entry(key.clone()).or_default().sur = Some(v);
    }
    for (key, &v) in smr.into_iter().flatten() {
        out.entry(key.clone()).or_default().smr = Some(v);
    }
    out
}

/// One compressed rung paired with its (shared) original.
#[derive(Debug, Clone)]
pub struct Sample {
    pub ladder_id: String,
    pub rung_index: u32,
    pub original: Arc<Tensor>,
    pub compressed: Arc<Tensor>,
    pub target: Target,
}

/// Rung samples ordered by `(ladder_id, rung_index)`.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(mut samples: Vec<Sample>) -> Result<Self> {
        samples.sort_by(|a, b| (&a.ladder_id, a.rung_index).cmp(&(&b.ladder_id, b.rung_index)));
        if let Some(w) = samples
            .windows(2)
            .find(|w| w[0].ladder_id == w[1].ladder_id && w[0].rung_index == w[1].rung_index)
        {
            return Err(Error::DuplicateEntry(format!(
                "sample ({}, {})",
                w[0].ladder_id, w[0].rung_index
            )));
        }
        Ok(Dataset { samples })
    }

    /// Builds samples from decoded images; `rungs[i][k]` is rung `k + 1` of
    /// `ladders[i]`. Images are resized to the backbone input and normalized.
    pub fn from_images(
        ladders: &[QualityLadder],
        originals: &[RasterImage],
        rungs: &[Vec<RasterImage>],
        labels: &Labels,
        backbone: &BackboneConfig,
        exec: Exec,
    ) -> Result<Self> {
        let (h, w) = backbone.input_size;
        let prep = |img: &RasterImage| Arc::new(img.resized(w, h).to_tensor(&backbone.mean, &backbone.std));
        let per_ladder = exec.map_indexed(ladders.len(), |i| {
            let ladder = &ladders[i];
            let original = prep(&originals[i]);
            ladder
                .rungs
                .iter()
                .zip(&rungs[i])
                .map(|(r, img)| Sample {
                    ladder_id: ladder.ladder_id.clone(),
                    rung_index: r.rung_index,
                    original: original.clone(),
                    compressed: prep(img),
                    target: labels
                        .get(&(ladder.ladder_id.clone(), r.rung_index))
                        .copied()
                        .unwrap_or_default(),
                })
                .collect::<Vec<_>>()
        });
        Dataset::new(per_ladder.into_iter().flatten().collect())
    }

    /// Loads every image referenced by `ladders`, resolving relative refs
    /// against `base`.
    pub fn load(
        ladders: &[QualityLadder],
        base: &Path,
        labels: &Labels,
        backbone: &BackboneConfig,
        exec: Exec,
    ) -> Result<Self> {
        let loaded = exec.map(ladders, |l| -> Result<(RasterImage, Vec<RasterImage>)> {
            let original = RasterImage::load(&base.join(&l.original_ref))?;
            let rungs = l
                .rungs
                .iter()
                .map(|r| RasterImage::load(&base.join(&r.image_ref)))
                .collect::<Result<Vec<_>>>()?;
            Ok((original, rungs))
        });
        let mut originals = Vec::with_capacity(ladders.len());
        let mut rungs = Vec::with_capacity(ladders.len());
        for item in loaded {
            let (o, r) = item?;
            originals.push(o);
            rungs.push(r);
        }
        Dataset::from_images(ladders, &originals, &rungs, labels, backbone, exec)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn ladder_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&String> = self.samples.iter().map(|s| &s.ladder_id).collect();
        ids.into_iter().cloned().collect()
    }

    /// Samples whose ladder is listed in `ids`.
    pub fn subset(&self, ids: &[String]) -> Dataset {
        let keep: BTreeSet<&String> = ids.iter().collect();
        Dataset {
            samples: self.samples.iter().filter(|s| keep.contains(&s.ladder_id)).cloned().collect(),
        }
    }

    /// Same images with targets replaced from `labels` (absent keys clear the target).
    pub fn relabel(&self, labels: &Labels) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    target: labels
                        .get(&(s.ladder_id.clone(), s.rung_index))
                        .copied()
                        .unwrap_or_default(),
                    ..s.clone()
                })
                .collect(),
        }
    }
}
